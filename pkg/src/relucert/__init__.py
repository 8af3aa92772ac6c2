"""Exact polyhedral encodings and rational certificates for ReLU networks."""

__version__ = "0.1.0"
