"""Farkas and entailment certificates: checking, normalization, derivation.

Certificates are stored sparsely as ``((row_index, value), ...)`` with
0-based, strictly increasing row indices and nonzero values.  Rejection
messages report coordinates and rows 1-based.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

from .lpexact import Infeasible, Optimal, StdOptimal, solve_max, solve_standard
from .polyhedron import LinearStore
from .ratcore import (
    ZERO,
    RatVec,
    dot,
    format_rational,
    format_vec,
    parse_rational,
    primitive_integer_form,
    rat,
    vec,
    vec_mat,
)

Multipliers = tuple[tuple[int, Fraction], ...]


class CertificateError(ValueError):
    """Malformed certificate or certificate/store mismatch."""


def sparse(pairs: Iterable[tuple[int, object]]) -> Multipliers:
    """Validate and freeze sparse multipliers, dropping explicit zeros."""
    out = []
    last = -1
    for i, v in pairs:
        if not isinstance(i, int) or i < 0:
            raise CertificateError(f"bad row index {i!r}")
        if i <= last:
            raise CertificateError("row indices must be strictly increasing")
        last = i
        v = rat(v)
        if v:
            out.append((i, v))
    return tuple(out)


def from_dense(y: Sequence) -> Multipliers:
    return sparse(enumerate(y))


def to_dense(mult: Multipliers, p: int) -> RatVec:
    y = [ZERO] * p
    for i, v in mult:
        if i >= p:
            raise CertificateError(f"row index {i} out of range for a store with {p} rows")
        y[i] = v
    return tuple(y)


@dataclass(frozen=True)
class FarkasCert:
    multipliers: Multipliers

    def __post_init__(self):
        object.__setattr__(self, "multipliers", sparse(self.multipliers))

    @classmethod
    def dense(cls, y: Sequence) -> FarkasCert:
        return cls(from_dense(y))

    @property
    def support(self) -> int:
        return len(self.multipliers)


@dataclass(frozen=True)
class EntailCert:
    multipliers: Multipliers
    target_coeffs: RatVec
    target_rhs: Fraction

    def __post_init__(self):
        object.__setattr__(self, "multipliers", sparse(self.multipliers))
        object.__setattr__(self, "target_coeffs", vec(self.target_coeffs))
        object.__setattr__(self, "target_rhs", rat(self.target_rhs))

    @classmethod
    def dense(cls, y: Sequence, c: Sequence, tau) -> EntailCert:
        return cls(from_dense(y), c, tau)

    @property
    def support(self) -> int:
        return len(self.multipliers)


Certificate = Union[FarkasCert, EntailCert]


@dataclass(frozen=True)
class CheckResult:
    """Outcome of a checker.  ``failed`` names the first failing condition."""

    accepted: bool
    failed: str | None = None
    reason: str = ""
    value: Fraction | None = None
    residual: RatVec | None = None
    ytb: Fraction | None = None

    def __bool__(self) -> bool:
        return self.accepted


def _combine(s: LinearStore, mult: Multipliers) -> tuple[RatVec, Fraction]:
    p, d = len(s.rows), s.dim
    acc = [ZERO] * d
    rhs = ZERO
    for i, v in mult:
        if i >= p:
            raise CertificateError(f"row index {i} out of range for a store with {p} rows")
        row = s.rows[i]
        for j, a in enumerate(row.coeffs):
            if a:
                acc[j] += v * a
        rhs += v * row.rhs
    return tuple(acc), rhs


def _negative(mult: Multipliers) -> CheckResult | None:
    for i, v in mult:
        if v < 0:
            return CheckResult(False, "nonnegativity", f"y < 0 at row {i + 1}", value=v)
    return None


def check_farkas(s: LinearStore, cert: FarkasCert) -> CheckResult:
    """Accept iff ``y >= 0``, ``yᵀA = 0`` and ``yᵀb < 0``, checked in that order."""
    yta, ytb = _combine(s, cert.multipliers)
    bad = _negative(cert.multipliers)
    if bad is not None:
        return bad
    for j, a in enumerate(yta):
        if a:
            return CheckResult(False, "combination", f"yTA != 0 at coord {j + 1}", value=a, residual=yta, ytb=ytb)
    if ytb >= 0:
        return CheckResult(False, "rhs", "yTb >= 0", value=ytb, residual=yta, ytb=ytb)
    return CheckResult(True, residual=yta, ytb=ytb)


def check_entail(s: LinearStore, cert: EntailCert) -> CheckResult:
    """Accept iff ``y >= 0``, ``yᵀA = c`` and ``yᵀb <= tau``, checked in that order."""
    c = cert.target_coeffs
    if len(c) != s.dim:
        raise CertificateError(f"target has {len(c)} coefficients, store has {s.dim} variables")
    yta, ytb = _combine(s, cert.multipliers)
    bad = _negative(cert.multipliers)
    if bad is not None:
        return bad
    for j, (a, cj) in enumerate(zip(yta, c)):
        if a != cj:
            return CheckResult(False, "combination", f"yTA != c at coord {j + 1}", value=a - cj,
                               residual=tuple(x - y for x, y in zip(yta, c)), ytb=ytb)
    if ytb > cert.target_rhs:
        return CheckResult(False, "rhs", "yTb > tau", value=ytb, ytb=ytb)
    return CheckResult(True, residual=tuple(ZERO for _ in c), ytb=ytb)


def check(s: LinearStore, cert: Certificate) -> CheckResult:
    if isinstance(cert, FarkasCert):
        return check_farkas(s, cert)
    return check_entail(s, cert)


# --- normalization -------------------------------------------------------------

def _normalize(mult: Multipliers) -> tuple[Multipliers, Fraction]:
    w, lam = primitive_integer_form(tuple(v for _, v in mult))
    return tuple((i, x) for (i, _), x in zip(mult, w)), lam


def norm_farkas(cert: FarkasCert) -> FarkasCert:
    mult, _ = _normalize(cert.multipliers)
    return FarkasCert(mult)


def scale_entail(cert: EntailCert, lam) -> EntailCert:
    lam = rat(lam)
    if lam <= 0:
        raise CertificateError("scale factor must be positive")
    return EntailCert(tuple((i, lam * v) for i, v in cert.multipliers),
                      tuple(lam * a for a in cert.target_coeffs), lam * cert.target_rhs)


def norm_entail(cert: EntailCert) -> EntailCert:
    """Rescale ``(c, tau, y)`` together so that ``y`` is primitive integer."""
    _, lam = _normalize(cert.multipliers)
    return scale_entail(cert, lam)


def conic_combine(c: Sequence[Fraction], tau, y1: Multipliers, y2: Multipliers,
                  alpha, beta) -> EntailCert:
    """``alpha*y1 + beta*y2`` certifies ``(alpha+beta) c·v <= (alpha+beta) tau``."""
    alpha, beta = rat(alpha), rat(beta)
    if alpha < 0 or beta < 0:
        raise CertificateError("conic weights must be nonnegative")
    acc: dict[int, Fraction] = {}
    for w, ys in ((alpha, y1), (beta, y2)):
        for i, v in ys:
            acc[i] = acc.get(i, ZERO) + w * v
    k = alpha + beta
    return EntailCert(tuple(sorted(acc.items())), tuple(k * a for a in c), k * rat(tau))


# --- derivation -------------------------------------------------------------------

@dataclass(frozen=True)
class Derived:
    tau: Fraction
    cert: EntailCert


@dataclass(frozen=True)
class Unbounded:
    pass


@dataclass(frozen=True)
class StoreEmpty:
    farkas: FarkasCert


def derive_entail(s: LinearStore, c: Sequence) -> Union[Derived, Unbounded, StoreEmpty]:
    """Tightest ``tau`` with ``c·v <= tau`` on the store, plus its dual certificate."""
    c = vec(c)
    res = solve_max(s, c)
    if isinstance(res, Optimal):
        cert = EntailCert(from_dense(res.dual), c, res.value)
        assert check_entail(s, cert), "solver dual failed the checker"
        return Derived(res.value, cert)
    if isinstance(res, Infeasible):
        f = FarkasCert.dense(res.farkas)
        assert check_farkas(s, f), "solver Farkas vector failed the checker"
        return StoreEmpty(f)
    return Unbounded()


def sparsify_farkas(s: LinearStore, seed: FarkasCert) -> FarkasCert:
    """Farkas certificate with at most ``d + 1`` nonzeros.

    Solves ``min yᵀb s.t. yᵀA = 0, 1ᵀy = 1, y >= 0`` and returns its basic
    optimal solution.  The seed must itself be a valid certificate; scaled to
    unit sum it proves the auxiliary polytope nonempty.
    """
    result = check_farkas(s, seed)
    if not result:
        raise CertificateError(f"seed certificate rejected: {result.reason}")
    p, d = len(s.rows), s.dim
    y = to_dense(seed.multipliers, p)
    total = sum(y, ZERO)
    yhat = tuple(v / total for v in y)
    M = [tuple(row.coeffs[j] for row in s.rows) for j in range(d)] + [(Fraction(1),) * p]
    g = (ZERO,) * d + (Fraction(1),)
    # scaled seed lies in the auxiliary polytope
    assert all(dot(r, yhat) == gi for r, gi in zip(M, g))
    res = solve_standard(M, g, s.b)
    if not isinstance(res, StdOptimal):
        raise AssertionError(f"auxiliary LP did not reach an optimum: {res!r}")
    out = FarkasCert(from_dense(res.x))
    assert check_farkas(s, out), "sparsified certificate failed the checker"
    assert out.support <= d + 1
    return out


# --- text form -----------------------------------------------------------------

def format_multipliers(mult: Multipliers) -> str:
    return "[" + ", ".join(f"({i}, {format_rational(v)})" for i, v in mult) + "]"


def format_cert(cert: Certificate) -> str:
    if isinstance(cert, FarkasCert):
        return "farkas: " + format_multipliers(cert.multipliers)
    target = " ".join(format_rational(a) for a in cert.target_coeffs)
    return f"entail: target {target}, tau {format_rational(cert.target_rhs)}, " + format_multipliers(cert.multipliers)


_PAIR_RE = re.compile(r"\(\s*(\d+)\s*,\s*([^()\s,]+)\s*\)")


def parse_multipliers(text: str, on_rational=parse_rational) -> Multipliers:
    """Parse ``[(i, p/q), ...]`` or ``dense [v0, v1, ...]``."""
    text = text.strip()
    if text.startswith("dense"):
        body = text[5:].strip()
        if not (body.startswith("[") and body.endswith("]")):
            raise CertificateError(f"malformed dense vector: {text!r}")
        items = [t for t in body[1:-1].split(",") if t.strip()]
        return from_dense([on_rational(t.strip()) for t in items])
    if not (text.startswith("[") and text.endswith("]")):
        raise CertificateError(f"malformed multiplier list: {text!r}")
    body = text[1:-1].strip()
    pairs = []
    pos = 0
    while pos < len(body):
        m = _PAIR_RE.match(body, pos)
        if m is None:
            raise CertificateError(f"malformed multiplier pair near {body[pos:pos + 20]!r}")
        pairs.append((int(m.group(1)), on_rational(m.group(2))))
        pos = m.end()
        rest = body[pos:].lstrip()
        if rest.startswith(","):
            rest = rest[1:].lstrip()
            if not rest:
                raise CertificateError("trailing comma in multiplier list")
        pos = len(body) - len(rest)
    return sparse(pairs)


def parse_cert(text: str, on_rational=parse_rational) -> Certificate:
    text = text.strip()
    try:
        if text.startswith("farkas:"):
            return FarkasCert(parse_multipliers(text[7:], on_rational))
        if text.startswith("entail:"):
            body = text[7:].strip()
            if not body.startswith("target"):
                raise CertificateError("entail certificate must start with 'target'")
            target, rest = body[6:].split(",", 1)
            rest = rest.strip()
            if not rest.startswith("tau"):
                raise CertificateError("missing 'tau'")
            tau, mult = rest[3:].split(",", 1)
            return EntailCert(parse_multipliers(mult, on_rational),
                              tuple(on_rational(t) for t in target.split()), on_rational(tau.strip()))
    except CertificateError:
        raise
    except ValueError as e:
        raise CertificateError(str(e)) from None
    raise CertificateError("certificate must start with 'farkas:' or 'entail:'")


def describe(result: CheckResult) -> str:
    if result.accepted:
        return "ACCEPT"
    extra = f" ({format_rational(result.value)})" if result.value is not None else ""
    res = f" residual {format_vec(result.residual)}" if result.residual is not None and result.failed == "combination" else ""
    return f"REJECT {result.reason}{extra}{res}"
