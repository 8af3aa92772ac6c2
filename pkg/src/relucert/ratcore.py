"""Exact rational scalars, vectors and matrices.

``Fraction`` already keeps every value in lowest terms with a positive
denominator, so it serves directly as the scalar type.  Vectors and matrices
are plain tuples of ``Fraction`` so that they are immutable and hashable.
"""
from __future__ import annotations

import re
from fractions import Fraction
from functools import reduce
from math import gcd, lcm
from typing import Iterable, Sequence, Tuple

Rational = Fraction
RatVec = Tuple[Fraction, ...]
RatMat = Tuple[RatVec, ...]

ZERO = Fraction(0)
ONE = Fraction(1)

_RATIONAL_RE = re.compile(r"^(-?)(\d+)(?:/(\d+))?$")


class RationalSyntaxError(ValueError):
    pass


def parse_rational(text: str) -> Fraction:
    """Parse ``[-]p[/q]``.  Non-reduced input such as ``2/4`` is accepted."""
    m = _RATIONAL_RE.match(text.strip())
    if m is None:
        raise RationalSyntaxError(f"not a rational: {text!r}")
    sign, num, den = m.groups()
    q = int(den) if den is not None else 1
    if q == 0:
        raise RationalSyntaxError(f"zero denominator: {text!r}")
    p = int(num)
    return Fraction(-p if sign else p, q)


def is_canonical_text(text: str) -> bool:
    """True when ``text`` is already the canonical rendering of its value."""
    try:
        return format_rational(parse_rational(text)) == text.strip()
    except RationalSyntaxError:
        return False


def format_rational(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def rat(x) -> Fraction:
    """Coerce ints, Fractions and ``"p/q"`` strings.  Floats are refused."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("bool is not a rational")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return parse_rational(x)
    raise TypeError(f"cannot convert {type(x).__name__} to an exact rational")


def vec(xs: Iterable) -> RatVec:
    return tuple(rat(x) for x in xs)


def mat(rows: Iterable[Iterable]) -> RatMat:
    m = tuple(vec(r) for r in rows)
    if m and len({len(r) for r in m}) != 1:
        raise ValueError("ragged matrix")
    return m


def zeros(n: int) -> RatVec:
    return (ZERO,) * n


def unit(n: int, k: int) -> RatVec:
    return tuple(ONE if i == k else ZERO for i in range(n))


def identity(n: int) -> RatMat:
    return tuple(unit(n, k) for k in range(n))


def dot(u: Sequence[Fraction], v: Sequence[Fraction]) -> Fraction:
    if len(u) != len(v):
        raise ValueError(f"length mismatch: {len(u)} vs {len(v)}")
    return sum((a * b for a, b in zip(u, v) if a and b), ZERO)


def vec_mat(y: Sequence[Fraction], A: Sequence[Sequence[Fraction]], ncols: int | None = None) -> RatVec:
    """Row vector times matrix, ``yᵀA``.

    ``ncols`` is only needed when ``A`` has no rows.
    """
    if len(y) != len(A):
        raise ValueError(f"dimension mismatch: len(y)={len(y)} but A has {len(A)} rows")
    if ncols is None:
        if not A:
            raise ValueError("ncols required for a matrix with no rows")
        ncols = len(A[0])
    out = [ZERO] * ncols
    for yi, row in zip(y, A):
        if len(row) != ncols:
            raise ValueError("ragged matrix")
        if not yi:
            continue
        for j, a in enumerate(row):
            if a:
                out[j] += yi * a
    return tuple(out)


def mat_vec(A: Sequence[Sequence[Fraction]], v: Sequence[Fraction]) -> RatVec:
    return tuple(dot(row, v) for row in A)


def add(u: Sequence[Fraction], v: Sequence[Fraction]) -> RatVec:
    if len(u) != len(v):
        raise ValueError("length mismatch")
    return tuple(a + b for a, b in zip(u, v))


def scale(lam: Fraction, v: Sequence[Fraction]) -> RatVec:
    return tuple(lam * a for a in v)


def transpose(A: Sequence[Sequence[Fraction]], ncols: int) -> RatMat:
    return tuple(tuple(row[j] for row in A) for j in range(ncols))


def primitive_integer_form(v: Sequence[Fraction]) -> tuple[RatVec, Fraction]:
    """Return ``(w, lam)`` with ``w = lam * v`` a primitive integer vector.

    ``lam`` is positive, so signs are kept.  The zero vector maps to itself
    with ``lam = 1``.
    """
    v = tuple(v)
    if not any(v):
        return v, ONE
    den = reduce(lcm, (x.denominator for x in v), 1)
    g = reduce(gcd, (abs(x.numerator) * (den // x.denominator) for x in v), 0)
    lam = Fraction(den, g)
    return tuple(x * lam for x in v), lam


def format_vec(v: Sequence[Fraction]) -> str:
    return "(" + ", ".join(format_rational(x) for x in v) + ")"
