"""Constraint stores ``{v : Av <= b}`` and operations on them.

Every row is kept in ``<=`` orientation; an equality is two opposing rows.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .ratcore import (
    ZERO,
    RatVec,
    dot,
    format_rational,
    parse_rational,
    primitive_integer_form,
    rat,
    vec,
)

DEFAULT_FM_ROW_CEILING = int(os.environ.get("RELUCERT_FM_ROW_CEILING", "20000"))


class StoreError(ValueError):
    pass


class FMCeilingExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class LinRow:
    """The inequality ``coeffs · v <= rhs``."""

    coeffs: RatVec
    rhs: Fraction

    def __post_init__(self):
        object.__setattr__(self, "coeffs", vec(self.coeffs))
        object.__setattr__(self, "rhs", rat(self.rhs))

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    def satisfied_by(self, v: Sequence[Fraction]) -> bool:
        return dot(self.coeffs, v) <= self.rhs

    def negated_bound(self) -> LinRow:
        """The opposite orientation ``-coeffs · v <= -rhs``."""
        return LinRow(tuple(-a for a in self.coeffs), -self.rhs)

    def is_trivial(self) -> bool:
        return not any(self.coeffs)


@dataclass(frozen=True)
class LinearStore:
    var_names: tuple[str, ...]
    rows: tuple[LinRow, ...] = field(default=())

    def __post_init__(self):
        names = tuple(self.var_names)
        if len(set(names)) != len(names):
            raise StoreError("duplicate variable names")
        rows = tuple(self.rows)
        for r in rows:
            if r.dim != len(names):
                raise StoreError(f"row has {r.dim} coefficients, store has {len(names)} variables")
        object.__setattr__(self, "var_names", names)
        object.__setattr__(self, "rows", rows)

    @property
    def dim(self) -> int:
        return len(self.var_names)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def A(self) -> tuple[RatVec, ...]:
        return tuple(r.coeffs for r in self.rows)

    @property
    def b(self) -> RatVec:
        return tuple(r.rhs for r in self.rows)

    def index(self, name: str) -> int:
        try:
            return self.var_names.index(name)
        except ValueError:
            raise StoreError(f"unknown variable {name!r}") from None

    def with_rows(self, extra: Iterable[LinRow]) -> LinearStore:
        return LinearStore(self.var_names, self.rows + tuple(extra))

    def row_from_terms(self, terms: dict[str, object], rhs) -> LinRow:
        """Build a row from ``{name: coeff}``; names not mentioned get 0."""
        coeffs = [ZERO] * self.dim
        for name, c in terms.items():
            coeffs[self.index(name)] += rat(c)
        return LinRow(tuple(coeffs), rat(rhs))


def equality_pair(coeffs: Sequence[Fraction], rhs) -> tuple[LinRow, LinRow]:
    row = LinRow(coeffs, rhs)
    return row, row.negated_bound()


def prim_le_row(row: LinRow) -> LinRow:
    """Integer primitive representative of the same halfspace (no sign flip)."""
    w, _ = primitive_integer_form(row.coeffs + (row.rhs,))
    return LinRow(w[:-1], w[-1])


def canonicalize_store(s: LinearStore) -> LinearStore:
    return LinearStore(s.var_names, tuple(prim_le_row(r) for r in s.rows))


def contains_point(s: LinearStore, v: Sequence[Fraction]) -> bool:
    if len(v) != s.dim:
        raise StoreError(f"point has {len(v)} coordinates, store has {s.dim} variables")
    return all(r.satisfied_by(v) for r in s.rows)


def fm_eliminate(s: LinearStore, var: str, max_rows: int = DEFAULT_FM_ROW_CEILING) -> LinearStore:
    """Project out ``var`` by Fourier-Motzkin elimination.

    Rows not mentioning ``var`` come first (store order), then every
    positive/negative pairing in store order.  Output rows are primitive and
    deduplicated.  ``0 <= beta`` rows with ``beta >= 0`` are dropped, while
    ``0 <= beta`` with ``beta < 0`` is kept as an explicit infeasibility
    witness.
    """
    k = s.index(var)
    pos, neg, out = [], [], []
    for r in s.rows:
        a = r.coeffs[k]
        if a > 0:
            pos.append(r)
        elif a < 0:
            neg.append(r)
        else:
            out.append(r)
    if len(out) + len(pos) * len(neg) > max_rows:
        raise FMCeilingExceeded(
            f"eliminating {var!r} would produce {len(out) + len(pos) * len(neg)} rows (ceiling {max_rows})"
        )
    for rp in pos:
        ap = rp.coeffs[k]
        for rn in neg:
            an = -rn.coeffs[k]
            coeffs = tuple(an * x + ap * y for x, y in zip(rp.coeffs, rn.coeffs))
            out.append(LinRow(coeffs, an * rp.rhs + ap * rn.rhs))

    names = s.var_names[:k] + s.var_names[k + 1:]
    seen = set()
    rows = []
    for r in out:
        r = prim_le_row(LinRow(r.coeffs[:k] + r.coeffs[k + 1:], r.rhs))
        if r.is_trivial() and r.rhs >= 0:
            continue
        if r in seen:
            continue
        seen.add(r)
        rows.append(r)
    return LinearStore(names, tuple(rows))


def remove_redundant(s: LinearStore) -> LinearStore:
    """Drop rows entailed by the remaining ones, scanning in store order.

    Row ``i`` is redundant iff ``max{a_i·v : other kept rows} <= b_i``.  An
    unbounded maximum keeps the row; an infeasible remainder makes it
    redundant, since the feasible set is empty either way.
    """
    from .lpexact import Infeasible, Optimal, solve_max

    kept = list(s.rows)
    i = 0
    while i < len(kept):
        row = kept[i]
        others = LinearStore(s.var_names, tuple(kept[:i] + kept[i + 1:]))
        res = solve_max(others, row.coeffs)
        if isinstance(res, Infeasible) or (isinstance(res, Optimal) and res.value <= row.rhs):
            del kept[i]
        else:
            i += 1
    return LinearStore(s.var_names, tuple(kept))


# --- text format -----------------------------------------------------------

def format_row(row: LinRow) -> str:
    return " ".join(format_rational(a) for a in row.coeffs) + " <= " + format_rational(row.rhs)


def dump_store(s: LinearStore, binaries: Sequence[str] = ()) -> str:
    lines = ["vars: " + " ".join(s.var_names)]
    if binaries:
        lines.append("binaries: " + " ".join(binaries))
    lines.extend(format_row(r) for r in s.rows)
    return "\n".join(lines) + "\n"


def parse_row(line: str, dim: int | None = None) -> LinRow:
    if "<=" not in line:
        raise StoreError(f"row without '<=': {line!r}")
    lhs, rhs = line.split("<=", 1)
    coeffs = tuple(parse_rational(t) for t in lhs.split())
    if dim is not None and len(coeffs) != dim:
        raise StoreError(f"row has {len(coeffs)} coefficients, expected {dim}: {line!r}")
    return LinRow(coeffs, parse_rational(rhs))


def parse_store(text: str) -> tuple[LinearStore, tuple[str, ...]]:
    """Parse the store text format.  Returns ``(store, binaries)``."""
    names = None
    binaries: tuple[str, ...] = ()
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("vars:"):
                if names is not None:
                    raise StoreError("duplicate 'vars:' header")
                names = tuple(line[5:].split())
            elif line.startswith("binaries:"):
                binaries = tuple(line[9:].split())
            else:
                if names is None:
                    raise StoreError("row before 'vars:' header")
                rows.append(parse_row(line, len(names)))
        except ValueError as e:
            raise StoreError(f"line {lineno}: {e}") from None
    if names is None:
        raise StoreError("missing 'vars:' header")
    store = LinearStore(names, tuple(rows))
    for name in binaries:
        store.index(name)
    return store, binaries
