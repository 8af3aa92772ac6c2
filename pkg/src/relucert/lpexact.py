"""Exact rational linear programming.

The engine is a two-phase primal simplex on standard form
``min f·y  s.t.  M y = g, y >= 0`` with Bland's rule.  The tableau is kept
fraction-free (integer pivoting): every stored entry equals the true tableau
entry times the current basis determinant ``D``, so each pivot is a pair of
integer multiplications and one exact integer division.

``solve_max`` treats ``max c·v s.t. Av <= b`` through its dual
``min b·y s.t. Aᵀy = c, y >= 0``: basic dual solutions are returned as
certificates, and the primal point is read off the simplex multipliers.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from math import lcm
from typing import Sequence, Union

from .polyhedron import LinearStore
from .ratcore import ZERO, RatVec, dot, mat_vec, transpose, vec_mat

DEFAULT_MAX_PIVOTS = int(os.environ.get("RELUCERT_MAX_PIVOTS", "1000000"))


class IterationLimit(RuntimeError):
    pass


@dataclass(frozen=True)
class StdOptimal:
    value: Fraction
    x: RatVec
    multipliers: RatVec
    basis: tuple[int, ...]


@dataclass(frozen=True)
class StdInfeasible:
    """``M y = g, y >= 0`` is empty; ``mᵀM <= 0`` and ``mᵀg > 0``."""

    certificate: RatVec


@dataclass(frozen=True)
class StdUnbounded:
    """``M w = 0, w >= 0, f·w < 0``."""

    direction: RatVec


StdOutcome = Union[StdOptimal, StdInfeasible, StdUnbounded]


class _Tableau:
    def __init__(self, M, g, max_pivots):
        self.m = m = len(M)
        self.n = n = len(M[0]) if M else 0
        self.max_pivots = max_pivots
        self.pivots = 0
        # row k of the integer system is row_scale[k] * (original row k)
        self.row_scale = []
        self.T = []
        for k in range(m):
            row = list(M[k]) + [g[k]]
            den = reduce(lcm, (x.denominator for x in row), 1)
            s = -den if g[k] < 0 else den
            self.row_scale.append(s)
            ints = [int(x * s) for x in row]
            art = [0] * m
            art[k] = 1
            self.T.append(ints[:n] + art + [ints[n]])
        self.D = 1
        self.basis = list(range(n, n + m))
        self.obj = [0] * (n + m + 1)

    @property
    def rhs(self):
        return self.n + self.m

    def set_costs(self, costs):
        """Install an objective.  ``costs`` has one entry per column (n + m)."""
        den = reduce(lcm, (Fraction(c).denominator for c in costs), 1)
        self.costs = list(costs)
        ic = [int(Fraction(c) * den) for c in costs]
        obj = [self.D * c for c in ic] + [0]
        for i, bi in enumerate(self.basis):
            cb = ic[bi]
            if cb:
                Ti = self.T[i]
                for j in range(len(obj)):
                    if Ti[j]:
                        obj[j] -= cb * Ti[j]
        self.obj = obj
        self.cost_den = den

    def pivot(self, r, c):
        self.pivots += 1
        if self.pivots > self.max_pivots:
            raise IterationLimit(f"more than {self.max_pivots} pivots")
        T, D = self.T, self.D
        Tr = T[r]
        p = Tr[c]
        nz = [j for j, a in enumerate(Tr) if a]
        for i in range(self.m):
            if i == r:
                continue
            Ti = T[i]
            q = Ti[c]
            if q == 0:
                if p != D:
                    T[i] = [(a * p) // D for a in Ti]
                continue
            new = [(a * p) // D for a in Ti] if p != D else Ti[:]
            for j in nz:
                new[j] = (Ti[j] * p - q * Tr[j]) // D
            T[i] = new
        obj = self.obj
        q = obj[c]
        new = [(a * p) // D for a in obj] if p != D else obj[:]
        if q:
            for j in nz:
                new[j] = (obj[j] * p - q * Tr[j]) // D
        self.obj = new
        self.basis[r] = c
        self.D = p
        if p < 0:
            self.D = -p
            self.T = [[-a for a in row] for row in self.T]
            self.obj = [-a for a in self.obj]

    def run(self, allowed):
        """Bland's rule until optimal.  Returns the unbounded column or None."""
        rhs = self.rhs
        while True:
            obj = self.obj
            c = next((j for j in allowed if obj[j] < 0), None)
            if c is None:
                return None
            best = None
            for i in range(self.m):
                a = self.T[i][c]
                if a > 0:
                    ratio = (self.T[i][rhs], a)
                    if best is None:
                        best = (i, ratio)
                        continue
                    bi, (bn, bd) = best
                    lhs, rhs_ = ratio[0] * bd, bn * a
                    if lhs < rhs_ or (lhs == rhs_ and self.basis[i] < self.basis[bi]):
                        best = (i, ratio)
            if best is None:
                return c
            self.pivot(best[0], c)

    def value(self) -> Fraction:
        return Fraction(-self.obj[self.rhs], self.D * self.cost_den)

    def multipliers(self) -> RatVec:
        """Simplex multipliers ``c_Bᵀ B⁻¹`` mapped back to the unscaled rows."""
        n, D = self.n, self.D
        out = []
        for k in range(self.m):
            acc = sum(
                (self.costs[bi] * self.T[i][n + k] for i, bi in enumerate(self.basis) if self.costs[bi]),
                Fraction(0),
            )
            out.append(Fraction(acc) * self.row_scale[k] / D)
        return tuple(out)

    def primal(self) -> RatVec:
        x = [ZERO] * self.n
        for i, bi in enumerate(self.basis):
            if bi < self.n:
                x[bi] = Fraction(self.T[i][self.rhs], self.D)
        return tuple(x)


def solve_standard(M: Sequence[Sequence[Fraction]], g: Sequence[Fraction], f: Sequence[Fraction],
                   max_pivots: int = DEFAULT_MAX_PIVOTS) -> StdOutcome:
    """Solve ``min f·y s.t. M y = g, y >= 0`` exactly.

    ``M`` must have ``len(f)`` columns (an empty ``M`` is allowed).
    """
    n = len(f)
    for row in M:
        if len(row) != n:
            raise ValueError("constraint matrix width does not match objective length")
    tab = _Tableau(M, g, max_pivots)
    m = tab.m
    tab.n = n
    real = range(n)

    tab.set_costs([0] * n + [1] * m)
    tab.run(range(n + m))
    if tab.value() > 0:
        return StdInfeasible(tab.multipliers())

    # drive zero-level artificials out where a real column allows it
    for i in range(m):
        if tab.basis[i] >= n:
            c = next((j for j in real if tab.T[i][j] != 0), None)
            if c is not None:
                tab.pivot(i, c)

    tab.set_costs(list(f) + [0] * m)
    c = tab.run(real)
    if c is not None:
        w = [ZERO] * n
        w[c] = Fraction(1)
        for i, bi in enumerate(tab.basis):
            if bi < n:
                w[bi] = Fraction(-tab.T[i][c], tab.D)
        return StdUnbounded(tuple(w))
    return StdOptimal(tab.value(), tab.primal(), tab.multipliers(),
                      tuple(b for b in tab.basis if b < n))


# --- LPs over constraint stores ---------------------------------------------

@dataclass(frozen=True)
class Optimal:
    value: Fraction
    primal: RatVec
    dual: RatVec


@dataclass(frozen=True)
class Infeasible:
    farkas: RatVec


@dataclass(frozen=True)
class Unbounded:
    ray: RatVec


LpOutcome = Union[Optimal, Infeasible, Unbounded]


@dataclass(frozen=True)
class LpProblem:
    store: LinearStore
    objective: RatVec

    def __post_init__(self):
        if len(self.objective) != self.store.dim:
            raise ValueError("objective length differs from store dimension")


def _solve_dual(store: LinearStore, c: Sequence[Fraction], max_pivots: int) -> StdOutcome:
    return solve_standard(transpose(store.A, store.dim), tuple(c), store.b, max_pivots)


def solve_max(p: LpProblem | LinearStore, objective: Sequence[Fraction] | None = None,
              max_pivots: int = DEFAULT_MAX_PIVOTS) -> LpOutcome:
    """Maximize ``objective · v`` over the store.

    Accepts either an ``LpProblem`` or ``(store, objective)``.
    """
    if isinstance(p, LpProblem):
        store, c = p.store, p.objective
    else:
        store, c = p, tuple(objective)
        if len(c) != store.dim:
            raise ValueError("objective length differs from store dimension")
    res = _solve_dual(store, c, max_pivots)
    if isinstance(res, StdOptimal):
        return Optimal(res.value, res.multipliers, res.x)
    if isinstance(res, StdUnbounded):
        return Infeasible(res.direction)
    # dual infeasible: a ray exists, but the primal may still be empty
    pt = feasible(store, max_pivots)
    if isinstance(pt, Farkas):
        return Infeasible(pt.certificate)
    return Unbounded(res.certificate)


@dataclass(frozen=True)
class Point:
    point: RatVec


@dataclass(frozen=True)
class Farkas:
    certificate: RatVec


def feasible(store: LinearStore, max_pivots: int = DEFAULT_MAX_PIVOTS) -> Point | Farkas:
    res = _solve_dual(store, (ZERO,) * store.dim, max_pivots)
    if isinstance(res, StdUnbounded):
        return Farkas(res.direction)
    assert isinstance(res, StdOptimal)
    return Point(res.multipliers)


def check_outcome(store: LinearStore, c: Sequence[Fraction], out: LpOutcome) -> None:
    """Assert the defining identities of an outcome.  Raises AssertionError."""
    A, b, d = store.A, store.b, store.dim
    if isinstance(out, Optimal):
        assert all(r.satisfied_by(out.primal) for r in store.rows), "primal infeasible"
        assert all(y >= 0 for y in out.dual), "negative dual"
        assert vec_mat(out.dual, A, d) == tuple(c), "dualᵀA != c"
        assert dot(out.dual, b) == out.value == dot(c, out.primal), "duality gap"
    elif isinstance(out, Infeasible):
        y = out.farkas
        assert all(v >= 0 for v in y) and not any(vec_mat(y, A, d)) and dot(y, b) < 0, "bad farkas"
    else:
        assert all(x <= 0 for x in mat_vec(A, out.ray)) and dot(c, out.ray) > 0, "bad ray"
