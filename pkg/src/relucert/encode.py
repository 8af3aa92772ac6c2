"""Polyhedral encodings of ReLU networks.

Per hidden unit with bounds ``l <= s <= u``:

* ``l == u``: ``s = l`` and ``z = relu(l)``.
* ``u <= 0`` / ``l >= 0``: the bound rows plus ``z = 0`` / ``z = s``.
* otherwise the big-M block (with a binary ``d_i_k``) or the triangle hull.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Union

from .lpexact import Farkas, feasible
from .network import (
    DEFAULT_PATTERN_CEILING,
    BoxDomain,
    CeilingExceeded,
    ExtendedSpace,
    PreactivationBounds,
    ReluNetwork,
    Sat,
    Unsat,
    affine_rows,
    box_rows,
    brute_force_verdict,
    forward_exact,
    interval_bounds,
    relu,
    violation_row,
)
from .polyhedron import LinearStore, LinRow, canonicalize_store, dump_store
from .ratcore import ZERO, RatVec, format_rational

ONE = Fraction(1)


class EncodingError(ValueError):
    pass


class EquisatError(AssertionError):
    """The two exhaustive deciders disagree, or a witness breaks exactness."""


@dataclass(frozen=True)
class MixedStore:
    store: LinearStore
    binaries: tuple[str, ...] = field(default=())

    def dump(self) -> str:
        return dump_store(self.store, self.binaries)


def unit_kind(l: Fraction, u: Fraction) -> str:
    if l > u:
        raise EncodingError(f"invalid bounds: l={l} > u={u}")
    if l == u:
        return "fixed"
    if u <= 0:
        return "inactive"
    if l >= 0:
        return "active"
    return "unstable"


class _Builder:
    def __init__(self, names):
        self.names = tuple(names)
        self._index = {n: j for j, n in enumerate(self.names)}
        self.rows: list[LinRow] = []

    def index(self, name):
        return self._index[name]

    def le(self, terms: dict[str, Fraction], rhs):
        coeffs = [ZERO] * len(self.names)
        for name, c in terms.items():
            coeffs[self._index[name]] += c
        self.rows.append(LinRow(tuple(coeffs), rhs))

    def eq(self, terms, rhs):
        self.le(terms, rhs)
        self.le({k: -v for k, v in terms.items()}, -rhs)


def _check_bounds(net: ReluNetwork, bounds: PreactivationBounds):
    if len(bounds) != net.n_relu:
        raise EncodingError(f"{len(bounds)} bounds given for {net.n_relu} ReLU units")
    for j in range(len(bounds)):
        unit_kind(*bounds[j])


def _stable_rows(bld: _Builder, s: str, z: str, l: Fraction, u: Fraction, kind: str):
    if kind == "fixed":
        bld.eq({s: ONE}, l)
        bld.eq({z: ONE}, relu(l))
        return
    bld.le({s: ONE}, u)
    bld.le({s: -ONE}, -l)
    if kind == "inactive":
        bld.eq({z: ONE}, ZERO)
    else:
        bld.eq({z: ONE, s: -ONE}, ZERO)


def _encode(net, dom, bounds, unstable_block, extra_names=()):
    _check_bounds(net, bounds)
    space = ExtendedSpace(net)
    bld = _Builder(space.names + tuple(extra_names))
    bld.rows += box_rows(space, dom, bld.names, bld.index)
    units = net.units()
    j = 0
    for i in range(1, net.depth + 1):
        bld.rows += affine_rows(space, i, bld.names, bld.index)
        if i == net.depth:
            break
        for _ in range(net.layers[i - 1].out_dim):
            li, k = units[j]
            s, z = f"s_{li}_{k}", f"z_{li}_{k}"
            l, u = bounds[j]
            kind = unit_kind(l, u)
            if kind == "unstable":
                unstable_block(bld, (li, k), s, z, l, u)
            else:
                _stable_rows(bld, s, z, l, u, kind)
            j += 1
    return space, bld


def binary_name(unit: tuple[int, int]) -> str:
    return f"d_{unit[0]}_{unit[1]}"


def unstable_units(net: ReluNetwork, bounds: PreactivationBounds) -> list[tuple[int, int]]:
    return [unit for j, unit in enumerate(net.units()) if unit_kind(*bounds[j]) == "unstable"]


def encode_bigm(net: ReluNetwork, dom: BoxDomain, bounds: PreactivationBounds) -> MixedStore:
    """Bounded big-M encoding; one binary per unstable unit."""
    _check_bounds(net, bounds)
    deltas = [binary_name(u) for u in unstable_units(net, bounds)]

    def block(bld, unit, s, z, l, u):
        d = binary_name(unit)
        bld.le({z: -ONE}, ZERO)                 # z >= 0
        bld.le({s: ONE, z: -ONE}, ZERO)         # z >= s
        bld.le({z: ONE, d: -u}, ZERO)           # z <= u d
        bld.le({z: ONE, s: -ONE, d: -l}, -l)    # z <= s - l (1 - d)
        bld.le({s: ONE}, u)
        bld.le({s: -ONE}, -l)
        bld.le({d: ONE}, ONE)
        bld.le({d: -ONE}, ZERO)

    _, bld = _encode(net, dom, bounds, block, deltas)
    return MixedStore(LinearStore(bld.names, tuple(bld.rows)), tuple(deltas))


def encode_hull(net: ReluNetwork, dom: BoxDomain, bounds: PreactivationBounds) -> LinearStore:
    """Triangle relaxation per unstable unit; all rows in primitive form."""

    def block(bld, unit, s, z, l, u):
        slope = u / (u - l)
        bld.le({z: -ONE}, ZERO)
        bld.le({s: ONE, z: -ONE}, ZERO)
        bld.le({z: ONE, s: -slope}, -slope * l)  # z <= u/(u-l) (s - l)
        bld.le({s: ONE}, u)
        bld.le({s: -ONE}, -l)

    _, bld = _encode(net, dom, bounds, block)
    return canonicalize_store(LinearStore(bld.names, tuple(bld.rows)))


def relax_bigm(m: MixedStore) -> LinearStore:
    return m.store


def add_violation(store: LinearStore, net: ReluNetwork, violation: LinRow) -> LinearStore:
    """Append the violation row (over network outputs) to an encoded store."""
    space = ExtendedSpace(net)
    idx = {n: j for j, n in enumerate(store.var_names)}
    return store.with_rows([violation_row(space, violation, store.var_names, idx.__getitem__)])


def encode_query(net: ReluNetwork, dom: BoxDomain, violation: LinRow, kind: str,
                 bounds: PreactivationBounds | None = None) -> LinearStore:
    """Root store of a proof: hull or relaxed big-M encoding plus the violation."""
    bounds = bounds if bounds is not None else interval_bounds(net, dom)
    if kind == "hull":
        store = encode_hull(net, dom, bounds)
    elif kind in ("bigm-relaxed", "bigm"):
        store = relax_bigm(encode_bigm(net, dom, bounds))
    else:
        raise EncodingError(f"unknown encoding kind {kind!r}")
    return add_violation(store, net, violation)


# --- guarded SMT(LRA)-style export -------------------------------------------

def _linexpr(terms: list[tuple[Fraction, str]], const: Fraction = ZERO) -> str:
    parts = [f"(* {format_rational(c)} {name})" for c, name in terms if c]
    if const or not parts:
        parts.append(format_rational(const))
    if len(parts) == 1:
        return parts[0]
    return "(+ " + " ".join(parts) + ")"


def export_guarded(net: ReluNetwork, dom: BoxDomain, violation: LinRow) -> str:
    """Render the guarded encoding as s-expressions.

    Each hidden unit gets a Boolean ``d_i_k`` with
    ``d => (s >= 0 and z = s)`` and ``(not d) => (s <= 0 and z = 0)``.
    """
    space = ExtendedSpace(net)
    out = ["; guarded ReLU encoding (linear real arithmetic)"]
    out += [f"(declare {name} Real)" for name in space.names]
    out += [f"(declare {binary_name(u)} Bool)" for u in net.units()]
    for k, (lo, hi) in enumerate(zip(dom.lower, dom.upper), 1):
        out.append(f"(assert (<= {format_rational(lo)} x_{k}))")
        out.append(f"(assert (<= x_{k} {format_rational(hi)}))")
    for i, layer in enumerate(net.layers, 1):
        ins = space.layer_inputs(i)
        head = "s" if layer.relu else "z"
        for k in range(layer.out_dim):
            rhs = _linexpr(list(zip(layer.W[k], ins)) if layer.W else [], layer.b[k])
            out.append(f"(assert (= {head}_{i}_{k + 1} {rhs}))")
    for i, k in net.units():
        d, s, z = binary_name((i, k)), f"s_{i}_{k}", f"z_{i}_{k}"
        out.append(f"(assert (=> {d} (and (>= {s} 0) (= {z} {s}))))")
        out.append(f"(assert (=> (not {d}) (and (<= {s} 0) (= {z} 0))))")
    lhs = _linexpr(list(zip(violation.coeffs, space.output_names())))
    out.append(f"(assert (<= {lhs} {format_rational(violation.rhs)}))")
    return "\n".join(out) + "\n"


# --- equisatisfiability oracle ------------------------------------------------

@dataclass(frozen=True)
class EquisatReport:
    milp: Union[Sat, Unsat]
    patterns: Union[Sat, Unsat]
    binaries: tuple[str, ...]
    assignments_checked: int

    @property
    def agree(self) -> bool:
        return isinstance(self.milp, Sat) == isinstance(self.patterns, Sat)


def _check_exact_witness(net: ReluNetwork, names, w: RatVec, violation: LinRow):
    idx = {n: j for j, n in enumerate(names)}
    for i, k in net.units():
        s, z = w[idx[f"s_{i}_{k}"]], w[idx[f"z_{i}_{k}"]]
        if z != relu(s):
            raise EquisatError(f"big-M witness has z_{i}_{k} = {z} but s_{i}_{k} = {s}")
    x = w[:net.n_inputs]
    out, _, _ = forward_exact(net, x)
    if not violation.satisfied_by(out):
        raise EquisatError("big-M witness input does not violate the property")


def equisat_oracle(net: ReluNetwork, dom: BoxDomain, violation: LinRow,
                   ceiling: int = DEFAULT_PATTERN_CEILING) -> EquisatReport:
    """Decide the big-M encoding over every binary assignment and compare.

    The comparison partner is the exhaustive pattern search.  Disagreement
    raises ``EquisatError``.
    """
    if net.n_relu > ceiling:
        raise CeilingExceeded(f"network has {net.n_relu} ReLU units, pattern ceiling is {ceiling}")
    bounds = interval_bounds(net, dom)
    mixed = encode_bigm(net, dom, bounds)
    base = add_violation(relax_bigm(mixed), net, violation)
    names = base.var_names
    milp: Union[Sat, Unsat] = Unsat()
    checked = 0
    for assignment in product((0, 1), repeat=len(mixed.binaries)):
        fix = []
        for d, val in zip(mixed.binaries, assignment):
            fix.append(base.row_from_terms({d: ONE}, val))
            fix.append(base.row_from_terms({d: -ONE}, -val))
        checked += 1
        res = feasible(base.with_rows(fix))
        if isinstance(res, Farkas):
            continue
        _check_exact_witness(net, names, res.point, violation)
        milp = Sat(res.point, tuple(assignment))
        break
    report = EquisatReport(milp, brute_force_verdict(net, dom, violation, ceiling), mixed.binaries, checked)
    if not report.agree:
        raise EquisatError(
            f"big-M says {type(report.milp).__name__}, pattern enumeration says {type(report.patterns).__name__}"
        )
    return report
