"""ReLU networks over the rationals and their pattern-indexed polyhedra.

The extended variable tuple is laid out as inputs ``x_k``, then hidden
pre-activations ``s_i_k`` (layer-major), then post-activations ``z_i_k`` for
every layer including the linear output layer.  Indices are 1-based.

An activation pattern is a tuple of 0/1 bits over the hidden ReLU units in
(layer, unit) order.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterator, Sequence, Union

from .lpexact import Farkas, Point, feasible
from .polyhedron import LinearStore, LinRow, equality_pair
from .ratcore import (
    ZERO,
    RatMat,
    RatVec,
    dot,
    format_rational,
    identity,
    mat,
    mat_vec,
    parse_rational,
    vec,
    zeros,
)

DEFAULT_PATTERN_CEILING = int(os.environ.get("RELUCERT_PATTERN_CEILING", "16"))

Pattern = tuple[int, ...]


class NetworkError(ValueError):
    pass


class CeilingExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Layer:
    W: RatMat
    b: RatVec
    relu: bool

    def __post_init__(self):
        object.__setattr__(self, "W", mat(self.W))
        object.__setattr__(self, "b", vec(self.b))
        if len(self.W) != len(self.b):
            raise NetworkError("bias length differs from weight rows")

    @property
    def out_dim(self) -> int:
        return len(self.b)

    @property
    def in_dim(self) -> int:
        return len(self.W[0]) if self.W else 0


@dataclass(frozen=True)
class ReluNetwork:
    n_inputs: int
    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise NetworkError("network needs at least one layer")
        width = self.n_inputs
        for i, layer in enumerate(layers, 1):
            if layer.W and layer.in_dim != width:
                raise NetworkError(f"layer {i} expects {layer.in_dim} inputs, previous width is {width}")
            last = i == len(layers)
            if layer.relu == last:
                if last:
                    raise NetworkError("the output layer must be linear")
                raise NetworkError(f"hidden layer {i} must be a ReLU layer")
            width = layer.out_dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].out_dim

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(layer.out_dim for layer in self.layers[:-1])

    @property
    def n_relu(self) -> int:
        return sum(self.hidden_dims)

    def units(self) -> list[tuple[int, int]]:
        """(layer, unit) pairs, 1-based, in global pattern order."""
        return [(i, k) for i, d in enumerate(self.hidden_dims, 1) for k in range(1, d + 1)]


@dataclass(frozen=True)
class BoxDomain:
    lower: RatVec
    upper: RatVec

    def __post_init__(self):
        object.__setattr__(self, "lower", vec(self.lower))
        object.__setattr__(self, "upper", vec(self.upper))
        if len(self.lower) != len(self.upper):
            raise NetworkError("box bounds differ in length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise NetworkError("box has lower > upper")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, x: Sequence[Fraction]) -> bool:
        return all(lo <= xi <= hi for lo, xi, hi in zip(self.lower, x, self.upper))


@dataclass(frozen=True)
class PreactivationBounds:
    lower: RatVec
    upper: RatVec

    def __post_init__(self):
        object.__setattr__(self, "lower", vec(self.lower))
        object.__setattr__(self, "upper", vec(self.upper))
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise NetworkError("invalid bounds: l > u")

    def __getitem__(self, j: int) -> tuple[Fraction, Fraction]:
        return self.lower[j], self.upper[j]

    def __len__(self) -> int:
        return len(self.lower)


# --- extended space ----------------------------------------------------------

class ExtendedSpace:
    """Variable naming and index lookup for ``v = (x, s, z)``."""

    def __init__(self, net: ReluNetwork):
        self.net = net
        names = [f"x_{k}" for k in range(1, net.n_inputs + 1)]
        for i, d in enumerate(net.hidden_dims, 1):
            names += [f"s_{i}_{k}" for k in range(1, d + 1)]
        for i, layer in enumerate(net.layers, 1):
            names += [f"z_{i}_{k}" for k in range(1, layer.out_dim + 1)]
        self.names = tuple(names)
        self._index = {n: j for j, n in enumerate(names)}

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self._index[name]

    def layer_inputs(self, i: int) -> list[str]:
        """Names of ``z^(i-1)`` (``x`` for the first layer)."""
        if i == 1:
            return [f"x_{k}" for k in range(1, self.net.n_inputs + 1)]
        return [f"z_{i - 1}_{k}" for k in range(1, self.net.layers[i - 2].out_dim + 1)]

    def output_names(self) -> list[str]:
        L = self.net.depth
        return [f"z_{L}_{k}" for k in range(1, self.net.n_outputs + 1)]

    def lift(self, x: Sequence[Fraction]) -> RatVec:
        """Exact extended point ``(x, s, z)`` for input ``x``."""
        _, pre, zs = forward_exact(self.net, x)
        return tuple(x) + tuple(v for s in pre[:-1] for v in s) + tuple(v for z in zs for v in z)


def _row(space_names: Sequence[str], index, terms: dict[str, Fraction], rhs) -> LinRow:
    coeffs = [ZERO] * len(space_names)
    for name, c in terms.items():
        coeffs[index(name)] += c
    return LinRow(tuple(coeffs), rhs)


def box_rows(space: ExtendedSpace, dom: BoxDomain, names=None, index=None) -> list[LinRow]:
    names = names or space.names
    index = index or space.index
    rows = []
    for k, (lo, hi) in enumerate(zip(dom.lower, dom.upper), 1):
        rows.append(_row(names, index, {f"x_{k}": Fraction(1)}, hi))
        rows.append(_row(names, index, {f"x_{k}": Fraction(-1)}, -lo))
    return rows


def affine_rows(space: ExtendedSpace, i: int, names=None, index=None) -> list[LinRow]:
    """Equality pairs for layer ``i``: ``s_i = W z_{i-1} + b`` (or ``z_L`` at the output)."""
    names = names or space.names
    index = index or space.index
    net = space.net
    layer = net.layers[i - 1]
    ins = space.layer_inputs(i)
    head = "s" if layer.relu else "z"
    rows = []
    for k in range(layer.out_dim):
        terms = {f"{head}_{i}_{k + 1}": Fraction(1)}
        for name, w in zip(ins, layer.W[k]):
            if w:
                terms[name] = terms.get(name, ZERO) - w
        r = _row(names, index, terms, layer.b[k])
        rows.extend((r, r.negated_bound()))
    return rows


def violation_row(space: ExtendedSpace, violation: LinRow, names=None, index=None) -> LinRow:
    """Embed a row over network outputs into the (possibly widened) store space."""
    names = names or space.names
    index = index or space.index
    outs = space.output_names()
    if violation.dim != len(outs):
        raise NetworkError(f"violation row has {violation.dim} coefficients, network has {len(outs)} outputs")
    return _row(names, index, dict(zip(outs, violation.coeffs)), violation.rhs)


def phase_rows(space: ExtendedSpace, unit: tuple[int, int], bit: int, names=None, index=None) -> list[LinRow]:
    names = names or space.names
    index = index or space.index
    i, k = unit
    s, z = f"s_{i}_{k}", f"z_{i}_{k}"
    one = Fraction(1)
    if bit:
        eq = _row(names, index, {z: one, s: -one}, 0)
        return [_row(names, index, {s: -one}, 0), eq, eq.negated_bound()]
    eq = _row(names, index, {z: one}, 0)
    return [_row(names, index, {s: one}, 0), eq, eq.negated_bound()]


# --- semantics -------------------------------------------------------------------

def relu(q: Fraction) -> Fraction:
    return q if q > 0 else ZERO


def forward_exact(net: ReluNetwork, x: Sequence[Fraction]) -> tuple[RatVec, list[RatVec], list[RatVec]]:
    """Exact forward pass.  Returns ``(output, preactivations, activations)`` per layer."""
    if len(x) != net.n_inputs:
        raise NetworkError(f"expected {net.n_inputs} inputs, got {len(x)}")
    z = vec(x)
    pre, post = [], []
    for layer in net.layers:
        s = tuple(dot(w, z) + b for w, b in zip(layer.W, layer.b)) if layer.W else layer.b
        z = tuple(relu(v) for v in s) if layer.relu else s
        pre.append(s)
        post.append(z)
    return z, pre, post


def pattern_of(net: ReluNetwork, x: Sequence[Fraction]) -> Pattern:
    """Pattern selected by sign tests; a zero pre-activation counts as inactive."""
    _, pre, _ = forward_exact(net, x)
    return tuple(1 if v > 0 else 0 for s in pre[:-1] for v in s)


def interval_bounds(net: ReluNetwork, dom: BoxDomain) -> PreactivationBounds:
    """Interval propagation of pre-activation bounds for every ReLU unit."""
    lo, hi = dom.lower, dom.upper
    lows, highs = [], []
    for layer in net.layers[:-1]:
        nlo, nhi = [], []
        for w, b in zip(layer.W, layer.b):
            a, c = b, b
            for wj, l, u in zip(w, lo, hi):
                if wj > 0:
                    a += wj * l
                    c += wj * u
                elif wj < 0:
                    a += wj * u
                    c += wj * l
            nlo.append(a)
            nhi.append(c)
        lows += nlo
        highs += nhi
        lo = tuple(relu(v) for v in nlo)
        hi = tuple(relu(v) for v in nhi)
    return PreactivationBounds(tuple(lows), tuple(highs))


def _check_pattern(net: ReluNetwork, pi: Sequence[int]) -> Pattern:
    pi = tuple(int(b) for b in pi)
    if len(pi) != net.n_relu or any(b not in (0, 1) for b in pi):
        raise NetworkError(f"pattern must be {net.n_relu} bits")
    return pi


def pattern_polyhedron(net: ReluNetwork, dom: BoxDomain, pi: Sequence[int]) -> LinearStore:
    """Store for ``P_pi``: box rows, then per layer its affine pairs and phase rows."""
    pi = _check_pattern(net, pi)
    space = ExtendedSpace(net)
    rows = box_rows(space, dom)
    units = net.units()
    j = 0
    for i in range(1, net.depth + 1):
        rows += affine_rows(space, i)
        if i < net.depth:
            for _ in range(net.layers[i - 1].out_dim):
                rows += phase_rows(space, units[j], pi[j])
                j += 1
    return LinearStore(space.names, tuple(rows))


def pattern_affine(net: ReluNetwork, pi: Sequence[int]) -> tuple[RatMat, RatVec]:
    """``(A_pi, c_pi)`` with ``N(x) = A_pi x + c_pi`` on the region of ``pi``."""
    pi = _check_pattern(net, pi)
    A, c = identity(net.n_inputs), zeros(net.n_inputs)
    j = 0
    cols = net.n_inputs
    for layer in net.layers:
        if layer.W:
            newA = tuple(tuple(dot(w, tuple(r[q] for r in A)) for q in range(cols)) for w in layer.W)
            newc = tuple(dot(w, c) + b for w, b in zip(layer.W, layer.b))
        else:
            newA = tuple(zeros(cols) for _ in layer.b)
            newc = layer.b
        if layer.relu:
            mask = pi[j:j + layer.out_dim]
            j += layer.out_dim
            newA = tuple(r if m else zeros(cols) for r, m in zip(newA, mask))
            newc = tuple(v if m else ZERO for v, m in zip(newc, mask))
        A, c = newA, newc
    return A, c


def apply_affine(A: RatMat, c: RatVec, x: Sequence[Fraction]) -> RatVec:
    return tuple(v + w for v, w in zip(mat_vec(A, x), c))


def pattern_face_intersection(net: ReluNetwork, dom: BoxDomain, pi: Sequence[int],
                              pi2: Sequence[int]) -> LinearStore:
    """``P_pi`` plus ``s_j = 0, z_j = 0`` wherever the two patterns differ."""
    pi, pi2 = _check_pattern(net, pi), _check_pattern(net, pi2)
    store = pattern_polyhedron(net, dom, pi)
    space = ExtendedSpace(net)
    extra = []
    for (i, k), a, b in zip(net.units(), pi, pi2):
        if a != b:
            for name in (f"s_{i}_{k}", f"z_{i}_{k}"):
                row = _row(space.names, space.index, {name: Fraction(1)}, 0)
                extra.extend(equality_pair(row.coeffs, 0))
    return store.with_rows(extra)


def _prefix_search(net: ReluNetwork, dom: BoxDomain, extra: Sequence[LinRow],
                   ceiling: int) -> Iterator[tuple[Pattern, RatVec]]:
    """Feasible full patterns in index order, pruning infeasible prefixes.

    A prefix fixes the phase rows of its units only; every completion's
    polyhedron is a subset, so an infeasible prefix rules them all out.
    """
    N = net.n_relu
    if N > ceiling:
        raise CeilingExceeded(f"network has {N} ReLU units, pattern ceiling is {ceiling}")
    space = ExtendedSpace(net)
    base = box_rows(space, dom)
    for i in range(1, net.depth + 1):
        base += affine_rows(space, i)
    base += list(extra)
    units = net.units()

    def rec(prefix: Pattern, rows: list[LinRow]):
        res = feasible(LinearStore(space.names, tuple(rows)))
        if isinstance(res, Farkas):
            return
        if len(prefix) == N:
            yield prefix, res.point
            return
        for bit in (0, 1):
            yield from rec(prefix + (bit,), rows + phase_rows(space, units[len(prefix)], bit))

    yield from rec((), base)


def enumerate_feasible_patterns(net: ReluNetwork, dom: BoxDomain,
                                ceiling: int = DEFAULT_PATTERN_CEILING) -> list[tuple[Pattern, RatVec]]:
    """Every pattern with nonempty ``P_pi`` together with a rational witness."""
    return list(_prefix_search(net, dom, (), ceiling))


@dataclass(frozen=True)
class Sat:
    witness: RatVec
    pattern: Pattern


@dataclass(frozen=True)
class Unsat:
    pass


Verdict = Union[Sat, Unsat]


def brute_force_verdict(net: ReluNetwork, dom: BoxDomain, violation: LinRow,
                        ceiling: int = DEFAULT_PATTERN_CEILING) -> Verdict:
    """Decide ``exists x in dom: violation(N(x))`` by exhaustive pattern search."""
    space = ExtendedSpace(net)
    row = violation_row(space, violation)
    for pi, w in _prefix_search(net, dom, (row,), ceiling):
        return Sat(w, pi)
    return Unsat()


def all_patterns(N: int) -> Iterator[Pattern]:
    return product((0, 1), repeat=N)


# --- text formats ------------------------------------------------------------

def dump_network(net: ReluNetwork) -> str:
    lines = [f"inputs: {net.n_inputs}"]
    for layer in net.layers:
        lines.append(f"layer {layer.out_dim} {layer.in_dim if layer.W else 0} {'relu' if layer.relu else 'linear'}")
        for w in layer.W:
            lines.append(" ".join(format_rational(a) for a in w))
        lines.append(" ".join(format_rational(a) for a in layer.b))
    return "\n".join(lines) + "\n"


def _content_lines(text: str) -> list[tuple[int, str]]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append((lineno, line))
    return out


def parse_network(text: str) -> ReluNetwork:
    lines = _content_lines(text)
    if not lines or not lines[0][1].startswith("inputs:"):
        raise NetworkError("network file must start with 'inputs: n'")
    try:
        n = int(lines[0][1][7:])
    except ValueError:
        raise NetworkError(f"line {lines[0][0]}: bad input count") from None
    layers = []
    pos = 1
    while pos < len(lines):
        lineno, line = lines[pos]
        parts = line.split()
        if len(parts) != 4 or parts[0] != "layer" or parts[3] not in ("relu", "linear"):
            raise NetworkError(f"line {lineno}: expected 'layer <rows> <cols> relu|linear'")
        try:
            rows, cols = int(parts[1]), int(parts[2])
        except ValueError:
            raise NetworkError(f"line {lineno}: bad layer shape") from None
        body = lines[pos + 1:pos + 2 + rows]
        if len(body) != rows + 1:
            raise NetworkError(f"line {lineno}: layer truncated")
        try:
            W = [tuple(parse_rational(t) for t in ln.split()) for _, ln in body[:rows]]
            b = tuple(parse_rational(t) for t in body[rows][1].split())
        except ValueError as e:
            raise NetworkError(f"line {lineno}: {e}") from None
        if any(len(w) != cols for w in W) or len(b) != rows:
            raise NetworkError(f"line {lineno}: layer entries do not match shape {rows}x{cols}")
        layers.append(Layer(tuple(W), b, parts[3] == "relu"))
        pos += rows + 2
    return ReluNetwork(n, tuple(layers))


def dump_domain(dom: BoxDomain) -> str:
    lines = ["box:"] + [f"{format_rational(lo)} {format_rational(hi)}" for lo, hi in zip(dom.lower, dom.upper)]
    return "\n".join(lines) + "\n"


def parse_domain(text: str) -> BoxDomain:
    lines = _content_lines(text)
    if not lines or lines[0][1] != "box:":
        raise NetworkError("domain file must start with 'box:'")
    lo, hi = [], []
    for lineno, line in lines[1:]:
        parts = line.split()
        if len(parts) != 2:
            raise NetworkError(f"line {lineno}: expected 'l u'")
        try:
            lo.append(parse_rational(parts[0]))
            hi.append(parse_rational(parts[1]))
        except ValueError as e:
            raise NetworkError(f"line {lineno}: {e}") from None
    return BoxDomain(tuple(lo), tuple(hi))


class PropertyError(ValueError):
    pass


def parse_property(text: str, eps: Fraction | None = None) -> LinRow:
    """Parse ``violation: c1 ... cm <= rhs`` (or ``< rhs``) over the outputs.

    A strict violation is strengthened to ``<= rhs - eps`` and needs an
    explicit positive ``eps``.
    """
    lines = _content_lines(text)
    if len(lines) != 1 or not lines[0][1].startswith("violation:"):
        raise PropertyError("property file must hold exactly one 'violation:' line")
    body = lines[0][1][10:]
    try:
        if "<=" in body:
            lhs, rhs = body.split("<=", 1)
            strict = False
        elif "<" in body:
            lhs, rhs = body.split("<", 1)
            strict = True
        else:
            raise PropertyError("violation needs '<=' or '<'")
        coeffs = tuple(parse_rational(t) for t in lhs.split())
        bound = parse_rational(rhs)
    except ValueError as e:
        raise PropertyError(str(e)) from None
    if strict:
        if eps is None:
            raise PropertyError("strict violation given: supply a strengthening epsilon")
        if eps <= 0:
            raise PropertyError("epsilon must be positive")
        bound -= eps
    return LinRow(coeffs, bound)


def dump_property(violation: LinRow) -> str:
    from .polyhedron import format_row

    return "violation: " + format_row(violation) + "\n"


def instance_hash(net: ReluNetwork, dom: BoxDomain, violation: LinRow) -> str:
    from .polyhedron import format_row

    text = dump_network(net) + dump_domain(dom) + "violation: " + format_row(violation) + "\n"
    return hashlib.sha256(text.encode()).hexdigest()
