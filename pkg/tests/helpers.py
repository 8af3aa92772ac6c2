"""Random instance generators shared by the test modules."""
from __future__ import annotations

import random
from fractions import Fraction as Q
from itertools import combinations, product

from relucert.network import BoxDomain, Layer, LinRow, ReluNetwork
from relucert.polyhedron import LinearStore


def rand_q(rng: random.Random, span: int = 4, den: int = 4) -> Q:
    return Q(rng.randint(-span * den, span * den), rng.randint(1, den))


def rand_store(rng: random.Random, d: int, p: int, span: int = 5) -> LinearStore:
    names = tuple(f"v{j}" for j in range(d))
    rows = tuple(LinRow(tuple(Q(rng.randint(-span, span)) for _ in range(d)), Q(rng.randint(-span, span)))
                 for _ in range(p))
    return LinearStore(names, rows)


def bounded_store(rng: random.Random, d: int, p: int, box: int = 3) -> LinearStore:
    """Random rows intersected with the box ``[-box, box]^d``."""
    s = rand_store(rng, d, p)
    extra = []
    for j in range(d):
        e = [Q(0)] * d
        e[j] = Q(1)
        extra.append(LinRow(tuple(e), Q(box)))
        extra.append(LinRow(tuple(-a for a in e), Q(box)))
    return s.with_rows(extra)


def infeasible_store(rng: random.Random, d: int, p: int) -> LinearStore:
    """Random rows around a point plus a contradicting pair, shuffled."""
    x = [rand_q(rng, 2, 2) for _ in range(d)]
    rows = []
    for _ in range(p - 2):
        a = tuple(Q(rng.randint(-5, 5)) for _ in range(d))
        slack = Q(rng.randint(0, 4))
        rows.append(LinRow(a, sum(ai * xi for ai, xi in zip(a, x)) + slack))
    a = tuple(Q(rng.randint(-5, 5)) for _ in range(d))
    if not any(a):
        a = (Q(1),) + a[1:]
    # a.v <= t and -a.v <= -t - 1 cannot hold together
    t = Q(rng.randint(-3, 3))
    rows.append(LinRow(a, t))
    rows.append(LinRow(tuple(-ai for ai in a), -t - 1))
    rng.shuffle(rows)
    return LinearStore(tuple(f"v{j}" for j in range(d)), tuple(rows))


def rand_network(rng: random.Random, n_inputs: int = 2, hidden=(2, 2), n_outputs: int = 1) -> ReluNetwork:
    layers = []
    fan_in = n_inputs
    for width in hidden:
        W = tuple(tuple(Q(rng.randint(-3, 3), rng.randint(1, 2)) for _ in range(fan_in)) for _ in range(width))
        b = tuple(Q(rng.randint(-2, 2), rng.randint(1, 2)) for _ in range(width))
        layers.append(Layer(W, b, True))
        fan_in = width
    W = tuple(tuple(Q(rng.randint(-3, 3)) for _ in range(fan_in)) for _ in range(n_outputs))
    layers.append(Layer(W, tuple(Q(rng.randint(-2, 2), 2) for _ in range(n_outputs)), False))
    return ReluNetwork(n_inputs, tuple(layers))


def rand_instance(rng: random.Random, max_units: int = 8, random_box: bool = False):
    n_in = rng.randint(1, 2)
    widths = []
    while True:
        w = rng.randint(1, 3)
        if sum(widths) + w > max_units or len(widths) == 3:
            break
        widths.append(w)
    if not widths:
        widths = [1]
    net = rand_network(rng, n_in, tuple(widths))
    if random_box:
        lo = tuple(Q(rng.randint(-8, 4), 4) for _ in range(n_in))
        dom = BoxDomain(lo, tuple(v + Q(rng.randint(1, 8), 4) for v in lo))
    else:
        dom = BoxDomain(tuple(Q(-1) for _ in range(n_in)), tuple(Q(1) for _ in range(n_in)))
    viol = LinRow((Q(rng.choice([-1, 1])),), Q(rng.randint(-6, 6), 2))
    return net, dom, viol


def vertex_optimum(store: LinearStore, c):
    """Brute-force LP over a bounded store: best value over all vertices.

    Returns ``None`` when no vertex exists (empty polytope).
    """
    d = store.dim
    best = None
    for rows in combinations(store.rows, d):
        sol = _solve_square([r.coeffs for r in rows], [r.rhs for r in rows])
        if sol is None or not all(r.satisfied_by(sol) for r in store.rows):
            continue
        val = sum(ci * xi for ci, xi in zip(c, sol))
        if best is None or val > best:
            best = val
    return best


def _solve_square(A, b):
    n = len(A)
    M = [list(A[i]) + [b[i]] for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col] / M[col][col]
                M[r] = [a - f * p for a, p in zip(M[r], M[col])]
    return tuple(M[i][n] / M[i][i] for i in range(n))


def grid_points(lo, hi, steps, d):
    vals = [Q(lo) + Q(hi - lo) * k / steps for k in range(steps + 1)]
    return product(vals, repeat=d)


def entails(s1: LinearStore, s2: LinearStore) -> bool:
    """Every row of ``s2`` has a checked entailment certificate over ``s1``."""
    from relucert.certs import Derived, EntailCert, StoreEmpty, check_entail, check_farkas, derive_entail

    for row in s2.rows:
        res = derive_entail(s1, row.coeffs)
        if isinstance(res, StoreEmpty):
            assert check_farkas(s1, res.farkas)
            continue
        if not isinstance(res, Derived) or res.tau > row.rhs:
            return False
        cert = EntailCert(res.cert.multipliers, row.coeffs, row.rhs)
        if not check_entail(s1, cert):
            return False
    return True


def equivalent(s1: LinearStore, s2: LinearStore) -> bool:
    return entails(s1, s2) and entails(s2, s1)


def rand_cert_case(rng: random.Random):
    """A random store and certificate; about half of them are valid."""
    from relucert.certs import EntailCert, FarkasCert

    d, p = rng.randint(1, 4), rng.randint(2, 7)
    if rng.random() < 0.5:
        s = infeasible_store(rng, d, p)
        from relucert.lpexact import feasible
        y = feasible(s).certificate
        y = tuple(v * rng.randint(1, 5) / rng.randint(1, 7) for v in y)
        if rng.random() < 0.5:
            j = rng.randrange(p)
            y = tuple(v + (Q(1, 3) if i == j else 0) for i, v in enumerate(y))
        return s, FarkasCert.dense(y)
    s = rand_store(rng, d, p)
    y = tuple(Q(rng.randint(0, 6), rng.randint(1, 5)) if rng.random() < 0.7 else Q(0) for _ in range(p))
    c = [sum((yi * r.coeffs[j] for yi, r in zip(y, s.rows)), Q(0)) for j in range(d)]
    tau = sum((yi * r.rhs for yi, r in zip(y, s.rows)), Q(0)) + rng.choice([0, 0, Q(1, 2), Q(-1, 3)])
    if rng.random() < 0.3:
        c[rng.randrange(d)] += 1
    return s, EntailCert.dense(y, c, tau)


def dense_farkas_system(rng: random.Random, d: int, p: int):
    """An infeasible store with a known Farkas certificate of full support.

    The last row is minus a positive combination of the others with its
    right-hand side pushed down by one; rows are then shuffled.
    """
    from relucert.certs import FarkasCert

    rows, lams = [], []
    for _ in range(p - 1):
        a = tuple(Q(rng.randint(-6, 6)) for _ in range(d))
        rows.append(LinRow(a, Q(rng.randint(-5, 5), rng.randint(1, 3))))
        lams.append(Q(rng.randint(1, 9), rng.randint(1, 4)))
    closing = tuple(-sum((l * r.coeffs[j] for l, r in zip(lams, rows)), Q(0)) for j in range(d))
    rhs = -sum((l * r.rhs for l, r in zip(lams, rows)), Q(0)) - 1
    rows.append(LinRow(closing, rhs))
    lams.append(Q(1))
    order = list(range(p))
    rng.shuffle(order)
    store = LinearStore(tuple(f"v{j}" for j in range(d)), tuple(rows[i] for i in order))
    return store, FarkasCert.dense([lams[i] for i in order])


# PASS/FAIL lines from the acceptance tests, printed by conftest
ACCEPTANCE: list[str] = []
