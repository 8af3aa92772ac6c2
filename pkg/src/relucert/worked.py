"""Built-in golden instances: the small worked certificate examples.

Each check returns ``(passed, detail)``.  ``SUITE`` lists them in display
order; ``run_suite`` evaluates everything.
"""
from __future__ import annotations

from fractions import Fraction as Q
from typing import Callable

from .certs import CheckResult, EntailCert, FarkasCert, check_entail, check_farkas
from .encode import encode_bigm, encode_query
from .network import BoxDomain, Layer, PreactivationBounds, ReluNetwork, interval_bounds
from .polyhedron import LinearStore, LinRow, prim_le_row
from .prooflog import Entail, ProofLog, Prune, Verified, make_header, replay
from .ratcore import format_rational, format_vec, vec


def _store(names, rows) -> LinearStore:
    return LinearStore(tuple(names), tuple(LinRow(vec(a), Q(b)) for a, b in rows))


# Example A: two ReLUs s_i = x_i - 3/4 on [0,1]^2, margin m = 1/2 - z_1 - z_2
def example_a_network() -> ReluNetwork:
    return ReluNetwork(2, (
        Layer(((1, 0), (0, 1)), (Q(-3, 4), Q(-3, 4)), True),
        Layer(((-1, -1),), (Q(1, 2),), False),
    ))


def example_a_domain() -> BoxDomain:
    return BoxDomain((0, 0), (1, 1))


def example_a_violation(eps=Q(1, 12)) -> LinRow:
    """``m <= -eps``, the rational strengthening of ``m < 0``."""
    return LinRow((1,), -Q(eps))


def example_d_network() -> ReluNetwork:
    return ReluNetwork(1, (
        Layer(((-2,),), (Q(-1, 5),), True),
        Layer(((1,),), (0,), False),
    ))


def example_d_domain() -> BoxDomain:
    return BoxDomain((0,), (1,))


A1_STORE = _store(("x1", "x2", "z1", "z2"), [
    ((1, 0, 0, 0), 1),
    ((0, 1, 0, 0), 1),
    ((Q(-1, 4), 0, 1, 0), 0),
    ((0, Q(-1, 4), 0, 1), 0),
])
A1_CERT = EntailCert.dense((Q(1, 4), Q(1, 4), 1, 1), (0, 0, 1, 1), Q(1, 2))

A2_STORE = A1_STORE.with_rows([LinRow((0, 0, -1, -1), Q(-7, 12))])
A2_PAPER_CERT = FarkasCert.dense((0, 0, 1, 1, 1))
A2_CORRECTED_CERT = FarkasCert.dense((Q(1, 4), Q(1, 4), 1, 1, 1))

B_STORE = _store(("z1", "z2"), [((1, 0), Q(1, 8)), ((0, 1), Q(1, 8)), ((-1, -1), Q(-1, 3))])
B_CERT = FarkasCert.dense((1, 1, 1))

C_STORE = _store(("z1", "z2"), [((1, 0), Q(1, 8)), ((0, 1), Q(1, 8))])
C_CERT = EntailCert.dense((1, 1), (1, 1), Q(1, 4))

D_STORE = _store(("x", "s"), [((-1, 0), 0), ((2, 1), Q(-1, 5))])
D_CERT = EntailCert.dense((2, 1), (0, 1), Q(-1, 5))

LEMMA_STORE = _store(("x1", "s1", "z1"), [
    ((0, Q(-1, 4), 1), Q(3, 16)),
    ((-1, 1, 0), Q(-3, 4)),
    ((1, 0, 0), 1),
])
LEMMA_CERT = EntailCert.dense((1, Q(1, 4), Q(1, 4)), (0, 0, 1), Q(1, 4))

FINAL_STORE = _store(("z1", "z2"), [((1, 0), Q(1, 4)), ((0, 1), Q(1, 4)), ((-1, -1), Q(-7, 12))])
FINAL_CERT = FarkasCert.dense((1, 1, 1))


def _accepts(res: CheckResult, ytb: Q) -> tuple[bool, str]:
    ok = res.accepted and res.ytb == ytb
    return ok, f"{'ACCEPT' if res.accepted else 'REJECT ' + res.reason}, yTb = {format_rational(res.ytb)}"


def check_a1():
    return _accepts(check_entail(A1_STORE, A1_CERT), Q(1, 2))


def check_a2_paper():
    res = check_farkas(A2_STORE, A2_PAPER_CERT)
    expected = (Q(-1, 4), Q(-1, 4), Q(0), Q(0))
    ok = not res.accepted and res.failed == "combination" and res.residual == expected
    return ok, f"REJECT expected: {res.reason}, yTA = {format_vec(res.residual)}"


def check_a2_corrected():
    return _accepts(check_farkas(A2_STORE, A2_CORRECTED_CERT), Q(-1, 12))


def check_b():
    return _accepts(check_farkas(B_STORE, B_CERT), Q(-1, 12))


def check_c():
    return _accepts(check_entail(C_STORE, C_CERT), Q(1, 4))


def check_d():
    ok, detail = _accepts(check_entail(D_STORE, D_CERT), Q(-1, 5))
    # the certified bound s <= -1/5 leaves the unit without a binary
    net, dom = example_d_network(), example_d_domain()
    lower = interval_bounds(net, dom).lower
    stabilized = encode_bigm(net, dom, PreactivationBounds(lower, (D_CERT.target_rhs,)))
    ok = ok and stabilized.binaries == ()
    return ok, f"{detail}; binaries after stabilization: {len(stabilized.binaries)}"


def check_lemma():
    return _accepts(check_entail(LEMMA_STORE, LEMMA_CERT), Q(1, 4))


def check_final_farkas():
    return _accepts(check_farkas(FINAL_STORE, FINAL_CERT), Q(-1, 12))


def _row_index(store: LinearStore, names: tuple[str, ...], coeffs, rhs) -> tuple[int, Q]:
    """Find the store row equal to a positive multiple ``lam`` of the given row."""
    full = [Q(0)] * store.dim
    for name, c in zip(names, coeffs):
        full[store.index(name)] = Q(c)
    target = LinRow(tuple(full), Q(rhs))
    want = prim_le_row(target)
    for i, row in enumerate(store.rows):
        if prim_le_row(row) == want:
            j = next(j for j, a in enumerate(target.coeffs) if a)
            return i, row.coeffs[j] / target.coeffs[j]
    raise LookupError(f"row {coeffs} <= {rhs} not in store")


def _mapped(store, names, paper_rows, y) -> tuple[tuple[int, Q], ...]:
    pairs = []
    for (coeffs, rhs), yi in zip(paper_rows, y):
        i, lam = _row_index(store, names, coeffs, rhs)
        pairs.append((i, Q(yi) / lam))
    return tuple(sorted(pairs))


def example_a_log() -> ProofLog:
    """Entail ``z_1 <= 1/4``, entail ``z_2 <= 1/4``, prune with ``y = (1,1,1)``.

    Multipliers are the hand-derived ones, re-expressed against the
    primitive rows of the hull encoding.
    """
    net, dom, viol = example_a_network(), example_a_domain(), example_a_violation()
    store = encode_query(net, dom, viol, "hull")
    steps = []
    for k in (1, 2):
        names = (f"x_{k}", f"s_1_{k}", f"z_1_{k}")
        rows = [((0, Q(-1, 4), 1), Q(3, 16)), ((-1, 1, 0), Q(-3, 4)), ((1, 0, 0), 1)]
        mult = _mapped(store, names, rows, (1, Q(1, 4), Q(1, 4)))
        target = tuple(Q(1) if n == f"z_1_{k}" else Q(0) for n in store.var_names)
        cert = EntailCert(mult, target, Q(1, 4))
        steps.append((cert, f"z_1_{k} <= 1/4 from the hull upper facet"))
        store = store.with_rows([LinRow(target, Q(1, 4))])
    # -z_1 - z_2 <= -7/12 is the violation row plus the output definition row
    names = ("z_1_1", "z_1_2", "z_2_1")
    mult = _mapped(store, names, [
        ((1, 0, 0), Q(1, 4)),
        ((0, 1, 0), Q(1, 4)),
        ((0, 0, 1), Q(-1, 12)),
        ((-1, -1, -1), Q(-1, 2)),
    ], (1, 1, 1, 1))
    root = Prune(FarkasCert(mult))
    for cert, note in reversed(steps):
        root = Entail(cert, note, root)
    return ProofLog(make_header(net, dom, viol, "hull"), root)


def check_example_a_log():
    log = example_a_log()
    res = replay(example_a_network(), example_a_domain(), example_a_violation(), log)
    return isinstance(res, Verified), f"replay: {type(res).__name__}"


SUITE: list[tuple[str, str, Callable[[], tuple[bool, str]]]] = [
    ("A.1", "direct safety by entailment, y=(1/4,1/4,1,1)", check_a1),
    ("A.2-paper", "printed y'=(0,0,1,1,1) must be rejected", check_a2_paper),
    ("A.2-corrected", "y'=(1/4,1/4,1,1,1) accepted", check_a2_corrected),
    ("B", "branch prune, y=(1,1,1)", check_b),
    ("C", "aggregated cut, y=(1,1)", check_c),
    ("D", "stabilization, y=(2,1)", check_d),
    ("Lemma-z1", "z_1 <= 1/4, y=(1,1/4,1/4)", check_lemma),
    ("Global-prune", "Farkas y=(1,1,1) on (1/4,1/4,-7/12)", check_final_farkas),
    ("A-log", "Example A proof log replays", check_example_a_log),
]


def run_suite() -> list[tuple[str, bool, str]]:
    out = []
    for name, _, fn in SUITE:
        try:
            ok, detail = fn()
        except Exception as e:  # a crash counts as a failed expectation
            ok, detail = False, f"error: {e}"
        out.append((name, ok, detail))
    return out
