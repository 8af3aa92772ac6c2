import random
from fractions import Fraction as Q

import pytest
from hypothesis import given, settings, strategies as st

from helpers import entails, equivalent, grid_points, rand_store
from relucert.encode import encode_bigm, relax_bigm
from relucert.lpexact import Farkas, Point, feasible
from relucert.network import BoxDomain, Layer, PreactivationBounds, ReluNetwork
from relucert.polyhedron import (
    FMCeilingExceeded,
    LinearStore,
    LinRow,
    StoreError,
    canonicalize_store,
    contains_point,
    dump_store,
    fm_eliminate,
    parse_store,
    prim_le_row,
    remove_redundant,
)
from relucert.worked import A1_STORE

rationals = st.fractions(max_denominator=12).filter(lambda q: abs(q) <= 20)


def store(names, rows):
    return LinearStore(tuple(names), tuple(LinRow(a, b) for a, b in rows))


def hull_block(l, u):
    """Triangle rows over (s, z), written by hand."""
    slope = u / (u - l)
    return store(("s", "z"), [((0, -1), 0), ((1, -1), 0), ((-slope, 1), -slope * l), ((1, 0), u), ((-1, 0), -l)])


def bigm_block(l, u):
    """Relaxed big-M rows over (s, z, d), written by hand."""
    return store(("s", "z", "d"), [
        ((0, -1, 0), 0), ((1, -1, 0), 0), ((0, 1, -u), 0), ((-1, 1, -l), -l),
        ((1, 0, 0), u), ((-1, 0, 0), -l), ((0, 0, 1), 1), ((0, 0, -1), 0),
    ])


def test_prim_le_row_examples():
    assert prim_le_row(LinRow((Q(-1, 4), 0, 1, 0), 0)) == LinRow((-1, 0, 4, 0), 0)
    assert prim_le_row(LinRow((0, 0), 0)) == LinRow((0, 0), 0)
    assert prim_le_row(LinRow((2, 4), 6)) == LinRow((1, 2), 3)


def test_prim_le_row_halfspace_by_sampling():
    row = LinRow((Q(-1, 4), 0, 1, 0), 0)
    prim = prim_le_row(row)
    rng = random.Random(3)
    for _ in range(200):
        v = tuple(Q(rng.randint(-40, 40), rng.randint(1, 8)) for _ in range(4))
        assert row.satisfied_by(v) == prim.satisfied_by(v)
    # points exactly on and just beyond the boundary
    assert prim.satisfied_by((4, 0, 1, 0)) and not prim.satisfied_by((4, 0, Q(1) + Q(1, 1000), 0))


@given(st.lists(rationals, min_size=1, max_size=4), rationals, st.lists(st.lists(rationals, min_size=4, max_size=4),
                                                                      max_size=10))
def test_prim_le_row_properties(coeffs, rhs, points):
    row = LinRow(tuple(coeffs), rhs)
    prim = prim_le_row(row)
    assert prim_le_row(prim) == prim
    assert all(a.denominator == 1 for a in prim.coeffs)
    for p in points:
        v = tuple(p[:len(coeffs)])
        assert row.satisfied_by(v) == prim.satisfied_by(v)


def test_canonicalize_example_a1():
    can = canonicalize_store(A1_STORE)
    assert [r.coeffs for r in can.rows][2:] == [(-1, 0, 4, 0), (0, -1, 0, 4)]
    assert can.rows[:2] == A1_STORE.rows[:2]
    # synchronized rescaling of the hand certificate: rows 3, 4 were scaled by 4
    from relucert.certs import EntailCert, check_entail
    assert check_entail(can, EntailCert.dense((Q(1, 4), Q(1, 4), Q(1, 4), Q(1, 4)), (0, 0, 1, 1), Q(1, 2)))


def test_canonicalize_idempotent_and_empty():
    can = canonicalize_store(A1_STORE)
    assert canonicalize_store(can) == can
    empty = LinearStore(("a",), ())
    assert canonicalize_store(empty) == empty


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_canonicalize_preserves_membership(seed):
    rng = random.Random(seed)
    s = rand_store(rng, 3, 5)
    s = LinearStore(s.var_names, tuple(LinRow(tuple(a / 3 for a in r.coeffs), r.rhs / 7) for r in s.rows))
    can = canonicalize_store(s)
    for _ in range(20):
        v = tuple(Q(rng.randint(-12, 12), rng.randint(1, 4)) for _ in range(3))
        assert contains_point(s, v) == contains_point(can, v)


def test_contains_point_examples():
    h = hull_block(Q(-3, 4), Q(1, 4))
    assert contains_point(h, (Q(1, 4), Q(1, 4)))
    assert not contains_point(h, (Q(1, 4), Q(1, 2)))
    assert contains_point(LinearStore(("a", "b")), (5, -3))
    with pytest.raises(StoreError):
        contains_point(h, (1,))


def test_fm_interval_projects_to_everything():
    s = store(("x", "y"), [((1, 0), 1), ((-1, 0), 0)])
    assert fm_eliminate(s, "x").rows == ()
    assert fm_eliminate(s, "x").var_names == ("y",)


def test_fm_contradiction_row_is_kept():
    s = store(("y",), [((1,), 3), ((-1,), -5)])
    out = fm_eliminate(s, "y")
    # the pairing gives 0 <= -2, which is stored in primitive form
    assert out.rows == (LinRow((), -1),)
    assert isinstance(feasible(s), Farkas)


def test_fm_unknown_variable():
    with pytest.raises(StoreError):
        fm_eliminate(store(("y",), [((1,), 3)]), "q")


def test_fm_ceiling():
    rows = [((1, Q(k)), k) for k in range(5)] + [((-1, Q(k)), k) for k in range(5)]
    with pytest.raises(FMCeilingExceeded):
        fm_eliminate(store(("x", "y"), rows), "x", max_rows=10)


def test_fm_bigm_block_equals_hull():
    l, u = Q(-3, 4), Q(1, 4)
    projected = remove_redundant(fm_eliminate(bigm_block(l, u), "d"))
    assert equivalent(projected, hull_block(l, u))
    # up to primitive scaling the surviving rows are exactly the hull rows
    assert set(projected.rows) == set(canonicalize_store(remove_redundant(hull_block(l, u))).rows)


def test_fm_encoder_block_matches_hand_block():
    net = ReluNetwork(1, (Layer(((1,),), (0,), True), Layer(((1,),), (0,), False)))
    l, u = Q(-3, 4), Q(1, 4)
    relaxed = relax_bigm(encode_bigm(net, BoxDomain((l,), (u,)), PreactivationBounds((l,), (u,))))
    for v in ("x_1", "z_2_1"):
        relaxed = fm_eliminate(relaxed, v)
    relaxed = LinearStore(("s", "z", "d"), relaxed.rows)
    assert equivalent(relaxed, bigm_block(l, u))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_fm_soundness_and_completeness(seed):
    rng = random.Random(seed)
    s = rand_store(rng, 3, 6)
    proj = fm_eliminate(s, "v1")
    for w in grid_points(-2, 2, 4, 2):
        lifted = s.with_rows([
            s.row_from_terms({"v0": Q(1)}, w[0]), s.row_from_terms({"v0": Q(-1)}, -w[0]),
            s.row_from_terms({"v2": Q(1)}, w[1]), s.row_from_terms({"v2": Q(-1)}, -w[1]),
        ])
        assert contains_point(proj, w) == isinstance(feasible(lifted), Point)


def test_remove_redundant_examples():
    s = store(("z",), [((1,), 1), ((1,), 2)])
    assert remove_redundant(s).rows == (LinRow((1,), 1),)
    h = hull_block(Q(-3, 4), Q(1, 4))
    # the triangle has three facets; l <= s <= u only touch it at vertices
    out = remove_redundant(h)
    assert out.rows == h.rows[:3]
    assert LinRow((Q(-1, 4), 1), Q(3, 16)) in out.rows
    assert equivalent(out, h)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_remove_redundant_mutual_entailment(seed):
    rng = random.Random(seed)
    s = rand_store(rng, 2, 6).with_rows([
        LinRow((1, 0), 4), LinRow((-1, 0), 4), LinRow((0, 1), 4), LinRow((0, -1), 4)])
    out = remove_redundant(s)
    assert set(out.rows) <= set(s.rows)
    assert equivalent(out, s)


def test_store_text_roundtrip():
    text = dump_store(A1_STORE, ("z2",))
    assert text.splitlines()[:2] == ["vars: x1 x2 z1 z2", "binaries: z2"]
    assert parse_store(text) == (A1_STORE, ("z2",))
    assert parse_store("# comment\nvars: a b\n1 -1/2 <= 3\n") == (store(("a", "b"), [((1, Q(-1, 2)), 3)]), ())


@pytest.mark.parametrize("text", ["1 2 <= 3\n", "vars: a\n1 2 <= 3\n", "vars: a\n1 >= 3\n", "vars: a a\n",
                                  "vars: a\nbinaries: q\n"])
def test_store_parse_errors(text):
    with pytest.raises(ValueError):
        parse_store(text)
