import random
from fractions import Fraction as Q

import pytest
from hypothesis import given, settings, strategies as st

from helpers import infeasible_store, rand_cert_case, rand_store
from relucert.certs import (
    CertificateError,
    Derived,
    EntailCert,
    FarkasCert,
    StoreEmpty,
    Unbounded,
    check,
    check_entail,
    check_farkas,
    conic_combine,
    derive_entail,
    describe,
    format_cert,
    from_dense,
    norm_entail,
    norm_farkas,
    parse_cert,
    scale_entail,
    sparsify_farkas,
    to_dense,
)
from relucert.lpexact import Farkas, Infeasible, Optimal, feasible, solve_max
from relucert.polyhedron import LinearStore, LinRow, canonicalize_store
from relucert.worked import (
    A1_CERT,
    A1_STORE,
    A2_CORRECTED_CERT,
    A2_PAPER_CERT,
    A2_STORE,
    B_CERT,
    B_STORE,
    C_CERT,
    C_STORE,
    D_CERT,
    D_STORE,
    FINAL_CERT,
    FINAL_STORE,
    LEMMA_CERT,
    LEMMA_STORE,
)

GOLDEN = [
    (A1_STORE, A1_CERT, True),
    (A2_STORE, A2_PAPER_CERT, False),
    (A2_STORE, A2_CORRECTED_CERT, True),
    (B_STORE, B_CERT, True),
    (C_STORE, C_CERT, True),
    (D_STORE, D_CERT, True),
    (LEMMA_STORE, LEMMA_CERT, True),
    (FINAL_STORE, FINAL_CERT, True),
]


@pytest.mark.parametrize("store,cert,ok", GOLDEN)
def test_golden_status(store, cert, ok):
    assert check(store, cert).accepted == ok


def test_golden_values():
    assert check_farkas(B_STORE, B_CERT).ytb == Q(-1, 12)
    assert check_entail(A1_STORE, A1_CERT).ytb == Q(1, 2)
    assert check_entail(C_STORE, C_CERT).ytb == Q(1, 4)
    assert check_entail(D_STORE, D_CERT).ytb == Q(-1, 5)
    assert check_farkas(A2_STORE, A2_CORRECTED_CERT).ytb == Q(-1, 12)


def test_a2_paper_vector_rejected():
    res = check_farkas(A2_STORE, A2_PAPER_CERT)
    assert res.failed == "combination"
    assert res.reason == "yTA != 0 at coord 1"
    assert res.value == Q(-1, 4)
    assert res.residual == (Q(-1, 4), Q(-1, 4), 0, 0)
    assert describe(res).startswith("REJECT yTA != 0 at coord 1")


def test_reject_reasons_in_order():
    neg = FarkasCert(((0, Q(-1)), (1, Q(1))))
    assert check_farkas(B_STORE, neg).reason == "y < 0 at row 1"
    # a negative multiplier is reported even when the rest of the algebra works out
    sneaky = LinearStore(("x",), (LinRow((1,), 1), LinRow((1,), 2)))
    res = check_farkas(sneaky, FarkasCert(((0, Q(1)), (1, Q(-1)))))
    assert res.failed == "nonnegativity" and res.reason == "y < 0 at row 2"
    assert check_entail(C_STORE, EntailCert(((0, Q(-1)),), (-1, 0), 0)).reason == "y < 0 at row 1"
    assert check_farkas(C_STORE, FarkasCert.dense((1, 1))).reason == "yTA != 0 at coord 1"
    feasible_pair = LinearStore(("x",), (LinRow((1,), 1), LinRow((-1,), 0)))
    assert check_farkas(feasible_pair, FarkasCert.dense((1, 1))).reason == "yTb >= 0"
    assert check_entail(C_STORE, EntailCert.dense((1, 1), (1, 1), Q(1, 5))).reason == "yTb > tau"
    assert check_entail(C_STORE, EntailCert.dense((1, 0), (1, 1), 1)).reason == "yTA != c at coord 2"


def test_zero_certificate():
    assert not check_farkas(B_STORE, FarkasCert(()))
    assert check_entail(C_STORE, EntailCert((), (0, 0), 0))
    assert not check_entail(C_STORE, EntailCert((), (0, 0), Q(-1)))


def test_index_and_dimension_errors():
    with pytest.raises(CertificateError):
        check_farkas(B_STORE, FarkasCert(((3, Q(1)),)))
    with pytest.raises(CertificateError):
        check_entail(C_STORE, EntailCert.dense((1, 1), (1,), 1))
    with pytest.raises(CertificateError):
        FarkasCert(((1, Q(1)), (0, Q(1))))


def test_norm_examples():
    assert norm_farkas(A2_CORRECTED_CERT) == FarkasCert.dense((1, 1, 4, 4, 4))
    assert check_farkas(A2_STORE, norm_farkas(A2_CORRECTED_CERT))
    assert norm_farkas(FarkasCert.dense((2, 2, 2))) == FarkasCert.dense((1, 1, 1))
    zero = FarkasCert(())
    assert norm_farkas(zero) == zero and not check_farkas(B_STORE, zero)
    n = norm_entail(A1_CERT)
    assert n == EntailCert.dense((1, 1, 4, 4), (0, 0, 4, 4), 2)
    assert check_entail(A1_STORE, n)
    assert norm_entail(n) == n
    assert norm_entail(scale_entail(A1_CERT, 3)) == n


def test_scale_entail_rejects_nonpositive():
    with pytest.raises(CertificateError):
        scale_entail(C_CERT, 0)


def test_conic_examples():
    y = C_CERT.multipliers
    half = conic_combine((1, 1), Q(1, 4), y, y, Q(1, 2), Q(1, 2))
    assert half == C_CERT
    both = conic_combine((1, 1), Q(1, 4), y, y, 1, 1)
    assert both.target_coeffs == (2, 2) and both.target_rhs == Q(1, 2) and check_entail(C_STORE, both)
    other = ((0, Q(5)),)
    assert conic_combine((1, 1), Q(1, 4), y, other, 1, 0) == C_CERT
    with pytest.raises(CertificateError):
        conic_combine((1, 1), Q(1, 4), y, y, -1, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.fractions(0, 5, max_denominator=7), st.fractions(0, 5, max_denominator=7))
def test_conic_closure(seed, alpha, beta):
    rng = random.Random(seed)
    s = rand_store(rng, 2, 5).with_rows([LinRow((1, 0), 3), LinRow((-1, 0), 3), LinRow((0, 1), 3),
                                         LinRow((0, -1), 3)])
    c = (Q(rng.randint(-3, 3)), Q(rng.randint(-3, 3)))
    res = derive_entail(s, c)
    if not isinstance(res, Derived):
        return
    # a second certificate for the same target: the box rows alone
    box = tuple(sorted(
        [(len(s.rows) - 4 + (0 if c[0] >= 0 else 1), abs(c[0])), (len(s.rows) - 2 + (0 if c[1] >= 0 else 1),
                                                                   abs(c[1]))]))
    tau = max(res.tau, 3 * (abs(c[0]) + abs(c[1])))
    y2 = EntailCert(box, c, tau)
    assert check_entail(s, y2)
    comb = conic_combine(c, tau, res.cert.multipliers, y2.multipliers, alpha, beta)
    assert check_entail(s, comb)


def test_derive_examples():
    res = derive_entail(C_STORE, (1, 1))
    assert isinstance(res, Derived) and res.tau == Q(1, 4) and check_entail(C_STORE, res.cert)
    assert derive_entail(LinearStore(("x",), (LinRow((-1,), 0),)), (1,)) == Unbounded()
    res = derive_entail(B_STORE, (1, 0))
    assert isinstance(res, StoreEmpty) and check_farkas(B_STORE, res.farkas)


def padded_b():
    rows = list(B_STORE.rows) + [LinRow((1, 0), Q(1, 8) + k) for k in range(25)] + \
        [LinRow((0, 1), Q(1, 8) + k) for k in range(25)]
    return LinearStore(B_STORE.var_names, tuple(rows))


def test_sparsify_examples():
    out = sparsify_farkas(B_STORE, B_CERT)
    assert out.support <= 3 and check_farkas(B_STORE, out)
    s = padded_b()
    # dense seed: the tight rows plus every padded row, still a valid certificate
    y = [Q(1)] * 3 + [Q(0)] * 50
    y[3], y[28] = Q(1, 50), Q(1, 50)
    y[0], y[1] = Q(1) - Q(1, 50), Q(1) - Q(1, 50)
    seed = FarkasCert.dense(y)
    assert check_farkas(s, seed) and seed.support == 5
    dense_seed = FarkasCert.dense([Q(1)] * 3 + [Q(0)] * 50)
    out = sparsify_farkas(s, dense_seed)
    assert out.support <= 3 and check_farkas(s, out)
    out = sparsify_farkas(s, seed)
    assert out.support <= 3 and check_farkas(s, out)
    line = LinearStore(("x",), (LinRow((1,), 0), LinRow((-1,), -1)))
    assert sparsify_farkas(line, FarkasCert.dense((1, 1))).support <= 2
    with pytest.raises(CertificateError):
        sparsify_farkas(A2_STORE, A2_PAPER_CERT)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_soundness_cross_check(seed):
    rng = random.Random(seed)
    s, cert = rand_cert_case(rng)
    res = check(s, cert)
    if isinstance(cert, FarkasCert):
        if res:
            assert isinstance(feasible(s), Farkas)
    elif res:
        out = solve_max(s, cert.target_coeffs)
        assert isinstance(out, Infeasible) or (isinstance(out, Optimal) and out.value <= cert.target_rhs)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_normalization_and_scale_invariance(seed):
    rng = random.Random(seed)
    s, cert = rand_cert_case(rng)
    status = check(s, cert).accepted
    if isinstance(cert, FarkasCert):
        assert check(s, norm_farkas(cert)).accepted == status
    else:
        assert check(s, norm_entail(cert)).accepted == status
        for lam in (2, Q(1, 3), Q(7, 5)):
            assert check(s, scale_entail(cert, lam)).accepted == status


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 5))
def test_sparsify_bound(seed, d):
    rng = random.Random(seed)
    s = infeasible_store(rng, d, rng.randint(d + 2, 8 * d))
    seed_cert = FarkasCert.dense(feasible(s).certificate)
    out = sparsify_farkas(s, seed_cert)
    assert out.support <= d + 1 and check_farkas(s, out)


def test_dense_sparse_conversions():
    assert from_dense((0, Q(1, 2), 0, 3)) == ((1, Q(1, 2)), (3, Q(3)))
    assert to_dense(((1, Q(1, 2)),), 3) == (0, Q(1, 2), 0)
    with pytest.raises(CertificateError):
        to_dense(((5, Q(1)),), 3)


@pytest.mark.parametrize("cert", [B_CERT, A1_CERT, LEMMA_CERT, FarkasCert(())])
def test_text_roundtrip(cert):
    assert parse_cert(format_cert(cert)) == cert


def test_text_forms():
    assert format_cert(B_CERT) == "farkas: [(0, 1), (1, 1), (2, 1)]"
    assert format_cert(C_CERT) == "entail: target 1 1, tau 1/4, [(0, 1), (1, 1)]"
    assert parse_cert("farkas: dense [1, 0, 2/4]") == FarkasCert(((0, Q(1)), (2, Q(1, 2))))


@pytest.mark.parametrize("text", ["farkas [(0, 1)]", "farkas: [(0, 1),]", "farkas: [(1, 1), (0, 1)]",
                                  "entail: [(0, 1)]", "farkas: [(0, 1/0)]", "farkas: (0, 1)"])
def test_text_errors(text):
    with pytest.raises(CertificateError):
        parse_cert(text)


def test_canonical_store_with_synchronized_certificate():
    can = canonicalize_store(A2_STORE)
    # rows 3 and 4 were multiplied by 4, row 5 by 12
    y = (Q(1, 4), Q(1, 4), Q(1, 4), Q(1, 4), Q(1, 12))
    assert check_farkas(can, FarkasCert.dense(y))
