import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from banded_markov.banded_core import from_rows, generator, truncate
from banded_markov.errors import DepthTooSmall, NotRawForm, PbfDoesNotExist, ResidualNotIdentity
from banded_markov.factorization import (
    BidiagonalFactor,
    FactorizationChain,
    compute_pbf,
    delta_sequence,
    normalize_chain,
    reconstruct,
    stochastic_normalize,
)

from conftest import product_matrices

TRIDIAG = [[2 / 3, 1 / 3], [1 / 3, 1 / 3, 1 / 3], [1 / 3, 2 / 3]]


def _dense_lu(A):
    """Doolittle LU without pivoting (textbook loop)."""
    n = A.shape[0]
    L, U = np.eye(n), A.astype(float).copy()
    for k in range(n):
        for i in range(k + 1, n):
            L[i, k] = U[i, k] / U[k, k]
            U[i] -= L[i, k] * U[k]
    return L, U


def test_two_by_two_raw(two_by_two):
    ch = compute_pbf(two_by_two)
    assert ch.form == "raw" and ch.p == 1 and ch.q == 1
    np.testing.assert_allclose(ch.lowers[0].dense(), [[1, 0], [1 / 2, 1]], atol=1e-15)
    np.testing.assert_allclose(ch.uppers[0].dense(), [[2 / 3, 1 / 3], [0, 1 / 2]], atol=1e-15)


def test_two_by_two_normalized(two_by_two):
    nc = normalize_chain(compute_pbf(two_by_two))
    np.testing.assert_allclose(nc.delta, [2 / 3, 1 / 2], atol=1e-15)
    np.testing.assert_allclose(nc.lowers[0].dense(), [[1, 0], [1 / 2, 1]], atol=1e-15)
    np.testing.assert_allclose(nc.uppers[0].dense(), [[1, 1 / 2], [0, 1]], atol=1e-15)
    with pytest.raises(NotRawForm):
        normalize_chain(nc)


def test_two_by_two_stochastic(two_by_two):
    ch = compute_pbf(two_by_two)
    deltas = delta_sequence(ch)
    np.testing.assert_allclose(deltas[1], [1, 1 / 2], atol=1e-15)
    np.testing.assert_allclose(deltas[2], [1, 1], atol=1e-15)
    sc = stochastic_normalize(ch)
    np.testing.assert_allclose(sc.lowers[0].dense(), [[1, 0], [1 / 2, 1 / 2]], atol=1e-15)
    np.testing.assert_allclose(sc.uppers[0].dense(), [[2 / 3, 1 / 3], [0, 1]], atol=1e-15)
    np.testing.assert_allclose(reconstruct(sc), [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-15)


def test_singular_tridiagonal_has_no_pbf():
    # eigenvalues 1, 2/3, 0: the last elimination pivot vanishes
    T = from_rows(1, 1, TRIDIAG)
    _, U = _dense_lu(truncate(T, 2))
    assert U[2, 2] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(PbfDoesNotExist):
        compute_pbf(T)
    ch = compute_pbf(T, depth=2)
    L, U = _dense_lu(truncate(T, 1))
    np.testing.assert_allclose(ch.lowers[0].dense(), L, atol=1e-15)
    np.testing.assert_allclose(ch.uppers[0].dense(), U, atol=1e-15)
    assert np.max(np.abs(reconstruct(ch) - truncate(T, 1))) <= 1e-15


def test_against_dense_lu(matrix_corpus):
    for p, q, T in matrix_corpus[:9]:
        if p == q == 1:
            L, U = _dense_lu(truncate(T, T.size - 1))
            ch = compute_pbf(T)
            np.testing.assert_allclose(ch.lowers[0].dense(), L, atol=1e-14)
            np.testing.assert_allclose(ch.uppers[0].dense(), U, atol=1e-14)


def test_substochastic_residual():
    sub = from_rows(1, 1, [[2 / 3, 1 / 3], [1 / 3, 1 / 3]], mode="substochastic")
    ch = compute_pbf(sub)
    sc = stochastic_normalize(ch, T_is_stochastic=False)
    # residual is T e: hand recursion gives delta_1 = (1, 1/6), delta_2 = (1, 2/3)
    np.testing.assert_allclose(sc.residual, [1, 2 / 3], atol=1e-15)
    for f in sc.lowers + sc.uppers:
        np.testing.assert_allclose(f.dense().sum(axis=1), 1.0, atol=1e-15)
    with pytest.raises(ResidualNotIdentity):
        stochastic_normalize(ch, T_is_stochastic=True)


def test_identity_chain():
    ones = np.ones(4)
    ident = BidiagonalFactor("lower", ones, np.zeros(3))
    up = BidiagonalFactor("upper", ones, np.zeros(3))
    ch = FactorizationChain([ident], [up], "raw", 4, exact_rows=4)
    nc = normalize_chain(ch)
    np.testing.assert_array_equal(nc.delta, ones)
    sc = stochastic_normalize(ch)
    np.testing.assert_array_equal(reconstruct(sc), np.eye(4))


def test_already_stochastic_factors_unchanged():
    rng = np.random.default_rng(3)
    n = 6
    a = rng.uniform(0.1, 0.5, n)
    low = BidiagonalFactor("lower", np.r_[1.0, 1 - a[1:]], a[1:])
    b = rng.uniform(0.1, 0.5, n)
    up = BidiagonalFactor("upper", np.r_[1 - b[:-1], 1.0], b[:-1])
    ch = FactorizationChain([low], [up], "raw", n, exact_rows=n)
    sc = stochastic_normalize(ch)
    for d in sc.meta["deltas"]:
        np.testing.assert_allclose(d, 1.0, atol=1e-15)
    np.testing.assert_allclose(sc.lowers[0].dense(), low.dense(), atol=1e-15)
    np.testing.assert_allclose(sc.uppers[0].dense(), up.dense(), atol=1e-15)


@pytest.fixture(scope="module")
def pbf_tail():
    # L (diag 3/4, sub 1/4) times U (diag 1/2, super 1/2), first row of L is e_0
    return generator(1, 1, [[1 / 2, 1 / 2]], [[1 / 8, 1 / 2, 3 / 8]])


def test_depth_errors(pbf_tail):
    with pytest.raises(DepthTooSmall):
        compute_pbf(pbf_tail, depth=0)
    with pytest.raises(DepthTooSmall):
        compute_pbf(pbf_tail)
    ch = compute_pbf(pbf_tail, depth=1)
    np.testing.assert_allclose(reconstruct(ch), [[1 / 2]])


def test_symmetric_tail_has_no_pbf(symmetric_tail):
    with pytest.raises(PbfDoesNotExist):
        compute_pbf(symmetric_tail, depth=5)


def test_no_pbf_detected():
    # singular: the Schur complement 1/2 - 1/2 vanishes
    T = from_rows(1, 1, [[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(PbfDoesNotExist):
        compute_pbf(T)


def test_generator_depth(pbf_tail):
    ch = compute_pbf(pbf_tail, depth=30)
    assert ch.exact_rows == 29
    A = truncate(pbf_tail, 29)
    assert np.max(np.abs(reconstruct(ch) - A)) <= 1e-10 * 30
    sc = stochastic_normalize(ch)
    assert np.max(np.abs(sc.residual[: ch.exact_rows] - 1)) <= 2e-12


def test_json_round_trip(two_by_two):
    sc = stochastic_normalize(compute_pbf(two_by_two))
    again = FactorizationChain.from_json(sc.to_json())
    np.testing.assert_array_equal(reconstruct(again), reconstruct(sc))


def _check_positive(chain):
    for f in chain.lowers + chain.uppers:
        assert f.is_positive()


@given(product_matrices(max_size=40), st.floats(0.1, 0.9))
def test_round_trip_property(T, theta):
    ch = compute_pbf(T, theta=theta)
    _check_positive(ch)
    A = truncate(T, T.size - 1)
    assert np.max(np.abs(reconstruct(ch) - A)) <= 1e-10 * T.size


@given(product_matrices(max_size=40))
def test_forms_agree(T):
    ch = compute_pbf(T)
    nc = normalize_chain(ch)
    sc = stochastic_normalize(ch)
    for f in nc.lowers + nc.uppers:
        np.testing.assert_array_equal(f.diag, 1.0)
    R = reconstruct(ch)
    assert np.max(np.abs(reconstruct(nc) - R)) <= 1e-10 * T.size
    assert np.max(np.abs(reconstruct(sc) - R)) <= 1e-10 * T.size


@given(product_matrices(max_size=40))
def test_stochastic_form_property(T):
    sc = stochastic_normalize(compute_pbf(T))
    _check_positive(sc)
    for f in sc.lowers + sc.uppers:
        assert np.max(np.abs(f.dense().sum(axis=1) - 1)) <= 1e-12
    assert np.max(np.abs(sc.residual - 1)) <= 1e-12 * (T.p + T.q)
    for d in sc.meta["deltas"]:
        assert np.all(np.asarray(d) > 0)


@given(product_matrices(max_size=30), st.integers(1, 20))
def test_leading_block_depth(T, depth):
    depth = min(depth, T.size)
    ch = compute_pbf(T, depth=depth)
    A = truncate(T, depth - 1)
    assert np.max(np.abs(reconstruct(ch) - A)) <= 1e-10 * depth
