from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from banded_markov.banded_core import from_rows, truncate
from banded_markov.errors import IndexOutOfTable, SpecFormatError
from banded_markov.recursion_poly import (
    InitialConditions,
    PolynomialTable,
    char_poly,
    determinantal_QR,
    determinantal_vectors,
    eval_recursions,
)

from conftest import product_matrices
from oracles import char_poly_det, exact_recursions

TRIDIAG = [[2 / 3, 1 / 3], [1 / 3, 1 / 3, 1 / 3], [1 / 3, 2 / 3]]


def test_two_by_two_B(two_by_two):
    for x in (0.0, 0.25, 1.0):
        t = eval_recursions(two_by_two, x, 1)
        assert t.B[0, 0] == 1.0
        assert t.B[0, 1] == pytest.approx(3 * x - 2, abs=1e-15)
    assert eval_recursions(two_by_two, 1.0, 1).B[0, 1] == pytest.approx(1.0, abs=1e-15)


def test_two_by_two_char_poly(two_by_two):
    for x in (0.0, 0.3, 2.0):
        t = eval_recursions(two_by_two, x, 1)
        assert t.P[0] == 1.0
        assert t.P[1] == pytest.approx(x - 2 / 3, abs=1e-15)
        assert t.P[2] == pytest.approx(x * x - 4 / 3 * x + 1 / 3, abs=1e-15)
    val, der = char_poly(two_by_two, 1.0, 1)
    assert abs(val) <= 1e-15
    assert der == pytest.approx(2 / 3, abs=1e-15)


def test_order_zero(matrix_corpus):
    for _, _, T in matrix_corpus[:4]:
        val, der = char_poly(T, 0.4, 0)
        assert val == pytest.approx(0.4 - T.entry(0, 0), abs=1e-15)
        assert der == pytest.approx(1.0)


def test_full_stochastic_matrix_has_root_one():
    T = from_rows(1, 1, TRIDIAG)
    val, _ = char_poly(T, 1.0, 2)
    assert abs(val) <= 1e-15


def test_initial_conditions_seed(matrix_corpus):
    for p, q, T in matrix_corpus[:9]:
        t = eval_recursions(T, 0.7, 5)
        np.testing.assert_array_equal(t.A[:, :p], np.eye(p))
        np.testing.assert_array_equal(t.B[:, :q], np.eye(q))
        # the last polynomial starts as 0, ..., 0, 1
        assert list(t.A[p - 1, :p]) == [0.0] * (p - 1) + [1.0]


def test_initial_conditions_validation():
    with pytest.raises(SpecFormatError):
        InitialConditions(np.array([[1.0, 0.5], [0.0, 1.0]]), np.eye(1))
    with pytest.raises(SpecFormatError):
        InitialConditions(np.array([[2.0]]), np.eye(1))
    ic = InitialConditions(np.array([[1.0, 0.0], [0.3, 1.0]]), np.eye(1))
    assert ic.p == 2 and ic.q == 1


def _synthetic_table(A, B):
    p, q = A.shape[0], B.shape[0]
    N = A.shape[1] - p
    return PolynomialTable(0.0, N, p, q, A, B, None, None, np.ones(N + 1), np.ones(N + 1),
                           InitialConditions.default(p, q))


def test_determinantal_degenerate_cases(matrix_corpus):
    _, _, T = matrix_corpus[0]
    t = eval_recursions(T, 0.6, 6)
    for n in range(7):
        Q, R = determinantal_QR(t, n)
        assert Q == t.A[0, n] and R == t.B[0, n]
    A = np.array([[5.0, 1.0, 0.0], [7.0, 0.0, 1.0]])
    B = np.array([[2.0, 3.0]])
    syn = _synthetic_table(A, B)
    # first row (5, 7) against row N+1 = (0, 1): det = 5
    Q, _ = determinantal_QR(syn, 0, N=1)
    assert Q == 5.0
    with pytest.raises(IndexOutOfTable):
        determinantal_QR(t, 7)


def test_identity_determinant():
    A = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    syn = _synthetic_table(A, np.array([[1.0, 1.0]]))
    # first row A[:, 0] = (1, 0) and next row A[:, 2] = (0, 1)
    assert determinantal_QR(syn, 0, N=1)[0] == 1.0


@given(product_matrices(max_size=20), st.floats(0.0, 1.0))
def test_recursions_match_exact(T, x):
    N = min(8, T.size - 1 - max(T.p, T.q))
    if N < 0:
        return
    x = float(Fraction(x).limit_denominator(64))
    t = eval_recursions(T, x, N)
    A, B = exact_recursions(T, x, N)
    for a in range(T.p):
        ref = np.array([float(v) for v in A[a]])
        assert np.max(np.abs(t.A[a] - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))
    for b in range(T.q):
        ref = np.array([float(v) for v in B[b]])
        assert np.max(np.abs(t.B[b] - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


@given(product_matrices(max_size=16), st.floats(-0.5, 1.5))
def test_char_poly_matches_dense_det(T, x):
    N = T.size - 1
    A = truncate(T, N)
    t = eval_recursions(T, x, N - 1)
    for n in range(N + 1):
        ref = float(char_poly_det(A, x, n))
        assert abs(t.P[n] - ref) <= 1e-10 * abs(ref) + 1e-14
    # derivative by central differences of the dense oracle
    h = 1e-6
    val, der = char_poly(T, x, N)
    ref_d = float((char_poly_det(A, x + h, N + 1) - char_poly_det(A, x - h, N + 1)) / (2 * h))
    assert abs(der - ref_d) <= 1e-6 * max(1.0, abs(ref_d))


@settings(max_examples=6)
@given(product_matrices(max_size=30))
def test_determinant_identity(T):
    """``P_n = alpha_n det A_n = beta_n det B_n`` on a grid of points.

    Evaluated in 256-bit arithmetic: in binary64 the recursion values grow
    with cancellation and the identity only holds to about 1e-7 relative.
    """
    N = min(T.size - 1 - max(T.p, T.q), 30)
    with mp.workdps(70):
        for x in np.linspace(0, 1, 50):
            t = eval_recursions(T, repr(float(x)), N, precision=256)
            for n in range(N + 1):
                blockA = mp.matrix([[mp.mpf(str(t.A[a, n + i])) for a in range(T.p)] for i in range(T.p)])
                blockB = mp.matrix([[mp.mpf(str(t.B[b, n + i])) for b in range(T.q)] for i in range(T.q)])
                P = mp.mpf(str(t.P[n]))
                lhsA = mp.mpf(str(t.alpha[n])) * mp.det(blockA)
                lhsB = mp.mpf(str(t.beta[n])) * mp.det(blockB)
                assert abs(P - lhsA) <= 1e-10 * abs(P) + 1e-14
                assert abs(P - lhsB) <= 1e-10 * abs(P) + 1e-14


@given(product_matrices(max_size=20))
def test_recursion_residual(T):
    N = T.size - 1 - max(T.p, T.q)
    x = 0.37
    t = eval_recursions(T, x, N)
    A = truncate(T, N + max(T.p, T.q))
    scale = max(1.0, np.max(np.abs(t.A)), np.max(np.abs(t.B)))
    for n in range(N):
        for a in range(T.p):
            s = sum(t.A[a, k] * A[k, n] for k in range(max(0, n - T.q), n + T.p + 1))
            assert abs(s - x * t.A[a, n]) <= 1e-10 * scale
        for b in range(T.q):
            s = sum(A[n, k] * t.B[b, k] for k in range(max(0, n - T.p), n + T.q + 1))
            assert abs(s - x * t.B[b, n]) <= 1e-10 * scale


@given(product_matrices(max_size=14))
def test_monic_degree(T):
    N = T.size - 2
    n = N + 1
    nodes = np.cos(np.pi * (np.arange(n + 1) + 0.5) / (n + 1)) * 0.5 + 0.5
    vals = [char_poly(T, float(c), N, precision=200)[0] for c in nodes]
    # leading coefficient = divided difference of order n
    lead = sum(float(v) / np.prod([c - d for d in nodes if d != c]) for v, c in zip(vals, nodes))
    assert lead == pytest.approx(1.0, abs=1e-8)


def test_mpfr_matches_float(matrix_corpus):
    _, _, T = matrix_corpus[4]
    tf = eval_recursions(T, 0.55, 20)
    tm = eval_recursions(T, "0.55", 20, precision=200)
    np.testing.assert_allclose(tm.to_float().A, tf.A, rtol=1e-9)
    np.testing.assert_allclose(tm.to_float().P, tf.P, rtol=1e-9, atol=1e-300)


def test_determinantal_vectors_match_scalar(matrix_corpus):
    _, _, T = matrix_corpus[8]
    t = eval_recursions(T, "0.4", 12, precision=200)
    Q, R = determinantal_vectors(t)
    for n in range(13):
        q1, r1 = determinantal_QR(t, n)
        assert float(abs(Q[n] - q1)) <= 1e-40 * float(abs(q1))
        assert float(abs(R[n] - r1)) <= 1e-40 * float(abs(r1))
