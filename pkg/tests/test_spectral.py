import math

import numpy as np
import pytest
from hypothesis import given, settings

from banded_markov.banded_core import from_rows, truncate
from banded_markov.config import Tolerances
from banded_markov.errors import NotSimpleSpectrum
from banded_markov.recursion_poly import InitialConditions
from banded_markov.spectral import (
    biorthogonality_check,
    christoffel_numbers,
    eigensystem,
    eigenvalues,
    eigenvector_sign_changes,
    interlaces,
    mass_bound,
    mixed_orthogonality_check,
    perron_pair,
    sign_changes,
    spectral_measure,
    spectral_reconstruction_error,
)

from conftest import product_matrices
from oracles import mp_eig, sign_changes_strict

TRIDIAG = [[2 / 3, 1 / 3], [1 / 3, 1 / 3, 1 / 3], [1 / 3, 2 / 3]]


def test_two_by_two_eigenvalues(two_by_two):
    np.testing.assert_allclose(eigenvalues(two_by_two, 1), [1, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(eigenvalues(two_by_two, 0), [2 / 3], atol=1e-15)


def test_tridiagonal_eigenvalues():
    T = from_rows(1, 1, TRIDIAG)
    lam, _, _ = mp_eig(truncate(T, 2))
    # the full block is singular, so only the order-1 truncation is positive
    assert float(lam[0]) == pytest.approx(1.0, abs=1e-15)
    sub = eigenvalues(T, 1)
    ref = (1 + np.array([1, -1]) * math.sqrt(1 - 4 * (2 / 9 - 1 / 9))) / 2
    np.testing.assert_allclose(sub, ref, atol=1e-15)


def test_two_by_two_eigenvectors(two_by_two):
    sys = eigensystem(two_by_two, 1)
    u0, u1 = sys.right[:, 0], sys.right[:, 1]
    assert u0[0] == pytest.approx(u0[1], rel=1e-14)
    assert u1[0] == pytest.approx(-u1[1], rel=1e-14)
    w0 = sys.left[0]
    assert w0[0] == pytest.approx(w0[1], rel=1e-14)
    np.testing.assert_allclose(sys.left @ sys.right, np.eye(2), atol=1e-14)
    assert sign_changes(u1) == (1, 1)


def test_two_by_two_christoffel(two_by_two):
    sys = eigensystem(two_by_two, 1)
    mu, rho, positive = christoffel_numbers(sys)
    np.testing.assert_allclose(mu[:, 0], sys.left[:, 0], atol=1e-15)
    np.testing.assert_allclose(rho[:, 0], sys.right[0], atol=1e-15)
    assert rho[0, 0] * mu[0, 0] == pytest.approx(0.5, abs=1e-14)
    assert float(np.sum(rho[:, 0] * mu[:, 0])) == pytest.approx(1.0, abs=1e-14)
    # u_1 ~ (1, -1) and w_1 ~ (1, -1) keep a positive leading entry
    assert positive


def test_two_by_two_measure(two_by_two):
    m = spectral_measure(two_by_two, 1)
    np.testing.assert_allclose(m.lambdas, [1, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(m.masses[:, 0, 0], [0.5, 0.5], atol=1e-14)
    np.testing.assert_allclose(m.mass_sum(), [[1.0]], atol=1e-14)
    assert biorthogonality_check(m) <= 1e-12


def test_one_by_one_measure(two_by_two):
    m = spectral_measure(two_by_two, 0)
    np.testing.assert_allclose(m.lambdas, [2 / 3], atol=1e-15)
    np.testing.assert_allclose(m.masses[:, 0, 0], [1.0], atol=1e-14)
    lam, u = perron_pair(two_by_two, 0)
    assert lam == pytest.approx(2 / 3, abs=1e-15)
    assert u.shape == (1,) and u[0] > 0


def test_perron_pair_stochastic(two_by_two):
    lam, u, w = perron_pair(two_by_two, 1, with_left=True)
    assert lam == pytest.approx(1.0, abs=1e-15)
    assert u[0] == pytest.approx(u[1], rel=1e-14)
    assert float(w @ u) == pytest.approx(1.0, abs=1e-14)


def test_perron_pair_substochastic(substochastic_two):
    lam, u = perron_pair(substochastic_two, 1)
    # trace 1 and determinant 1/9
    assert lam == pytest.approx((3 + math.sqrt(5)) / 6, abs=1e-15)
    assert 0 < lam < 1 and np.all(u > 0)
    ref, U, _ = mp_eig(truncate(substochastic_two, 1))
    assert lam == pytest.approx(float(ref[0]), abs=1e-15)
    v = np.array([float(U[i, 0]) for i in range(2)])
    np.testing.assert_allclose(u / u[0], v / v[0], rtol=1e-14)


def test_mass_bound_general_ic():
    ic = InitialConditions(np.array([[1.0, 0.0], [0.5, 1.0]]), np.eye(1))
    M = mass_bound(ic)
    # xi^{-1} I_{1,2} nu^{-T}
    np.testing.assert_allclose(M, [[1.0, -0.5]], atol=1e-15)


def test_measure_with_nontrivial_ic(matrix_corpus):
    p, q, T = next(c for c in matrix_corpus if c[0] == 2 and c[1] == 1)
    ic = InitialConditions(np.array([[1.0, 0.0], [0.25, 1.0]]), np.eye(1))
    m = spectral_measure(T, 12, ic)
    np.testing.assert_allclose(m.mass_sum(), mass_bound(ic), atol=1e-10 * 13)
    assert biorthogonality_check(m) <= 1e-9 * 13


def test_not_simple_spectrum():
    # oscillatory inputs never have double roots, so widen the separation
    T = from_rows(1, 1, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]])
    with pytest.raises(NotSimpleSpectrum):
        eigenvalues(T, 1, tol=Tolerances(sep=1.0))


def test_sign_changes_zero_aware():
    assert sign_changes([1.0, 0.0, -1.0]) == (1, 1)
    assert sign_changes([1.0, 0.0, 1.0]) == (0, 2)
    assert sign_changes([1.0, 1e-20, -2.0, 3.0]) == (2, 2)


def test_interlaces_helper():
    assert interlaces([3, 2, 1], [2.5, 1.5])
    assert not interlaces([3, 2, 1], [2, 1.5])
    assert not interlaces([3, 2], [2.5, 1.5])


def test_eigenvalues_match_oracle(matrix_corpus):
    for p, q, T in matrix_corpus[:9]:
        N = 15
        lam = eigenvalues(T, N)
        ref, _, _ = mp_eig(truncate(T, N))
        np.testing.assert_allclose(lam, [float(v) for v in ref], rtol=1e-12, atol=1e-14)
        assert np.all(np.diff(lam) < 0) and lam[-1] > 0


def test_eigenvectors_match_oracle(matrix_corpus):
    for p, q, T in matrix_corpus[:9]:
        N = 10
        sys = eigensystem(T, N)
        _, U, W = mp_eig(truncate(T, N), dps=80)
        for k in range(N + 1):
            ref = np.array([float(U[i, k]) for i in range(N + 1)])
            u = sys.right[:, k]
            # compare directions: the projection residual vanishes
            c = float(u @ ref) / float(ref @ ref)
            assert np.max(np.abs(u - c * ref)) <= 1e-10 * np.max(np.abs(u))
            assert sign_changes_strict(u) == k


def test_biorthogonality_and_reconstruction(matrix_corpus):
    for p, q, T in matrix_corpus[:9]:
        N = 20
        sys = eigensystem(T, N)
        assert sys.diagnostics["biorthogonality_residual"] <= 1e-9 * (N + 1)
        assert spectral_reconstruction_error(sys, truncate(T, N)) <= 1e-11 * (N + 1)


def test_measure_identities(matrix_corpus):
    for p, q, T in matrix_corpus[:9]:
        N = 20
        m = spectral_measure(T, N)
        np.testing.assert_allclose(m.mass_sum(), mass_bound(m.ic), atol=1e-10 * (N + 1))
        assert biorthogonality_check(m) <= 1e-9 * (N + 1)
        assert mixed_orthogonality_check(m) <= 1e-10 * (N + 1)


@settings(max_examples=10)
@given(product_matrices(max_size=24))
def test_spectral_properties(T):
    N = T.size - 1
    sys = eigensystem(T, N)
    assert np.all(np.diff(sys.lambdas) < 0)
    assert sys.lambdas[-1] > 0
    assert abs(float(sys.lambdas_mp[0]) - 1) <= 1e-14
    for k in range(N + 1):
        assert eigenvector_sign_changes(sys, k) == (k, k)
        assert eigenvector_sign_changes(sys, k, "left") == (k, k)
    inner = eigensystem(T, N - 1)
    assert interlaces(sys.lambdas_mp, inner.lambdas_mp)
    assert sys.diagnostics["biorthogonality_residual"] <= 1e-9 * (N + 1)


@settings(max_examples=10)
@given(product_matrices(max_size=24))
def test_perron_pair_property(T):
    N = T.size - 2
    lam, u, w = perron_pair(T, N, with_left=True)
    TN = truncate(T, N)
    # the cut-off mass can sit below the binary64 resolution of 1 - lambda_0
    assert 0 < lam <= 1
    assert np.all(u > 0) and np.all(w > 0)
    assert np.max(np.abs(TN @ u - lam * u)) <= 1e-12 * np.max(u)
    assert float(w @ u) == pytest.approx(1.0, abs=1e-12)
