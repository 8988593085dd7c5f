"""Independent reference computations.

Everything here works on dense matrices with textbook linear algebra
(numpy, mpmath, exact fractions) and shares no code with the banded
algorithms under test.
"""
from fractions import Fraction

import mpmath as mp
import numpy as np


def dense(T, N):
    """Leading (N+1) x (N+1) block, assembled entry by entry."""
    return np.array([[T.entry(n, m) for m in range(N + 1)] for n in range(N + 1)])


def exact_dense(T, N):
    return [[Fraction(T.entry(n, m)) for m in range(N + 1)] for n in range(N + 1)]


def mp_eig(A, dps=60):
    """Eigenvalues (descending) with right columns and left rows, ``W @ U = I``."""
    with mp.workdps(dps):
        M = mp.matrix(A.tolist())
        E, ER = mp.eig(M)
        order = sorted(range(len(E)), key=lambda i: -mp.re(E[i]))
        lam = [mp.re(E[i]) for i in order]
        U = mp.matrix(len(E), len(E))
        for j, i in enumerate(order):
            for r in range(len(E)):
                U[r, j] = mp.re(ER[r, i])
        W = U ** -1
        return lam, U, W


def char_poly_det(A, x, n):
    """``det(x I_n - A[:n, :n])`` with mpmath."""
    if n == 0:
        return mp.mpf(1)
    with mp.workdps(50):
        M = mp.matrix(A[:n, :n].tolist())
        return mp.det(x * mp.eye(n) - M)


def exact_recursions(T, x, N, nu=None, xi=None):
    """A and B polynomials from the eigen-relations, in exact rationals.

    ``A`` rows solve ``x A_n = sum_k A_k T[k, n]`` for ``A_{n+p}``; ``B``
    solves ``x B_n = sum_k T[n, k] B_k`` for ``B_{n+q}``.
    """
    p, q = T.p, T.q
    x = Fraction(x)
    size = N + max(p, q) + 2

    def t(n, m):
        if n < 0 or m < 0:
            return Fraction(0)
        if not T.is_generator and (n >= T.size or m >= T.size):
            d = m - n
            return Fraction(1) if -p <= d <= q else Fraction(0)
        return Fraction(T.entry(n, m))

    nu = np.eye(p) if nu is None else nu
    xi = np.eye(q) if xi is None else xi
    A = []
    for a in range(p):
        v = [Fraction(nu[j, a]) for j in range(p)]
        for n in range(0, N + 1):
            if n + p >= N + p:
                break
            s = sum((v[k] * t(k, n) for k in range(max(0, n - q), n + p)), Fraction(0))
            v.append((x * v[n] - s) / t(n + p, n))
        A.append(v[:N + p])
    B = []
    for b in range(q):
        v = [Fraction(xi[j, b]) for j in range(q)]
        for n in range(0, N + 1):
            if n + q >= N + q:
                break
            s = sum((t(n, k) * v[k] for k in range(max(0, n - p), n + q)), Fraction(0))
            v.append((x * v[n] - s) / t(n, n + q))
        B.append(v[:N + q])
    return A, B


def resolvent(A, s):
    """``(I - s A)^{-1}``."""
    n = A.shape[0]
    return np.linalg.inv(np.eye(n) - s * A)


def doob(A):
    """Perron renormalisation from a dense eigendecomposition (mpmath)."""
    lam, U, _ = mp_eig(A, dps=80)
    u = np.array([float(U[i, 0]) for i in range(A.shape[0])])
    u = u if u[0] > 0 else -u
    return A * u[None, :] / (float(lam[0]) * u[:, None])


def stationary_nullspace(P):
    """Left null vector of ``P - I`` normalised to a probability vector."""
    n = P.shape[0]
    M = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    return pi


def sign_changes_strict(v, rel=1e-10):
    """Sign changes ignoring entries below ``rel * max|v|``."""
    v = np.asarray(v, dtype=float)
    keep = v[np.abs(v) > rel * np.max(np.abs(v))]
    return int(np.sum(np.sign(keep[1:]) != np.sign(keep[:-1])))


def reflecting_dense(T, size):
    """Dense ``size x size`` truncation with cut mass returned to the diagonal."""
    A = np.array([[T.entry(n, m) for m in range(size)] for n in range(size)])
    A[np.diag_indices(size)] += 1.0 - A.sum(axis=1)
    return A
