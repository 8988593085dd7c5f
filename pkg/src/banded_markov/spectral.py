"""Eigenvalues, biorthogonal eigenvectors and discrete spectral measures of
truncations ``T^{[N]}``.

Eigenvalues start from a dense eigensolver and are polished by Newton steps
on the characteristic polynomial in MPFR. Eigenvectors come from the
determinantal polynomials:

    u_k = beta_N R(lambda_k),    w_k = Q(lambda_k) / (beta_N sum_l Q_l R_l)

evaluated at a precision that covers the growth of the recursion values.
Each pair ``(u_k, w_k)`` is rescaled to equal norms, which leaves ``u_k w_k^T``
and every spectral mass unchanged while keeping binary64 copies usable.
"""

import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np

from .banded_core import truncate
from .config import DEFAULT_TOLERANCES
from .errors import (
    BiorthogonalityFailure,
    ComplexEigenvalue,
    IndexOutOfTable,
    MassBoundViolation,
    NonPositivePerronVector,
    NotSimpleSpectrum,
)
from .recursion_poly import (
    BandRows,
    _Arith,
    _char_poly,
    _resolve_ic,
    determinantal_vectors,
    eval_recursions,
    recursion_growth,
)

_BITS_PER_DIGIT = math.log2(10)


def _to_float(a):
    return np.vectorize(float, otypes=[float])(a) if np.asarray(a).size else np.asarray(a, float)


@dataclass(frozen=True)
class EigenSystem:
    """Spectral data of ``T^{[N]}``.

    Attributes
    ----------
    lambdas : ndarray, shape (N+1,)
        Strictly decreasing eigenvalues.
    right : ndarray, shape (N+1, N+1)
        Column ``k`` is ``u_k``.
    left : ndarray, shape (N+1, N+1)
        Row ``k`` is ``w_k``; ``left @ right`` is the identity.
    diagnostics : dict
        Working precision, refinement path, residuals.
    """

    N: int
    p: int
    q: int
    lambdas: np.ndarray
    right: np.ndarray
    left: np.ndarray
    ic: object
    diagnostics: dict
    bits: int = None
    lambdas_mp: np.ndarray = field(default=None, repr=False)
    right_mp: np.ndarray = field(default=None, repr=False)
    left_mp: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class SpectralMeasure:
    """Point masses ``masses[k] = rho_k mu_k^T`` (q x p) at ``lambdas[k]``."""

    N: int
    p: int
    q: int
    lambdas: np.ndarray
    masses: np.ndarray
    mu: np.ndarray
    rho: np.ndarray
    ic: object
    christoffel_positive: bool
    bits: int = None
    lambdas_mp: np.ndarray = field(default=None, repr=False)
    mu_mp: np.ndarray = field(default=None, repr=False)
    rho_mp: np.ndarray = field(default=None, repr=False)
    T: object = field(default=None, repr=False)

    def mass_sum(self):
        return self.masses.sum(axis=0)


def working_bits(T, N, approx=None):
    """MPFR precision (bits) for eigenvector evaluation at order ``N``."""
    if approx is None:
        approx = np.linalg.eigvals(truncate(T, N)).real
    pts = {float(np.max(approx)), float(np.min(approx)), float(np.median(approx))}
    growth = max(recursion_growth(T, x, N) for x in pts)
    digits = 30 + math.ceil(growth)
    return int(math.ceil(digits * _BITS_PER_DIGIT)) + 8


def _newton(E, x, n, ar, digits, found=(), max_iter=200):
    """Newton on ``P_n``, deflated by already ``found`` roots (Maehly).

    Returns ``(root, iterations, converged)``.
    """
    tol = gmpy2.mpfr(10) ** (-(digits - 8))
    near = gmpy2.mpfr(10) ** (-(digits // 3))
    last = None
    for it in range(max_iter):
        val, der, dlog = _char_poly(E, x, n, ar)
        if dlog is None:
            return x, it, True
        if found:
            if any(x == r for r in found):
                x = x * (1 + near) + near
                continue
            dlog = dlog - sum(1 / (x - r) for r in found)
        if dlog == 0:
            return x, it, val == 0
        step = 1 / dlog
        x = x - step
        a = abs(step)
        scale = max(abs(x), tol)
        if a <= tol * scale:
            return x, it + 1, True
        # rounding noise: steps stopped shrinking once already tiny
        if last is not None and a <= near * scale and a >= last / 2:
            return x, it + 1, True
        last = a
    return x, max_iter, False


def _aberth(E, n, start, ar, digits, max_iter=500):
    z = [gmpy2.mpc(complex(s)) for s in start]
    # break exact ties in the start values
    for i in range(len(z)):
        z[i] += gmpy2.mpc(0, 1e-3 * (i + 1) / len(z))
    tol = gmpy2.mpfr(10) ** (-(digits - 8))
    for _ in range(max_iter):
        worst = gmpy2.mpfr(0)
        for i in range(len(z)):
            val, der, dlog = _char_poly(E, z[i], n, ar)
            if dlog is None or dlog == 0:
                continue
            ratio = 1 / dlog
            s = sum(1 / (z[i] - z[j]) for j in range(len(z)) if j != i)
            corr = ratio / (1 - ratio * s)
            z[i] -= corr
            worst = max(worst, abs(corr) / max(abs(z[i]), tol))
        if worst <= tol:
            break
    return z


def _refine(T, N, approx, bits, tol):
    """Polish dense eigenvalue estimates into MPFR roots of ``P_{N+1}``."""
    n = N + 1
    digits = int(bits / _BITS_PER_DIGIT)
    with _Arith(bits) as ar:
        E = BandRows(T, n, ar)
        roots = []
        iters = 0
        ok = True
        for a in approx:
            r, it, conv = _newton(E, ar.num(float(a.real)), n, ar, digits, roots)
            roots.append(r)
            iters += it
            ok = ok and conv
        roots.sort(reverse=True)
        path = "newton"
        if not ok or not _distinct(roots, tol):
            path = "aberth"
            z = _aberth(E, n, approx, ar, digits)
            imag = max(abs(c.imag) for c in z)
            if imag > gmpy2.mpfr(10) ** (-(digits // 2)) * max(abs(c) for c in z):
                raise ComplexEigenvalue(f"eigenvalue with imaginary part {float(imag)!r}",
                                        imag=float(imag))
            roots = sorted((c.real for c in z), reverse=True)
        return roots, {"refinement": path, "newton_iterations": iters}


def _distinct(roots, tol):
    lam0 = abs(roots[0]) if roots else 1
    return all(roots[i] - roots[i + 1] > tol.sep * lam0 for i in range(len(roots) - 1))


def eigenvalues(T, N, tol=DEFAULT_TOLERANCES, bits=None):
    """Eigenvalues of ``T^{[N]}`` in decreasing order (binary64 copies).

    Raises
    ------
    NotSimpleSpectrum
        If two refined eigenvalues are closer than ``tol.sep * lambda_0``.
    ComplexEigenvalue
    """
    lam, _, _ = _eigenvalues_mp(T, N, tol, bits)
    return _to_float(np.array(lam, dtype=object))


def _eigenvalues_mp(T, N, tol, bits):
    TN = truncate(T, N)
    # complex pairs from a split cluster still seed Newton through their real parts
    approx = np.linalg.eigvals(TN)
    if bits is None:
        bits = working_bits(T, N, approx.real)
    roots, info = _refine(T, N, approx, bits, tol)
    if not _distinct(roots, tol):
        gaps = [float(roots[i] - roots[i + 1]) for i in range(len(roots) - 1)]
        raise NotSimpleSpectrum(f"minimum eigenvalue gap {min(gaps)!r} below tolerance",
                                min_gap=min(gaps), N=N)
    info["bits"] = bits
    return roots, bits, info


def _vectors_at(T, N, lam, ic, bits):
    """``(u, w, P_N(lam) * P'_{N+1}(lam) / alpha_N)``-consistent pair at one root (MPFR)."""
    table = eval_recursions(T, lam, N, ic, precision=bits, with_char=False)
    with _Arith(bits):
        Q, R = determinantal_vectors(table)
        beta = table.beta[N]
        s = sum(Q[i] * R[i] for i in range(N + 1))
        u = np.array([beta * r for r in R], dtype=object)
        w = np.array([qq / (beta * s) for qq in Q], dtype=object)
        nu = gmpy2.sqrt(sum(v * v for v in u))
        nw = gmpy2.sqrt(sum(v * v for v in w))
        scale = gmpy2.sqrt(nw / nu) if nu > 0 and nw > 0 else gmpy2.mpfr(1)
        u = u * scale
        w = w / scale
        if u[0] < 0:
            u, w = -u, -w
        return u, w, table


def _left_by_char_poly(T, N, lam, table, bits):
    """Left vector from ``alpha_N Q_n / (P_N P'_{N+1})`` (unbalanced)."""
    with _Arith(bits) as ar:
        E = BandRows(T, N + 2, ar)
        PN, _, _ = _char_poly(E, lam, N, ar)
        _, dP, _ = _char_poly(E, lam, N + 1, ar)
        if PN == 0 or dP == 0:
            return None
        Q, _ = determinantal_vectors(table)
        return np.array([table.alpha[N] * qq / (PN * dP) for qq in Q], dtype=object)


def _inverse_iteration_left(TN, lam, u):
    """Left eigenvector by inverse iteration in binary64, scaled so ``w u = 1``."""
    n = TN.shape[0]
    shift = lam * (1 + 1e-13) + 1e-300
    M = TN.T - shift * np.eye(n)
    y = np.ones(n)
    for _ in range(3):
        y = np.linalg.solve(M, y)
        y /= np.max(np.abs(y))
    return y / float(y @ u)


def eigensystem(T, N, ic=None, tol=DEFAULT_TOLERANCES, bits=None, check=True):
    """Biorthogonal eigensystem of ``T^{[N]}``.

    Parameters
    ----------
    T : BandedMatrix
    N : int
    ic : InitialConditions, optional
    tol : Tolerances
    bits : int, optional
        MPFR precision; chosen from the recursion growth when omitted.
    check : bool
        Verify ``W U = I`` and retry once at doubled precision on failure.

    Raises
    ------
    BiorthogonalityFailure
    """
    ic = _resolve_ic(T, ic)
    if N < 0:
        raise IndexOutOfTable("N must be non-negative")
    sys = _eigensystem(T, N, ic, tol, bits)
    extra = _extra_bits(sys.right_mp.T, sys.left_mp, sys.bits)
    if extra:
        sys = _eigensystem(T, N, ic, tol, sys.bits + extra)
        sys.diagnostics["range_extension_bits"] = extra
    if not check:
        return sys
    res = sys.diagnostics["biorthogonality_residual"]
    if res > tol.bio * (N + 1):
        sys = _eigensystem(T, N, ic, tol, 2 * sys.bits, retry=True)
        res = sys.diagnostics["biorthogonality_residual"]
        if res > tol.bio * (N + 1):
            raise BiorthogonalityFailure(f"W U - I residual {res!r} after refinement",
                                         residual=res, N=N)
    return sys


def _eigensystem(T, N, ic, tol, bits, retry=False):
    roots, bits, info = _eigenvalues_mp(T, N, tol, bits)
    n = N + 1
    U = np.empty((n, n), dtype=object)
    W = np.empty((n, n), dtype=object)
    paths = []
    max_route_gap = 0.0
    TN = None
    for k, lam in enumerate(roots):
        u, w, table = _vectors_at(T, N, lam, ic, bits)
        alt = _left_by_char_poly(T, N, lam, table, bits)
        if alt is None:
            if TN is None:
                TN = truncate(T, N)
            w_f = _inverse_iteration_left(TN, float(lam), _to_float(u))
            with _Arith(bits):
                w = np.array([gmpy2.mpfr(v) for v in w_f], dtype=object)
            paths.append("inverse_iteration")
        else:
            # both routes describe the same vector before balancing
            with _Arith(bits):
                ratio = [a / b for a, b in zip(alt, w) if b != 0]
                if ratio:
                    r0 = ratio[0]
                    max_route_gap = max(max_route_gap,
                                        float(max(abs(r / r0 - 1) for r in ratio)))
            paths.append("determinantal")
        U[:, k] = u
        W[k, :] = w
    lam_f = _to_float(np.array(roots, dtype=object))
    Uf, Wf = _to_float(U), _to_float(W)
    res = float(np.max(np.abs(Wf @ Uf - np.eye(n))))
    if res > tol.bio * n:
        # binary64 copies lose accuracy when eigenvectors are ill conditioned
        res = _mp_identity_residual(W, U, bits)
    info.update({
        "biorthogonality_residual": res,
        "vector_path": "inverse_iteration" if "inverse_iteration" in paths else "determinantal",
        "left_route_discrepancy": max_route_gap,
        "retried": retry,
    })
    return EigenSystem(N, T.p, T.q, lam_f, Uf, Wf, ic, info, bits,
                       np.array(roots, dtype=object), U, W)


def _extra_bits(rows_a, rows_b, bits):
    """Bits needed so the smallest vector entries keep ~15 significant digits.

    The working precision leaves about 30 digits relative to the largest
    entry of each vector; entries spanning more decades need more.
    """
    span = 0.0
    with _Arith(bits):
        for v in list(rows_a) + list(rows_b):
            mags = [abs(x) for x in v if x != 0]
            if mags:
                span = max(span, float(gmpy2.log10(max(mags) / min(mags))))
    if span <= 15:
        return 0
    return int(math.ceil((span - 10) * _BITS_PER_DIGIT))


def _mp_identity_residual(W, U, bits):
    with _Arith(bits):
        G = W.dot(U)
        n = G.shape[0]
        return max(float(abs(G[i, j] - (1 if i == j else 0))) for i in range(n) for j in range(n))


def perron_pair(T, N, ic=None, tol=DEFAULT_TOLERANCES, with_left=False):
    """Dominant eigenvalue and positive right eigenvector of ``T^{[N]}``.

    The vector is scaled jointly with the left Perron vector so that
    ``w0 @ u0 = 1`` and both have equal Euclidean norm.

    Returns
    -------
    (lambda0, u0) or (lambda0, u0, w0) if ``with_left``.
    """
    ic = _resolve_ic(T, ic)
    TN = truncate(T, N)
    approx = np.linalg.eigvals(TN)
    top = approx[np.argmax(approx.real)]
    bits = working_bits(T, N, approx.real)
    digits = int(bits / _BITS_PER_DIGIT)
    with _Arith(bits) as ar:
        E = BandRows(T, N + 1, ar)
        lam, _, _ = _newton(E, ar.num(float(top.real)), N + 1, ar, digits)
    u, w, _ = _vectors_at(T, N, lam, ic, bits)
    extra = _extra_bits([u], [w], bits)
    if extra:
        bits += extra
        digits = int(bits / _BITS_PER_DIGIT)
        with _Arith(bits) as ar:
            E = BandRows(T, N + 1, ar)
            lam, _, _ = _newton(E, ar.num(lam), N + 1, ar, digits)
        u, w, _ = _vectors_at(T, N, lam, ic, bits)
    u, w = _to_float(u), _to_float(w)
    if not (np.all(u > 0) and np.all(w > 0)):
        raise NonPositivePerronVector("Perron vectors are not entrywise positive",
                                      min_u=float(u.min()), min_w=float(w.min()))
    if with_left:
        return float(lam), u, w
    return float(lam), u


def christoffel_numbers(sys, ic=None):
    """Christoffel numbers ``mu`` ((N+1) x p) and ``rho`` ((N+1) x q).

    ``mu_k = nu^{-1} w_k[:p]`` and ``rho_k = xi^{-1} u_k[:q]``, in the
    balanced eigenvector gauge of ``sys`` (masses ``rho_k mu_k^T`` do not
    depend on the gauge).

    Returns
    -------
    mu, rho, positive : ndarray, ndarray, bool
    """
    mu, rho, _, _ = _christoffel(sys, ic)
    positive = bool(np.all(mu > 0) and np.all(rho > 0))
    return mu, rho, positive


def _christoffel(sys, ic):
    ic = sys.ic if ic is None else ic
    p, q, n = sys.p, sys.q, sys.N + 1
    if n < max(p, q):
        raise IndexOutOfTable(f"need N+1 >= max(p, q) = {max(p, q)} for Christoffel numbers")
    with _Arith(sys.bits) as ar:
        nu_inv = _unit_lower_inverse([[ar.num(v) for v in row] for row in ic.nu])
        xi_inv = _unit_lower_inverse([[ar.num(v) for v in row] for row in ic.xi])
        mu = np.array([[sum(nu_inv[a][j] * sys.left_mp[k, j] for j in range(p)) for a in range(p)]
                       for k in range(n)], dtype=object)
        rho = np.array([[sum(xi_inv[b][j] * sys.right_mp[j, k] for j in range(q)) for b in range(q)]
                        for k in range(n)], dtype=object)
    return _to_float(mu), _to_float(rho), mu, rho


def _unit_lower_inverse(L):
    n = len(L)
    inv = [[L[0][0] * 0 for _ in range(n)] for _ in range(n)]
    for c in range(n):
        inv[c][c] = L[0][0] * 0 + 1
        for r in range(c + 1, n):
            inv[r][c] = -sum(L[r][j] * inv[j][c] for j in range(c, r))
    return inv


def mass_bound(ic):
    """``xi^{-1} I_{q,p} nu^{-T}``, the total mass matrix."""
    p, q = ic.p, ic.q
    eye = np.zeros((q, p))
    eye[np.arange(min(p, q)), np.arange(min(p, q))] = 1.0
    return np.linalg.solve(ic.xi, eye) @ np.linalg.inv(ic.nu).T


def spectral_measure(T, N, ic=None, tol=DEFAULT_TOLERANCES, sys=None):
    """Discrete matrix-valued spectral measure of ``T^{[N]}``.

    Raises
    ------
    MassBoundViolation
        If the masses do not sum to ``xi^{-1} I_{q,p} nu^{-T}`` within
        ``tol.meas * (N + 1)``.
    """
    ic = _resolve_ic(T, ic)
    if sys is None:
        sys = eigensystem(T, N, ic, tol)
    mu, rho, mu_mp, rho_mp = _christoffel(sys, ic)
    masses = rho[:, :, None] * mu[:, None, :]
    with _Arith(sys.bits):
        total = [[float(sum(rho_mp[k, b] * mu_mp[k, a] for k in range(N + 1))) for a in range(T.p)]
                 for b in range(T.q)]
    err = float(np.max(np.abs(np.array(total) - mass_bound(ic))))
    if err > tol.meas * (N + 1):
        raise MassBoundViolation(f"mass sum deviates by {err!r}", deviation=err, N=N)
    positive = bool(np.all(mu > 0) and np.all(rho > 0))
    return SpectralMeasure(N, T.p, T.q, sys.lambdas, masses, mu, rho, ic, positive, sys.bits,
                           sys.lambdas_mp, mu_mp, rho_mp, T)


def _measure_vectors(measure, evaluator=None):
    """Exact-arithmetic ``x_k[n] = sum_b B_n rho_kb`` and ``y_k[m] = sum_a mu_ka A_m``."""
    N, p, q = measure.N, measure.p, measure.q
    if evaluator is None:
        def evaluator(lam):
            return eval_recursions(measure.T, lam, N, measure.ic, precision=measure.bits,
                                   with_char=False)
    X, Y = [], []
    with _Arith(measure.bits):
        for k, lam in enumerate(measure.lambdas_mp):
            t = evaluator(lam)
            X.append([sum(t.B[b, n] * measure.rho_mp[k, b] for b in range(q)) for n in range(N + 1)])
            Y.append([sum(t.A[a, m] * measure.mu_mp[k, a] for a in range(p)) for m in range(N + 1)])
    return np.array(X, dtype=object), np.array(Y, dtype=object)


def biorthogonality_check(measure, evaluator=None):
    """Largest ``|sum_k sum_ab B_n M_k A_m - delta_nm|`` over ``n, m <= N``.

    ``evaluator(x)`` must return a :class:`PolynomialTable` at ``x``; by
    default tables are evaluated at the measure's working precision.
    """
    X, Y = _measure_vectors(measure, evaluator)
    with _Arith(measure.bits):
        G = X.T.dot(Y)
        n = G.shape[0]
        return max(float(abs(G[i, j] - (1 if i == j else 0))) for i in range(n) for j in range(n))


def mixed_orthogonality_check(measure, evaluator=None):
    """Largest violation of the mixed multiple orthogonality relations.

    For ``m = 1..N``, 1-based ``b`` and ``n <= ceil((m+1-b)/q) - 1``:
    ``sum_k lambda_k^n rho_kb sum_a mu_ka A_m(lambda_k) = 0``, and the
    analogous relation with ``p``, ``a`` and the right polynomials.
    """
    X, Y = _measure_vectors(measure, evaluator)
    N, p, q = measure.N, measure.p, measure.q
    worst = 0.0
    with _Arith(measure.bits):
        lam = measure.lambdas_mp
        for m in range(1, N + 1):
            for b in range(1, q + 1):
                top = -(-(m + 1 - b) // q) - 1
                for n in range(0, top + 1):
                    s = sum(lam[k] ** n * measure.rho_mp[k, b - 1] * Y[k, m] for k in range(N + 1))
                    worst = max(worst, float(abs(s)))
            for a in range(1, p + 1):
                top = -(-(m + 1 - a) // p) - 1
                for n in range(0, top + 1):
                    s = sum(lam[k] ** n * measure.mu_mp[k, a - 1] * X[k, m] for k in range(N + 1))
                    worst = max(worst, float(abs(s)))
    return worst


def spectral_reconstruction_error(sys, TN, power=1):
    """``max |U D^power W - (T^{[N]})^power|``, summed in working precision."""
    with _Arith(sys.bits):
        scaled = sys.right_mp * np.array([lam ** power for lam in sys.lambdas_mp], dtype=object)
        approx = _to_float(scaled.dot(sys.left_mp))
    return float(np.max(np.abs(approx - np.linalg.matrix_power(TN, power))))


def eigenvector_sign_changes(sys, k, side="right"):
    """Sign variations ``(v_min, v_max)`` of eigenvector ``k`` in working precision.

    Entries count as zero below ``10**(-digits/2)`` relative to the largest
    entry, where ``digits`` is the working decimal precision.
    """
    v = sys.right_mp[:, k] if side == "right" else sys.left_mp[k]
    rel = 10.0 ** (-(sys.bits / _BITS_PER_DIGIT) / 2)
    return sign_changes(v, rel_zero=rel)


def sign_changes(v, rel_zero=1e-12):
    """Sign variations ``(v_min, v_max)`` of a vector.

    Entries below ``rel_zero * max|v|`` count as zeros; ``v_min`` skips them
    and ``v_max`` assigns them the signs that maximize the count.
    """
    v = np.asarray(v)
    scale = max(abs(x) for x in v) if len(v) else 0
    signs = [0 if abs(x) <= rel_zero * scale else (1 if x > 0 else -1) for x in v]
    nz = [s for s in signs if s]
    v_min = sum(1 for a, b in zip(nz, nz[1:]) if a != b)
    # best[s] = max changes for a prefix ending with sign s
    best = {1: 0, -1: 0}
    first = True
    for s in signs:
        choices = (s,) if s else (1, -1)
        if first:
            best = {c: (0 if c in choices else -10**9) for c in (1, -1)}
            first = False
            continue
        best = {c: (max(best[c], best[-c] + 1) if c in choices else -10**9) for c in (1, -1)}
    v_max = max(best.values()) if signs else 0
    return v_min, v_max


def interlaces(outer, inner):
    """Strict interlacing of ``inner`` (order N) by ``outer`` (order N+1), both decreasing."""
    outer = list(outer)
    inner = list(inner)
    if len(outer) != len(inner) + 1:
        return False
    return all(outer[i] > inner[i] > outer[i + 1] for i in range(len(inner)))
