"""Markov-chain quantities from the spectral data of truncations.

For a truncation ``T^{[N]}`` with Perron pair ``(lambda_0, u_0)`` the Doob
transform ``T_hat = diag(u_0)^-1 T^{[N]} diag(u_0) / lambda_0`` is
stochastic and

    (T_hat^k)[n, m] = u_0[m] / u_0[n] * sum_j u_j[n] (lambda_j / lambda_0)^k w_j[m].

Spectral sums are carried out at the eigensystem's working precision; the
eigenvectors of these non-normal matrices are too ill conditioned for the
cancellations to be done in binary64.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .banded_core import truncate
from .config import DEFAULT_TOLERANCES
from .errors import (
    ClassificationMismatch,
    InsufficientTruncations,
    NonPositivePerronVector,
    SOutOfRange,
    StateOutOfRange,
)
from .recursion_poly import BandRows, _Arith, _char_poly, determinantal_vectors, eval_recursions
from .spectral import _christoffel, _to_float, eigensystem, spectral_measure

S_GRID = (0.9, 0.99, 0.999, 0.9999)


def _perron(sys):
    u0 = sys.right_mp[:, 0]
    w0 = sys.left_mp[0]
    if not (all(v > 0 for v in u0) and all(v > 0 for v in w0)):
        raise NonPositivePerronVector("Perron vectors are not entrywise positive", N=sys.N)
    return sys.lambdas_mp[0], u0, w0


def _check_state(sys, *states):
    for s in states:
        if not 0 <= s <= sys.N:
            raise StateOutOfRange(f"state {s} outside 0..{sys.N}", state=s, N=sys.N)


def doob_transform(T, N, sys=None):
    """Stochastic renormalization ``diag(u0)^-1 T^{[N]} diag(u0) / lambda0``."""
    if sys is None:
        sys = eigensystem(T, N)
    lam0, u0, _ = _perron(sys)
    u = _to_float(u0)
    return truncate(T, N) * u[None, :] / u[:, None] / float(lam0)


def time_reversal(T, N, sys=None):
    """Reversed chain ``diag(w0)^-1 (T^{[N]})^T diag(w0) / lambda0``."""
    if sys is None:
        sys = eigensystem(T, N)
    lam0, _, w0 = _perron(sys)
    w = _to_float(w0)
    return truncate(T, N).T * w[None, :] / w[:, None] / float(lam0)


def kstep_prob(sys, n, m, k):
    """``(T_hat^k)[n, m]`` from the spectral sum."""
    _check_state(sys, n, m)
    if k < 0:
        raise ValueError("k must be non-negative")
    lam0, u0, _ = _perron(sys)
    with _Arith(sys.bits):
        U, W, lam = sys.right_mp, sys.left_mp, sys.lambdas_mp
        s = sum(U[n, j] * (lam[j] / lam0) ** k * W[j, m] for j in range(sys.N + 1))
        return float(u0[m] / u0[n] * s)


def kstep_matrix(sys, k):
    """All of ``T_hat^k`` from the spectral sum."""
    lam0, u0, _ = _perron(sys)
    with _Arith(sys.bits):
        ratios = np.array([(lam / lam0) ** k for lam in sys.lambdas_mp], dtype=object)
        S = (sys.right_mp * ratios).dot(sys.left_mp)
        S = S * u0[None, :] / u0[:, None]
        return _to_float(S)


def _gf_sum(sys, n, m, s):
    if not abs(s) < 1:
        raise SOutOfRange(f"|s| must be < 1, got {s!r}", s=s)
    _check_state(sys, n, m)
    lam0, u0, _ = _perron(sys)
    U, W, lam = sys.right_mp, sys.left_mp, sys.lambdas_mp
    s = U[0, 0] * 0 + s
    total = sum(U[n, j] * W[j, m] / (1 - s * lam[j] / lam0) for j in range(sys.N + 1))
    return u0[m] / u0[n] * total


def transition_gf(sys, n, m, s):
    """``P_{n,m}(s) = sum_k s^k (T_hat^k)[n, m]`` for ``|s| < 1``."""
    with _Arith(sys.bits):
        return float(_gf_sum(sys, n, m, s))


def first_passage_gf(sys, n, m, s):
    """First-passage generating function from ``n`` to ``m``.

    ``1 - 1 / P_{m,m}(s)`` on the diagonal and ``P_{n,m}(s) / P_{m,m}(s)``
    otherwise.
    """
    with _Arith(sys.bits):
        pmm = _gf_sum(sys, m, m, s)
        if n == m:
            return float(1 - 1 / pmm)
        return float(_gf_sum(sys, n, m, s) / pmm)


def stationary(T, N, sys=None, method="eigenvector", ic=None):
    """Stationary distribution of ``T_hat``.

    Parameters
    ----------
    method : {"eigenvector", "christoffel", "determinantal"}
        ``u0 * w0`` entrywise; the Christoffel-number expansion at
        ``lambda0``; or ``alpha_N beta_N Q_m R_m / (P_N P'_{N+1})`` at
        ``lambda0``.
    """
    if sys is None:
        sys = eigensystem(T, N, ic)
    lam0, u0, w0 = _perron(sys)
    if method == "eigenvector":
        with _Arith(sys.bits):
            return _to_float(u0 * w0)
    table = eval_recursions(T, lam0, N, sys.ic, precision=sys.bits, with_char=False)
    if method == "christoffel":
        _, _, mu, rho = _christoffel(sys, sys.ic)
        with _Arith(sys.bits):
            right = [sum(table.B[b, m] * rho[0, b] for b in range(T.q)) for m in range(N + 1)]
            left = [sum(table.A[a, m] * mu[0, a] for a in range(T.p)) for m in range(N + 1)]
            return _to_float(np.array([r * l for r, l in zip(right, left)], dtype=object))
    if method == "determinantal":
        with _Arith(sys.bits) as ar:
            E = BandRows(T, N + 2, ar)
            PN, _, _ = _char_poly(E, lam0, N, ar)
            _, dP, _ = _char_poly(E, lam0, N + 1, ar)
            Q, R = determinantal_vectors(table)
            c = table.alpha[N] * table.beta[N] / (PN * dP)
            return _to_float(np.array([c * qq * rr for qq, rr in zip(Q, R)], dtype=object))
    raise ValueError(f"unknown method {method!r}")


def return_times(pi):
    """Expected return times ``1 / pi``."""
    return 1.0 / np.asarray(pi, dtype=float)


def convergence_rate(sys):
    """Geometric rate ``lambda_1 / lambda_0`` and the leading correction.

    Returns
    -------
    rate : float
    second_term : callable
        ``second_term(n, m, k)`` approximates ``(T_hat^k)[n, m] - pi[m]`` by
        ``(u0[m] / u0[n]) u_1[n] w_1[m] rate^k``.
    """
    if sys.N < 1:
        raise StateOutOfRange("convergence rate needs N >= 1")
    lam0, u0, _ = _perron(sys)
    with _Arith(sys.bits):
        rate = sys.lambdas_mp[1] / lam0
        U, W = sys.right_mp, sys.left_mp

        def coeff(n, m):
            return float(u0[m] / u0[n] * U[n, 1] * W[1, m])

    rate_f = float(rate)

    def second_term(n, m, k):
        with _Arith(sys.bits):
            return coeff(n, m) * rate_f ** k

    return rate_f, second_term


def fitted_decay(T_hat, pi, k_range=(10, 40)):
    """Decay rate of ``max |T_hat^k - 1 pi|`` fitted over ``k_range``.

    Uses ``(T_hat - 1 pi)^k = T_hat^k - 1 pi`` so the powers are formed
    without cancellation against ``pi``.
    """
    B = np.asarray(T_hat) - np.outer(np.ones(len(pi)), pi)
    k0, k1 = k_range
    P = np.linalg.matrix_power(B, k0)
    ks, logs = [], []
    for k in range(k0, k1 + 1):
        norm = float(np.max(np.abs(P)))
        if norm > 0:
            ks.append(k)
            logs.append(math.log(norm))
        P = P @ B
    if len(ks) < 2:
        return 0.0
    slope = np.polyfit(ks, logs, 1)[0]
    return float(math.exp(slope))


def detailed_balance_residual(T_hat, T_tilde, pi):
    """``max |pi_i T_hat[i, j] - pi_j T_tilde[j, i]|``."""
    pi = np.asarray(pi)
    return float(np.max(np.abs(pi[:, None] * T_hat - (pi[None, :] * T_tilde.T))))


def _irreducible(T_hat, p, q):
    n = T_hat.shape[0]
    if n == 1:
        return True, 1
    A = (T_hat > 0).astype(np.int64)
    R = np.eye(n, dtype=np.int64)
    limit = -(-(n - 1) // min(p, q)) + 1
    for k in range(1, max(limit, 1) + 1):
        R = np.minimum(R @ A, 1)
        if R.min() > 0:
            return True, k
    return False, limit


def recurrence_limit(sys, m, s_grid=S_GRID):
    """Extrapolate ``g(s) = (1 - s) P_{m,m}(s)`` to ``s = 1``.

    ``lim F_{m,m}(s) = 1`` exactly when the limit of ``g`` is positive; the
    limit also equals ``pi[m]``.
    """
    with _Arith(sys.bits):
        g = [float((1 - s) * _gf_sum(sys, m, m, s)) for s in s_grid]
    h1, h2 = 1 - s_grid[-2], 1 - s_grid[-1]
    g0 = (h1 * g[-1] - h2 * g[-2]) / (h1 - h2)
    return g0, g


def classify_finite(T, N, sys=None, s_grid=S_GRID, tol=DEFAULT_TOLERANCES):
    """Constructive irreducibility, aperiodicity, recurrence and ergodicity checks.

    Raises
    ------
    ClassificationMismatch
        If any check fails; all four hold for a truncation with a PBF.
    """
    if sys is None:
        sys = eigensystem(T, N)
    T_hat = doob_transform(T, N, sys)
    irreducible, power = _irreducible(T_hat, T.p, T.q)
    aperiodic = bool(np.all(np.diag(T_hat) > 0))
    pi = stationary(T, N, sys)
    limits = []
    for m in range(N + 1):
        g0, _ = recurrence_limit(sys, m, s_grid)
        limits.append(g0)
    limits = np.array(limits)
    recurrent = bool(np.all(limits > 0))
    ergodic = irreducible and recurrent and aperiodic
    flags = {"irreducible": irreducible, "aperiodic": aperiodic,
             "recurrent": recurrent, "ergodic": ergodic}
    if not all(flags.values()):
        raise ClassificationMismatch(f"constructive checks failed: {flags}", **flags)
    diag = {
        "positivity_power": power,
        "return_limit_vs_pi": float(np.max(np.abs(limits - pi) / pi)),
        "F_at_s_max": [first_passage_gf(sys, m, m, s_grid[-1]) for m in range(min(N + 1, 3))],
    }
    return flags, diag


@dataclass
class ChainReport:
    N: int
    lambda0: float
    lambda1: float
    pi: np.ndarray
    return_times: np.ndarray
    rate: float
    classification: dict
    diagnostics: dict = field(default_factory=dict)
    infinite_diagnostics: dict = None

    def to_dict(self):
        d = asdict(self)
        d["pi"] = self.pi.tolist()
        d["return_times"] = self.return_times.tolist()
        return d


def analyze(T, N, ic=None, tol=DEFAULT_TOLERANCES):
    """Full finite-truncation report."""
    sys = eigensystem(T, N, ic, tol)
    pis = {m: stationary(T, N, sys, m) for m in ("eigenvector", "christoffel", "determinantal")}
    pi = pis["eigenvector"]
    T_hat = doob_transform(T, N, sys)
    T_tilde = time_reversal(T, N, sys)
    flags, cdiag = classify_finite(T, N, sys, tol=tol)
    rate = float(sys.lambdas[1] / sys.lambdas[0]) if N >= 1 else 0.0
    spread = max(float(np.max(np.abs(pis[a] - pis[b])))
                 for a in pis for b in pis)
    diagnostics = {
        "stationary_formula_spread": spread,
        "pi_invariance_residual": float(np.max(np.abs(pi @ T_hat - pi))),
        "pi_sum_error": float(abs(pi.sum() - 1)),
        "doob_row_sum_error": float(np.max(np.abs(T_hat.sum(axis=1) - 1))),
        "reversal_row_sum_error": float(np.max(np.abs(T_tilde.sum(axis=1) - 1))),
        "detailed_balance_residual": detailed_balance_residual(T_hat, T_tilde, pi),
        "eigensystem": dict(sys.diagnostics),
        **cdiag,
    }
    return ChainReport(N, float(sys.lambdas[0]), float(sys.lambdas[1]) if N >= 1 else float("nan"),
                       pi, return_times(pi), rate, flags, diagnostics)


def recurrence_integral(measure, s, rescale=False):
    """``sum_k M_k[0, 0] / (1 - s x_k)`` with ``x_k = lambda_k`` (or ``lambda_k / lambda_0``)."""
    if not abs(s) < 1:
        raise SOutOfRange(f"|s| must be < 1, got {s!r}", s=s)
    with _Arith(measure.bits):
        lam = measure.lambdas_mp
        scale = lam[0] if rescale else 1
        m00 = [measure.rho_mp[k, 0] * measure.mu_mp[k, 0] for k in range(measure.N + 1)]
        return float(sum(m / (1 - s * l / scale) for m, l in zip(m00, lam)))


def classify_infinite(T, N_list, s_grid=S_GRID, tol=DEFAULT_TOLERANCES, growth_threshold=2.0,
                      n_stationary=20):
    """Recurrence and ergodicity trends of a semi-infinite chain across truncations.

    The estimates are trends, not proofs. For each ``N`` the report holds
    ``lambda0``, the gap ``1 - lambda0``, the mass ``M_0[0, 0]`` at the top
    eigenvalue and the recurrence integral ``sum_k M_k[0,0] / (1 - s x_k)``
    on ``s_grid``, both with ``x_k = lambda_k`` and with the Perron-rescaled
    ``x_k = lambda_k / lambda0``.

    Parameters
    ----------
    growth_threshold : float
        Ratio of the largest-``s`` integral between the last and first ``N``
        above which the chain is called recurrent-leaning.
    n_stationary : int
        Number of states in the stationary estimate when ergodic-leaning.
    """
    N_list = [int(n) for n in N_list]
    if len(N_list) < 4 or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise InsufficientTruncations("need at least 4 strictly increasing truncation orders",
                                      N_list=N_list)
    rows = []
    last_measure = None
    for N in N_list:
        meas = spectral_measure(T, N, tol=tol)
        lam0 = float(meas.lambdas[0])
        row = {
            "N": N,
            "lambda0": lam0,
            "gap": 1.0 - lam0,
            "mass11": float(meas.masses[0, 0, 0]),
            "integral": {repr(s): recurrence_integral(meas, s) for s in s_grid},
            "integral_rescaled": {repr(s): recurrence_integral(meas, s, rescale=True) for s in s_grid},
        }
        rows.append(row)
        last_measure = meas
    key = repr(s_grid[-1])
    growth = rows[-1]["integral"][key] / rows[0]["integral"][key]
    masses = [r["mass11"] for r in rows]
    mass_estimate = _extrapolate_mass(N_list, masses)
    out = {
        "N_list": N_list,
        "s_grid": list(s_grid),
        "rows": rows,
        "integral_growth": growth,
        "recurrent_leaning": bool(growth >= growth_threshold),
        "mass_at_one_estimate": mass_estimate,
        "ergodic_leaning": bool(mass_estimate > tol.mass),
        "lambda0_trend": [r["lambda0"] for r in rows],
    }
    if out["ergodic_leaning"]:
        out["stationary_estimate"] = _stationary_at_one(T, last_measure, n_stationary)
    return out


def _extrapolate_mass(N_list, masses):
    """Limit of ``M_0[0,0]`` assuming a ``c / N`` correction (last two orders)."""
    n1, n2 = N_list[-2], N_list[-1]
    m1, m2 = masses[-2], masses[-1]
    est = (n2 * m2 - n1 * m1) / (n2 - n1)
    return float(max(est, 0.0)) if min(masses) > 0 else 0.0


def _stationary_at_one(T, measure, n_states):
    """``pi_n = sum_ab B_n(1) m_ba A_n(1)`` with ``m`` the top mass of the last truncation."""
    n_states = min(n_states, measure.N + 1)
    table = eval_recursions(T, 1.0, n_states, measure.ic, precision=measure.bits, with_char=False)
    M = measure.masses[0]
    with _Arith(measure.bits):
        out = []
        for n in range(n_states):
            out.append(float(sum(table.B[b, n] * M[b, a] * table.A[a, n]
                                 for a in range(T.p) for b in range(T.q))))
    return out
