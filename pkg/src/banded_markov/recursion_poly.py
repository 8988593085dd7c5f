"""Recursion polynomials of a banded matrix, evaluated pointwise.

Left polynomials ``A[a][n]`` (``a < p``) solve ``sum_k A_k T[k, n] = x A_n``
and right polynomials ``B[b][n]`` (``b < q``) solve
``sum_k T[n, k] B_k = x B_n``, each seeded by a unit-lower-triangular block
of initial values. Everything is 0-based.

Values are computed either in binary64 or, when ``precision`` (bits) is
given, in MPFR through gmpy2. Recursion values grow geometrically with the
order, so eigenvector work at moderate ``N`` needs the extended mode.
"""

import math
from dataclasses import dataclass

import gmpy2
import numpy as np

from .errors import IndexOutOfTable, SpecFormatError, ZeroExtremeDiagonal


@dataclass(frozen=True)
class InitialConditions:
    """Unit-lower-triangular seeds ``nu`` (p x p) and ``xi`` (q x q).

    Column ``a`` of ``nu`` holds ``A[a][0..p-1]``; likewise ``xi`` for ``B``.
    """

    nu: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        for name in ("nu", "xi"):
            m = np.array(getattr(self, name), dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise SpecFormatError(f"{name} must be a square matrix")
            if not np.allclose(np.diag(m), 1.0, rtol=0, atol=0) or np.any(np.triu(m, 1) != 0):
                raise SpecFormatError(f"{name} must be unit lower triangular")
            m.flags.writeable = False
            object.__setattr__(self, name, m)

    @property
    def p(self):
        return self.nu.shape[0]

    @property
    def q(self):
        return self.xi.shape[0]

    @classmethod
    def default(cls, p, q):
        return cls(np.eye(p), np.eye(q))

    def to_dict(self):
        return {"nu": self.nu.tolist(), "xi": self.xi.tolist()}


def _resolve_ic(T, ic):
    if ic is None:
        return InitialConditions.default(T.p, T.q)
    if ic.p != T.p or ic.q != T.q:
        raise SpecFormatError(f"initial conditions are {ic.p}x{ic.q}, matrix bands are {T.p}x{T.q}")
    return ic


class _Arith:
    """Scalar conversion for binary64 (``bits=None``) or MPFR arithmetic."""

    def __init__(self, bits=None):
        self.bits = bits
        self.is_float = bits is None
        self.ctx = None if bits is None else gmpy2.context(precision=int(bits))

    def __enter__(self):
        if self.ctx is not None:
            self._saved = gmpy2.get_context()
            gmpy2.set_context(self.ctx.copy())
        return self

    def __exit__(self, *exc):
        if self.ctx is not None:
            gmpy2.set_context(self._saved)

    def num(self, v):
        if self.is_float:
            return float(v)
        return gmpy2.mpfr(v)

    @property
    def zero(self):
        return self.num(0)

    @property
    def one(self):
        return self.num(1)

    def array(self, n):
        return np.zeros(n) if self.is_float else np.array([self.zero] * n, dtype=object)


class BandRows:
    """Band entries converted to the working arithmetic.

    ``rows[n][d + p]`` is ``T[n, n + d]``; rows and columns past the end of a
    finite matrix are filled with 1 (see ``BandedMatrix.padded_entry``).
    """

    def __init__(self, T, n_rows, ar):
        self.p, self.q = T.p, T.q
        avail = n_rows if T.is_generator else min(n_rows, T.size)
        band = np.array(T.band(avail), dtype=float) if avail > 0 else np.zeros((T.width, 0))
        rows = []
        for n in range(n_rows):
            row = []
            for k in range(T.width):
                m = n + k - T.p
                if m < 0:
                    row.append(ar.zero)
                elif not T.is_generator and (n >= T.size or m >= T.size):
                    row.append(ar.one)
                else:
                    row.append(ar.num(band[k, n]))
            rows.append(row)
        self.rows = rows
        self.n_rows = n_rows

    def __call__(self, n, m):
        d = m - n
        if m < 0 or d < -self.p or d > self.q:
            return 0.0
        return self.rows[n][d + self.p]


def _recursion_A(E, x, n_values, nu, ar):
    p, q = E.p, E.q
    out = []
    for a in range(p):
        A = [ar.zero] * n_values
        for j in range(min(p, n_values)):
            A[j] = ar.num(nu[j, a])
        for n in range(0, n_values - p):
            s = x * A[n]
            for k in range(max(0, n - q), n + p):
                s -= A[k] * E.rows[k][n - k + E.p]
            piv = E.rows[n + p][E.p - p]
            if piv == 0:
                raise ZeroExtremeDiagonal(f"T[{n + p},{n}] vanishes", row=n + p, col=n)
            A[n + p] = s / piv
        out.append(A)
    return out


def _recursion_B(E, x, n_values, xi, ar):
    p, q = E.p, E.q
    out = []
    for b in range(q):
        B = [ar.zero] * n_values
        for j in range(min(q, n_values)):
            B[j] = ar.num(xi[j, b])
        for n in range(0, n_values - q):
            s = x * B[n]
            row = E.rows[n]
            for k in range(max(0, n - p), n + q):
                s -= row[k - n + E.p] * B[k]
            piv = row[E.p + q]
            if piv == 0:
                raise ZeroExtremeDiagonal(f"T[{n},{n + q}] vanishes", row=n, col=n + q)
            B[n + q] = s / piv
        out.append(B)
    return out


def _alpha_beta(E, N, ar):
    p, q = E.p, E.q
    alpha = [ar.one]
    beta = [ar.one]
    for n in range(N):
        alpha.append(alpha[-1] * E.rows[n + p][E.p - p] * (-1 if (p - 1) % 2 else 1))
        beta.append(beta[-1] * E.rows[n][E.p + q] * (-1 if (q - 1) % 2 else 1))
    return alpha, beta


def _char_poly(E, x, n, ar):
    """``det(x I_n - T[:n, :n])`` and its derivative.

    Partially pivoted band elimination carrying first-order derivatives.
    An exactly vanishing pivot column is handled in closed form: the
    determinant is zero and the derivative is the product of the remaining
    pivots times that column's derivative.

    Returns ``(value, derivative, log_derivative)``; ``log_derivative`` is
    ``None`` when the value is exactly zero.
    """
    if n == 0:
        return ar.one, ar.zero, ar.zero
    p, q = E.p, E.q
    W = p + q + 1
    zero, one = ar.zero, ar.one

    def fresh(r, c0):
        vals = [zero] * W
        ders = [zero] * W
        if r < n:
            row = E.rows[r]
            for j in range(W):
                c = c0 + j
                d = c - r
                if c < n and -p <= d <= q:
                    t = row[d + p]
                    if d == 0:
                        vals[j] = x - t
                        ders[j] = one
                    else:
                        vals[j] = -t
        return [vals, ders]

    win = [fresh(r, 0) for r in range(p + 1)]
    sign = 1
    mant, expo = one, 0
    dlog = zero
    zero_pivots = 0
    dzero = zero
    for j in range(n):
        m = max(range(p + 1), key=lambda i: abs(win[i][0][0]))
        if win[m][0][0] == 0:
            m = max(range(p + 1), key=lambda i: abs(win[i][1][0]))
            zero_pivots += 1
        if m:
            win[0], win[m] = win[m], win[0]
            sign = -sign
        v0, d0 = win[0]
        piv, dpiv = v0[0], d0[0]
        if piv == 0:
            if dpiv == 0:
                return zero, zero, None
            dzero = dpiv
            for i in range(1, p + 1):
                vi, di = win[i]
                if di[0] == 0:
                    continue
                ell = di[0] / dpiv
                for c in range(1, W):
                    vi[c] -= ell * v0[c]
        else:
            for i in range(1, p + 1):
                vi, di = win[i]
                if vi[0] == 0 and di[0] == 0:
                    continue
                ell = vi[0] / piv
                dell = (di[0] - ell * dpiv) / piv
                for c in range(1, W):
                    vi[c] -= ell * v0[c]
                    di[c] -= dell * v0[c] + ell * d0[c]
            dlog += dpiv / piv
            mant *= piv
            if ar.is_float:
                mant, e = math.frexp(mant)
                expo += e
        new = [[w[0][1:] + [zero], w[1][1:] + [zero]] for w in win[1:]]
        new.append(fresh(j + p + 1, j + 1))
        win = new
    if ar.is_float:
        try:
            value = math.ldexp(mant, expo)
        except OverflowError:
            value = math.copysign(math.inf, mant)
    else:
        value = mant
    value = value * sign
    if zero_pivots == 0:
        return value, value * dlog, dlog
    if zero_pivots == 1:
        return zero, value * dzero, None
    return zero, zero, None


@dataclass(frozen=True)
class PolynomialTable:
    """Recursion-polynomial values at a single point ``x``.

    Attributes
    ----------
    A : ndarray, shape (p, N + p)
    B : ndarray, shape (q, N + q)
    P : ndarray, shape (N + 2,)
        ``P[n] = det(x I_n - T[:n, :n])``; ``None`` if not requested.
    Pprime : scalar
        Derivative of ``P[N + 1]``.
    alpha, beta : ndarray, shape (N + 1,)
    """

    x: object
    N: int
    p: int
    q: int
    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    Pprime: object
    alpha: np.ndarray
    beta: np.ndarray
    ic: InitialConditions
    precision: int = None

    def to_float(self):
        f = np.vectorize(float, otypes=[float])
        P = None if self.P is None else f(self.P)
        return PolynomialTable(float(self.x), self.N, self.p, self.q, f(self.A), f(self.B), P,
                               None if self.Pprime is None else float(self.Pprime),
                               f(self.alpha), f(self.beta), self.ic, None)


def eval_recursions(T, x, N, ic=None, precision=None, with_char=True):
    """Tabulate recursion polynomials, characteristic polynomials and the
    signed extreme-diagonal products at ``x``.

    Parameters
    ----------
    T : BandedMatrix
    x : float or str
        Evaluation point; a decimal string keeps full precision in MPFR mode.
    N : int
        Truncation order; ``A`` gets ``N + p`` values, ``B`` gets ``N + q``.
    ic : InitialConditions, optional
        Defaults to identity seeds.
    precision : int, optional
        MPFR precision in bits; binary64 when omitted.
    with_char : bool
        Skip the ``P_0 .. P_{N+1}`` evaluations (quadratic in ``N``) if false.
    """
    if N < 0:
        raise IndexOutOfTable("N must be non-negative")
    ic = _resolve_ic(T, ic)
    with _Arith(precision) as ar:
        E = BandRows(T, N + max(T.p, T.q) + 1, ar)
        xv = ar.num(x)
        A = _recursion_A(E, xv, N + T.p, ic.nu, ar)
        B = _recursion_B(E, xv, N + T.q, ic.xi, ar)
        alpha, beta = _alpha_beta(E, N, ar)
        P = Pp = None
        if with_char:
            P = []
            for n in range(N + 2):
                val, der, _ = _char_poly(E, xv, n, ar)
                P.append(val)
            Pp = der
        dt = float if ar.is_float else object
        return PolynomialTable(
            xv, N, T.p, T.q,
            np.array(A, dtype=dt), np.array(B, dtype=dt),
            None if P is None else np.array(P, dtype=dt), Pp,
            np.array(alpha, dtype=dt), np.array(beta, dtype=dt), ic, precision)


def char_poly(T, x, N, precision=None):
    """Value and derivative of ``P_{N+1}(x) = det(x I - T^{[N]})``."""
    if N < 0:
        raise IndexOutOfTable("N must be non-negative")
    with _Arith(precision) as ar:
        E = BandRows(T, N + 1, ar)
        val, der, _ = _char_poly(E, ar.num(x), N + 1, ar)
        return val, der


def _det(M):
    """Determinant of a small square list-of-lists (float or MPFR)."""
    M = [list(r) for r in M]
    n = len(M)
    det = 1
    for j in range(n):
        m = max(range(j, n), key=lambda i: abs(M[i][j]))
        if M[m][j] == 0:
            return M[0][0] * 0
        if m != j:
            M[j], M[m] = M[m], M[j]
            det = -det
        det = det * M[j][j]
        for i in range(j + 1, n):
            ell = M[i][j] / M[j][j]
            for c in range(j + 1, n):
                M[i][c] -= ell * M[j][c]
    return det


def _first_row_cofactors(vals, N, width):
    """Cofactors of the first row of ``[row_n; vals[:, N+1] ; ...]``."""
    if width == 1:
        return [vals[0, 0] * 0 + 1]
    lower = [[vals[a, r] for a in range(width)] for r in range(N + 1, N + width)]
    out = []
    for a in range(width):
        minor = [[row[c] for c in range(width) if c != a] for row in lower]
        out.append(_det(minor) * (-1 if a % 2 else 1))
    return out


def determinantal_QR(table, n, N=None):
    """Determinantal polynomials ``(Q_{n,N}, R_{n,N})`` from a table.

    ``Q_{n,N}`` is the determinant with first row ``A[:, n]`` and further rows
    ``A[:, N+1] .. A[:, N+p-1]``; ``R`` is the analogue for ``B`` and ``q``.
    """
    N = table.N if N is None else N
    if n < 0 or n > N or N + table.p > table.A.shape[1] or N + table.q > table.B.shape[1]:
        raise IndexOutOfTable(f"(n={n}, N={N}) outside a table of order {table.N}", n=n, N=N)
    cq = _first_row_cofactors(table.A, N, table.p)
    cr = _first_row_cofactors(table.B, N, table.q)
    Q = sum(table.A[a, n] * cq[a] for a in range(table.p))
    R = sum(table.B[b, n] * cr[b] for b in range(table.q))
    return Q, R


def determinantal_vectors(table, N=None):
    """``(Q_{0..N,N}, R_{0..N,N})`` as arrays (same scalar type as the table)."""
    N = table.N if N is None else N
    if N + table.p > table.A.shape[1] or N + table.q > table.B.shape[1]:
        raise IndexOutOfTable(f"N={N} outside a table of order {table.N}", N=N)
    cq = np.array(_first_row_cofactors(table.A, N, table.p), dtype=table.A.dtype)
    cr = np.array(_first_row_cofactors(table.B, N, table.q), dtype=table.B.dtype)
    return cq @ table.A[:, :N + 1], cr @ table.B[:, :N + 1]


def recursion_growth(T, x, N):
    """``log10`` of the largest ``|A|``, ``|B|`` value up to order ``N`` in binary64.

    Used to choose the working precision of eigenvector evaluations.
    """
    table = eval_recursions(T, x, N, with_char=False)
    big = max(np.max(np.abs(table.A)), np.max(np.abs(table.B)), 1.0)
    if not np.isfinite(big):
        return 308.0
    return math.log10(big)
