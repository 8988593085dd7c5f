"""Positive bidiagonal factorization (PBF) of banded matrices.

A banded matrix with bandwidths ``(p, q)`` is written as

    T = L_1 ... L_p  U_q ... U_1

with lower bidiagonal ``L_i`` and upper bidiagonal ``U_j`` having positive
diagonal and off-diagonal entries. Three forms are supported:

``raw``
    Unit-diagonal lower factors; the pivots of the LU step sit in ``U_q``.
``normalized``
    All factors have unit diagonal and a single diagonal ``delta`` sits
    between the lower and upper factors.
``stochastic``
    Every factor is row stochastic; the product times the residual diagonal
    ``residual`` (identity for a stochastic matrix) reproduces ``T``.

Factors are computed on the leading ``depth x depth`` block. LU without
pivoting and bidiagonal products are causal on leading blocks, so the block
factors are exact for a semi-infinite generator as well.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .banded_core import BandedMatrix, truncate
from .config import DEFAULT_TOLERANCES
from .errors import (
    DepthTooSmall,
    NotRawForm,
    PbfDoesNotExist,
    ResidualNotIdentity,
    SpecFormatError,
)

FORMS = ("raw", "normalized", "stochastic")


@dataclass(frozen=True)
class BidiagonalFactor:
    """Lower or upper bidiagonal matrix.

    ``offdiag[i]`` is entry ``(i+1, i)`` for a lower factor and ``(i, i+1)``
    for an upper one.
    """

    kind: str
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        if self.kind not in ("lower", "upper"):
            raise SpecFormatError(f"factor kind must be 'lower' or 'upper', got {self.kind!r}")
        diag = np.array(self.diag, dtype=float)
        off = np.array(self.offdiag, dtype=float)
        if len(off) != max(len(diag) - 1, 0):
            raise SpecFormatError("offdiag must be one shorter than diag")
        diag.flags.writeable = False
        off.flags.writeable = False
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offdiag", off)

    @property
    def size(self):
        return len(self.diag)

    def dense(self):
        n = self.size
        out = np.diag(self.diag)
        i = np.arange(n - 1)
        if self.kind == "lower":
            out[i + 1, i] = self.offdiag
        else:
            out[i, i + 1] = self.offdiag
        return out

    def matvec(self, v):
        out = self.diag * v
        if self.kind == "lower":
            out[1:] += self.offdiag * v[:-1]
        else:
            out[:-1] += self.offdiag * v[1:]
        return out

    def scaled(self, left, right):
        """``diag(left) @ self @ diag(right)`` as a new factor."""
        diag = left * self.diag * right
        if self.kind == "lower":
            off = left[1:] * self.offdiag * right[:-1]
        else:
            off = left[:-1] * self.offdiag * right[1:]
        return BidiagonalFactor(self.kind, diag, off)

    def is_positive(self):
        return bool(np.all(self.diag > 0) and np.all(self.offdiag > 0))

    def to_dict(self):
        return {"kind": self.kind, "diag": self.diag.tolist(), "offdiag": self.offdiag.tolist()}


@dataclass(frozen=True)
class FactorizationChain:
    """Ordered factors ``lowers = [L_1..L_p]`` and ``uppers = [U_q..U_1]``.

    ``delta`` is the middle diagonal of the normalized form; ``residual`` the
    left diagonal of the stochastic form. ``exact_rows`` counts leading rows
    whose row sums are those of the source matrix (relevant to generators,
    whose last block rows lose the mass of cut columns).
    """

    lowers: list
    uppers: list
    form: str
    depth: int
    delta: np.ndarray = None
    residual: np.ndarray = None
    exact_rows: int = None
    meta: dict = field(default_factory=dict)

    @property
    def p(self):
        return len(self.lowers)

    @property
    def q(self):
        return len(self.uppers)

    def to_dict(self):
        return {
            "form": self.form,
            "depth": self.depth,
            "exact_rows": self.exact_rows,
            "lowers": [f.to_dict() for f in self.lowers],
            "uppers": [f.to_dict() for f in self.uppers],
            "delta": None if self.delta is None else self.delta.tolist(),
            "residual": None if self.residual is None else self.residual.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        def factors(items):
            return [BidiagonalFactor(f["kind"], f["diag"], f["offdiag"]) for f in items]

        def arr(v):
            return None if v is None else np.array(v, dtype=float)

        if d.get("form") not in FORMS:
            raise SpecFormatError(f"unknown chain form {d.get('form')!r}")
        return cls(factors(d["lowers"]), factors(d["uppers"]), d["form"], int(d["depth"]),
                   delta=arr(d.get("delta")), residual=arr(d.get("residual")),
                   exact_rows=d.get("exact_rows"))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _lu_nopivot(A, p, q, tol_pivot):
    """Banded LU without pivoting; returns unit-lower ``L`` and upper ``U``."""
    n = A.shape[0]
    U = A.copy()
    L = np.eye(n)
    for k in range(n):
        piv = U[k, k]
        if not piv > tol_pivot:
            raise PbfDoesNotExist(f"elimination pivot {float(piv)!r} at row {k} is not positive",
                                  row=k, pivot=float(piv))
        hi = min(n, k + p + 1)
        right = min(n, k + q + 1)
        mult = U[k + 1:hi, k] / piv
        L[k + 1:hi, k] = mult
        U[k + 1:hi, k:right] -= np.outer(mult, U[k, k:right])
        U[k + 1:hi, k] = 0.0
    return L, U


def _peel(L, r, theta):
    """Split a unit-lower matrix of bandwidth ``r`` into ``r`` unit-lower
    bidiagonal factors ``L = F_1 ... F_r``; returns their subdiagonals.

    Each step removes the outermost subdiagonal. Subdiagonal entries of rows
    ``n < s`` (with ``s`` the current bandwidth) are not fixed by the matrix;
    they are set to ``theta`` times the largest value keeping the remainder
    positive. Returns ``None`` if positivity fails.
    """
    n = L.shape[0]
    R = L
    subs = []
    for s in range(r, 0, -1):
        Rn = np.zeros_like(R)
        ell = np.zeros(max(n - 1, 0))
        Rn[0] = R[0]
        for i in range(1, n):
            lo = max(0, i - s)
            prev = Rn[i - 1, lo:i]
            if i >= s:
                if not prev[0] > 0:
                    return None
                li = R[i, i - s] / prev[0]
            else:
                bound = np.min(R[i, :i] / prev)
                li = theta * bound
            if not li > 0:
                return None
            row = R[i, lo:i + 1].copy()
            row[:-1] -= li * prev
            if i >= s:
                row[0] = 0.0
            Rn[i, lo:i + 1] = row
            ell[i - 1] = li
            band_lo = max(0, i - s + 1)
            if np.any(Rn[i, band_lo:i] <= 0):
                return None
        subs.append(ell)
        R = Rn
    return subs


def _peel_with_retry(L, r, theta, depth):
    t = theta
    for _ in range(60):
        subs = _peel(L, r, t)
        if subs is not None:
            return subs, t
        t *= 0.5
    raise PbfDoesNotExist("no positive bidiagonal splitting found for the triangular factor",
                          depth=depth, bandwidth=r)


def compute_pbf(T, depth=None, theta=0.5, tol=DEFAULT_TOLERANCES):
    """Raw positive bidiagonal factorization of the leading ``depth`` rows.

    Parameters
    ----------
    T : BandedMatrix
    depth : int, optional
        Number of rows to factor. Defaults to the size of a finite matrix.
    theta : float
        Gauge for the factor entries the matrix leaves free, as a fraction of
        their positivity bound (halved until positivity holds).
    tol : Tolerances

    Returns
    -------
    FactorizationChain
        Raw form: ``lowers`` have unit diagonal, ``uppers[0]`` (``U_q``)
        carries the pivots.
    """
    if depth is None:
        if T.is_generator:
            raise DepthTooSmall("a generator needs an explicit depth")
        depth = T.size
    if depth < 1:
        raise DepthTooSmall(f"depth must be at least 1, got {depth}", depth=depth)
    p, q = T.p, T.q
    A = truncate(T, depth - 1)
    L, U = _lu_nopivot(A, p, q, tol.pivot)
    D = np.diag(U).copy()
    Ut = (U / D[:, None]).T
    lower_subs, theta_l = _peel_with_retry(L, p, theta, depth)
    upper_subs, theta_u = _peel_with_retry(Ut, q, theta, depth)
    ones = np.ones(depth)
    lowers = [BidiagonalFactor("lower", ones, s) for s in lower_subs]
    # Ut = V_1 ... V_q, so U/D = V_q^T ... V_1^T and U_j = V_j^T.
    uppers = [BidiagonalFactor("upper", ones, s) for s in reversed(upper_subs)]
    uppers[0] = uppers[0].scaled(D, ones)
    if T.is_generator or depth < T.size:
        exact = depth - q
    else:
        exact = depth
    chain = FactorizationChain(lowers, uppers, "raw", depth, exact_rows=max(exact, 0),
                               meta={"theta_lower": theta_l, "theta_upper": theta_u})
    for f in lowers + uppers:
        if not f.is_positive():
            raise PbfDoesNotExist("factorization produced a non-positive factor entry", depth=depth)
    err = float(np.max(np.abs(reconstruct(chain) - A)))
    if err > tol.recon * depth:
        raise PbfDoesNotExist(f"reconstruction error {err!r} exceeds tolerance", error=err, depth=depth)
    return chain


def _product(factors, n):
    out = np.eye(n)
    for f in factors:
        out = out @ f.dense()
    return out


def reconstruct(chain):
    """Dense product of the chain on its leading block."""
    n = chain.depth
    lower = _product(chain.lowers, n)
    upper = _product(chain.uppers, n)
    if chain.form == "normalized":
        lower = lower * chain.delta[None, :]
    out = lower @ upper
    if chain.form == "stochastic" and chain.residual is not None:
        out = chain.residual[:, None] * out
    return out


def normalize_chain(chain):
    """Unit-diagonal factors with one middle diagonal ``delta``.

    A lower factor is split as ``L = L~ D`` and an upper as ``U = D U~``; the
    diagonals are commuted toward the middle.
    """
    if chain.form != "raw":
        raise NotRawForm(f"normalize_chain expects a raw chain, got {chain.form!r}")
    n = chain.depth
    ones = np.ones(n)
    carry = ones.copy()
    lowers = []
    for f in chain.lowers:
        # carry * L~ * D with L~ = L / D (column scaling)
        off = carry[1:] * f.offdiag / (f.diag[:-1] * carry[:-1])
        lowers.append(BidiagonalFactor("lower", ones, off))
        carry = carry * f.diag
    carry_r = ones.copy()
    uppers = []
    for f in reversed(chain.uppers):
        off = carry_r[1:] * f.offdiag / (f.diag[:-1] * carry_r[:-1])
        uppers.append(BidiagonalFactor("upper", ones, off))
        carry_r = carry_r * f.diag
    uppers.reverse()
    return replace(chain, lowers=lowers, uppers=uppers, form="normalized",
                   delta=carry * carry_r, residual=None)


def _to_raw_factors(chain):
    if chain.form == "raw":
        return list(chain.lowers), list(chain.uppers)
    if chain.form == "normalized":
        uppers = list(chain.uppers)
        uppers[0] = uppers[0].scaled(chain.delta, np.ones(chain.depth))
        return list(chain.lowers), uppers
    raise NotRawForm("chain is already in stochastic form")


def delta_sequence(chain):
    """Diagonals ``delta_0 .. delta_{q+p}`` (as vectors) of the renormalization."""
    lowers, uppers = _to_raw_factors(chain)
    deltas = [np.ones(chain.depth)]
    for f in reversed(uppers):
        deltas.append(f.matvec(deltas[-1]))
    for f in reversed(lowers):
        deltas.append(f.matvec(deltas[-1]))
    return deltas


def stochastic_normalize(chain, T_is_stochastic=True, tol=DEFAULT_TOLERANCES):
    """Row-stochastic factors by diagonal renormalization.

    With ``d_0 = e``, ``d_j = U_j d_{j-1}`` for ``j = 1..q`` and then
    ``d_{q+i} = L_{p+1-i} d_{q+i-1}``, the factors
    ``diag(d_j)^-1 U_j diag(d_{j-1})`` and
    ``diag(d_{q+p-i+1})^-1 L_i diag(d_{q+p-i})`` are stochastic, and their
    product times ``diag(d_{q+p})`` is ``T``.

    Returns
    -------
    FactorizationChain
        Stochastic form; ``residual`` holds ``d_{q+p}``.

    Raises
    ------
    ResidualNotIdentity
        If ``T_is_stochastic`` but ``d_{q+p}`` differs from ones on the exact
        rows by more than ``tol.row * (p + q)``.
    """
    lowers, uppers = _to_raw_factors(chain)
    p, q = len(lowers), len(uppers)
    d = delta_sequence(chain)
    for j, dj in enumerate(d):
        if not np.all(dj > 0):
            raise PbfDoesNotExist(f"renormalization diagonal {j} is not positive")
    hat_u = []
    for j in range(1, q + 1):
        f = uppers[q - j]
        hat_u.append(f.scaled(1.0 / d[j], d[j - 1]))
    hat_u.reverse()
    hat_l = []
    for i in range(1, p + 1):
        f = lowers[i - 1]
        hat_l.append(f.scaled(1.0 / d[q + p - i + 1], d[q + p - i]))
    residual = d[q + p]
    if T_is_stochastic:
        k = chain.exact_rows if chain.exact_rows is not None else chain.depth
        dev = float(np.max(np.abs(residual[:k] - 1.0), initial=0.0))
        if dev > tol.row * (p + q):
            raise ResidualNotIdentity(f"residual diagonal deviates from identity by {dev!r}",
                                      deviation=dev)
    return replace(chain, lowers=hat_l, uppers=hat_u, form="stochastic", delta=None,
                   residual=residual, meta={**chain.meta, "deltas": [x.tolist() for x in d]})
