"""Random banded stochastic matrices with a positive bidiagonal factorization.

Each matrix is a product of ``p`` lower and ``q`` upper stochastic
bidiagonal factors.  Factor entries are multiples of ``2**-bits``, so every
product entry has at most ``bits * (p + q)`` fractional bits and the
matrices are exactly stochastic in binary64 as long as that stays <= 52.
"""
from dataclasses import dataclass, replace

import numpy as np

from .banded_core import dense_to_banded


@dataclass(frozen=True)
class CorpusConfig:
    size: int = 60
    max_size: int = None
    lo: float = 0.1
    hi: float = 0.5
    bits: int = 8


def _factor_params(n, rng, cfg):
    grid = 2.0 ** cfg.bits
    a = np.round(rng.uniform(cfg.lo, cfg.hi, n) * grid) / grid
    return np.clip(a, 1 / grid, 1 - 1 / grid)


def bidiagonal_product(p, q, rng, cfg=CorpusConfig(), return_factors=False):
    """Stochastic product ``L_1 ... L_p U_q ... U_1`` as a finite BandedMatrix.

    Lower factors carry ``a`` on the subdiagonal and ``1 - a`` on the diagonal
    (first row fixed to ``e_0``); upper factors mirror this with the last row
    fixed.
    """
    if cfg.bits * (p + q) > 52:
        raise ValueError("factor grid too fine for an exact binary64 product")
    n = cfg.size
    factors = []
    for _ in range(p):
        a = _factor_params(n, rng, cfg)
        a[0] = 0.0
        factors.append(np.diag(1 - a) + np.diag(a[1:], -1))
    uppers = []
    for _ in range(q):
        a = _factor_params(n, rng, cfg)
        a[-1] = 0.0
        uppers.append(np.diag(1 - a) + np.diag(a[:-1], 1))
    factors.extend(reversed(uppers))
    A = np.eye(n)
    for F in factors:
        A = A @ F
    T = dense_to_banded(A, p, q)
    if return_factors:
        return T, factors
    return T


def corpus(count=24, seed=2024, cfg=CorpusConfig(), shapes=None):
    """List of ``(p, q, T)`` matrices cycling through all ``p, q`` in {1, 2, 3}."""
    rng = np.random.default_rng(seed)
    if shapes is None:
        shapes = [(p, q) for p in (1, 2, 3) for q in (1, 2, 3)]
    out = []
    for i in range(count):
        p, q = shapes[i % len(shapes)]
        c = cfg
        if cfg.max_size is not None:
            c = replace(cfg, size=int(rng.integers(cfg.size, cfg.max_size + 1)))
        out.append((p, q, bidiagonal_product(p, q, rng, c)))
    return out
