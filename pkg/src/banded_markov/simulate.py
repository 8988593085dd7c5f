"""Monte Carlo oracle for finite stochastic chains.

Streams come from NumPy's Philox-4x64 counter-based generator. Replica
``r`` of a run with seed ``s`` uses the 128-bit key ``(r << 64) | s``, so
any replica can be regenerated on its own and the streams do not depend
on how many replicas run or in what order.
"""
import math
import warnings
from bisect import bisect_right
from dataclasses import asdict, dataclass

import numpy as np

from .banded_core import BandedMatrix, dense_to_banded
from .config import DEFAULT_TOLERANCES
from .errors import BandedMarkovError, InsufficientSamples, NotStochastic, StateOutOfRange

MIN_SAMPLES = 10 ** 5


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    steps: int = 10 ** 5
    replicas: int = 1
    start_state: int = 0
    burn_in: int = 0

    def __post_init__(self):
        if self.steps < 1 or self.replicas < 1:
            raise ValueError("steps and replicas must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.burn_in < 0 or self.burn_in > self.steps:
            raise ValueError("burn_in must lie in [0, steps]")

    def to_dict(self):
        return asdict(self)


def replica_generator(seed, replica):
    """Philox generator for one replica."""
    return np.random.Generator(np.random.Philox(key=(int(replica) << 64) | int(seed)))


def _as_banded(T, tol):
    if isinstance(T, BandedMatrix):
        if T.is_generator:
            raise NotStochastic("simulation needs a finite matrix")
        B = T
    else:
        A = np.asarray(T, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise NotStochastic("transition matrix must be square")
        nz = np.nonzero(A)
        off = nz[1] - nz[0]
        p = max(1, int(-off.min())) if off.size else 1
        q = max(1, int(off.max())) if off.size else 1
        if np.any(A < 0):
            raise NotStochastic("negative transition probability")
        try:
            B = dense_to_banded(A, p, q, mode="substochastic", tol=tol)
        except BandedMarkovError as exc:
            raise NotStochastic(str(exc)) from exc
    sums = B.row_sums()
    if np.any(np.abs(sums - 1) > tol):
        worst = int(np.argmax(np.abs(sums - 1)))
        raise NotStochastic(f"row {worst} sums to {sums[worst]!r}", row=worst, sum=float(sums[worst]))
    return B


def _row_tables(B):
    tables = []
    for n in range(B.size):
        lo, vals = B.row(n)
        cdf = np.cumsum(vals)
        tables.append((lo, (cdf / cdf[-1]).tolist()))
    return tables


def sample_path(T, cfg, tol=DEFAULT_TOLERANCES.row):
    """Sample ``cfg.replicas`` trajectories of length ``cfg.steps + 1``.

    Each transition inverts the cumulative distribution of the current
    (in-band) row at one uniform draw.

    Parameters
    ----------
    T : BandedMatrix or ndarray
        Finite stochastic matrix.
    cfg : SimConfig

    Returns
    -------
    ndarray of int, shape (replicas, steps + 1)
    """
    B = _as_banded(T, tol)
    if not 0 <= cfg.start_state < B.size:
        raise StateOutOfRange(f"start state {cfg.start_state} outside 0..{B.size - 1}")
    tables = _row_tables(B)
    paths = np.empty((cfg.replicas, cfg.steps + 1), dtype=np.int64)
    for r in range(cfg.replicas):
        u = replica_generator(cfg.seed, r).random(cfg.steps)
        x = cfg.start_state
        out = [x]
        for t in range(cfg.steps):
            lo, cdf = tables[x]
            j = bisect_right(cdf, u[t])
            x = lo + min(j, len(cdf) - 1)
            out.append(x)
        paths[r] = out
    return paths


def _mean_se(values):
    """Mean and standard error with compensated sums."""
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / n
    if n == 1:
        return mean, math.nan
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def _kstep(paths, n_states, k_max, burn_in):
    est = np.full((k_max + 1, n_states, n_states), np.nan)
    se = np.full_like(est, np.nan)
    for k in range(k_max + 1):
        codes = np.concatenate([x[burn_in: len(x) - k] * n_states + x[burn_in + k:] for x in paths])
        counts = np.bincount(codes, minlength=n_states ** 2).reshape(n_states, n_states)
        tot = counts.sum(axis=1)
        seen = tot > 0
        P = counts[seen] / tot[seen, None]
        est[k, seen] = P
        se[k, seen] = np.sqrt(P * (1 - P) / tot[seen, None])
    return est, se


def _stationary(paths, n_states, burn_in, batches):
    batch_means = []
    counts = np.zeros(n_states, dtype=np.int64)
    for x in paths:
        y = x[burn_in:]
        counts += np.bincount(y, minlength=n_states)
        nb = min(batches, len(y))
        for chunk in np.array_split(y, nb):
            batch_means.append(np.bincount(chunk, minlength=n_states) / len(chunk))
    est = counts / counts.sum()
    bm = np.array(batch_means)
    se = np.array([_mean_se(bm[:, m])[1] for m in range(n_states)])
    return est, se


def _first_passage(paths, n_states, r_max):
    """First hitting time of each state (``r >= 1``) per replica; -1 if censored."""
    hits = np.full((len(paths), n_states), -1, dtype=np.int64)
    for i, x in enumerate(paths):
        states, first = np.unique(x[1:], return_index=True)
        hits[i, states] = first + 1
    R = len(paths)
    f = np.zeros((n_states, r_max + 1))
    for m in range(n_states):
        h = hits[:, m]
        c = np.bincount(h[(h > 0) & (h <= r_max)], minlength=r_max + 1)
        f[m] = c / R
    f_se = np.sqrt(f * (1 - f) / R)
    mean = np.full(n_states, np.nan)
    mean_se = np.full(n_states, np.nan)
    for m in range(n_states):
        h = hits[:, m]
        h = h[h > 0]
        if h.size:
            mean[m], mean_se[m] = _mean_se(h.tolist())
    reached = (hits > 0).mean(axis=0)
    return {"f": f, "f_se": f_se, "hit_fraction": reached,
            "hit_fraction_se": np.sqrt(reached * (1 - reached) / R),
            "mean": mean, "mean_se": mean_se, "censored": (hits < 0).sum(axis=0)}


def _return_times(paths, n_states, burn_in):
    gaps = [[] for _ in range(n_states)]
    for x in paths:
        y = x[burn_in:]
        order = np.argsort(y, kind="stable")
        ys = y[order]
        d = np.diff(order)
        same = ys[1:] == ys[:-1]
        ys, d = ys[1:][same], d[same]
        bounds = np.searchsorted(ys, np.arange(n_states + 1))
        for m in range(n_states):
            gaps[m].append(d[bounds[m]:bounds[m + 1]])
    est = np.full(n_states, np.nan)
    se = np.full(n_states, np.nan)
    count = np.zeros(n_states, dtype=np.int64)
    for m in range(n_states):
        g = np.concatenate(gaps[m]).tolist()
        count[m] = len(g)
        if g:
            est[m], se[m] = _mean_se(g)
    return est, se, count


def empirical_estimates(paths, n_states=None, k_max=4, burn_in=0, batches=20, r_max=None):
    """Point estimates and standard errors from sampled paths.

    Parameters
    ----------
    paths : ndarray of int, shape (replicas, steps + 1)
        All replicas should start from the same state.
    n_states : int, optional
        Defaults to ``paths.max() + 1``.
    k_max : int
        Largest lag for the ``k``-step transition estimates.
    burn_in : int
        Steps discarded before the stationary, k-step and return-time counts.
    batches : int
        Batches per replica for the batch-means standard error of ``pi``.
    r_max : int, optional
        Longest first-passage time tabulated (default ``min(steps, 200)``).

    Returns
    -------
    dict
        ``kstep`` (lag-``k`` transition frequencies pooled over all times),
        ``stationary`` (occupancy), ``first_passage`` (replica restarts from
        the common start state) and ``return_time`` (mean excursion length
        between visits), each with ``estimate`` and ``se`` entries.

    Warns
    -----
    InsufficientSamples
        If ``replicas * steps`` is below ``1e5``.
    """
    paths = np.asarray(paths, dtype=np.int64)
    if paths.ndim == 1:
        paths = paths[None, :]
    R, L = paths.shape
    steps = L - 1
    if R * steps < MIN_SAMPLES:
        warnings.warn(f"{R * steps} samples is below the recommended {MIN_SAMPLES}",
                      InsufficientSamples, stacklevel=2)
    if n_states is None:
        n_states = int(paths.max()) + 1
    if r_max is None:
        r_max = min(steps, 200)
    k_max = min(k_max, steps - burn_in)
    ks, ks_se = _kstep(paths, n_states, k_max, burn_in)
    pi, pi_se = _stationary(paths, n_states, burn_in, batches)
    fp = _first_passage(paths, n_states, r_max)
    rt, rt_se, rt_n = _return_times(paths, n_states, burn_in)
    return {
        "samples": int(R * steps),
        "start_state": int(paths[0, 0]),
        "kstep": {"estimate": ks, "se": ks_se},
        "stationary": {"estimate": pi, "se": pi_se},
        "first_passage": {"estimate": fp["f"], "se": fp["f_se"],
                          "hit_fraction": fp["hit_fraction"], "hit_fraction_se": fp["hit_fraction_se"],
                          "mean": fp["mean"], "mean_se": fp["mean_se"], "censored": fp["censored"]},
        "return_time": {"estimate": rt, "se": rt_se, "count": rt_n},
    }


def simulate(T, cfg, k_max=4, batches=20, r_max=None, tol=DEFAULT_TOLERANCES.row):
    """Sample paths and summarise them; see :func:`empirical_estimates`."""
    paths = sample_path(T, cfg, tol)
    n_states = T.size if isinstance(T, BandedMatrix) else np.asarray(T).shape[0]
    est = empirical_estimates(paths, n_states, k_max=k_max, burn_in=cfg.burn_in,
                              batches=batches, r_max=r_max)
    est["config"] = cfg.to_dict()
    return est
