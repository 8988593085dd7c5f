"""Banded (sub)stochastic matrices: storage, validation, truncation, products.

Entries are stored diagonal-major: ``band[d + p, n]`` holds ``T[n, n + d]`` for
offsets ``d`` in ``-p..q``. Positions outside the matrix are stored as zero.
Semi-infinite matrices are given by a generator: explicit head rows followed
by a periodic tail, materialized on demand.
"""

import json
from collections.abc import Mapping

import numpy as np

from .config import DEFAULT_TOLERANCES
from .errors import (
    DimensionMismatch,
    NonPositiveInBandEntry,
    RowSumViolation,
    SizeExceeded,
    SpecFormatError,
)

MODES = ("stochastic", "substochastic")


class BandedMatrix:
    """Immutable banded matrix with ``p`` sub- and ``q`` superdiagonals.

    Use :func:`new_banded`, :func:`from_rows` or :func:`generator` to build
    one; they validate positivity and row sums.
    """

    def __init__(self, p, q, mode, size=None, band=None, head=None, tail=None, tol=DEFAULT_TOLERANCES.row):
        self.p = int(p)
        self.q = int(q)
        self.mode = mode
        self.size = size
        self.tol = tol
        self._band = _frozen(band) if band is not None else None
        self._head = _frozen(head) if head is not None else None
        self._tail = _frozen(tail) if tail is not None else None

    @property
    def width(self):
        return self.p + self.q + 1

    @property
    def is_generator(self):
        return self.size is None

    def __repr__(self):
        kind = "generator" if self.is_generator else f"size={self.size}"
        return f"BandedMatrix(p={self.p}, q={self.q}, {kind}, mode={self.mode!r})"

    def band(self, n_rows=None):
        """Diagonal-major block for rows ``0..n_rows-1``.

        Column indices beyond ``n_rows`` are kept, so the last rows of the
        block still carry their full superdiagonal entries.
        """
        if n_rows is None:
            if self.is_generator:
                raise SizeExceeded("a generator has no finite size; pass n_rows")
            n_rows = self.size
        if not self.is_generator and n_rows > self.size:
            raise SizeExceeded(f"{n_rows} rows requested from a matrix of size {self.size}",
                               size=self.size, requested=n_rows)
        if not self.is_generator:
            return self._band[:, :n_rows]
        h = self._head.shape[1]
        if n_rows <= h:
            return self._head[:, :n_rows]
        period = self._tail.shape[1]
        idx = (np.arange(h, n_rows) - h) % period
        out = np.concatenate([self._head, self._tail[:, idx]], axis=1)
        out.flags.writeable = False
        return out

    def entry(self, n, m):
        d = m - n
        if n < 0 or m < 0 or d < -self.p or d > self.q:
            return 0.0
        if not self.is_generator and (n >= self.size or m >= self.size):
            raise SizeExceeded(f"index ({n}, {m}) outside a matrix of size {self.size}")
        return float(self.band(n + 1)[d + self.p, n])

    def row(self, n):
        """Return ``(first_column, values)`` of the in-band part of row ``n``."""
        b = self.band(n + 1)[:, n]
        lo = max(0, n - self.p)
        hi = n + self.q if self.is_generator else min(self.size - 1, n + self.q)
        return lo, b[lo - n + self.p: hi - n + self.p + 1].copy()

    def row_sums(self, n_rows=None):
        return self.band(n_rows).sum(axis=0)

    def padded_entry(self, n, m, fill=1.0):
        """Entry lookup that extends a finite matrix's band past its last row.

        Recursion polynomials of order ``N`` may touch indices up to
        ``N + max(p, q) - 1``; for a finite matrix those lie outside it. The
        quantities derived from them at order ``N <= size - 1`` are
        independent of the extension, which is filled with ``fill``.
        """
        d = m - n
        if n < 0 or m < 0 or d < -self.p or d > self.q:
            return 0.0
        if not self.is_generator and (n >= self.size or m >= self.size):
            return float(fill)
        return float(self.band(n + 1)[d + self.p, n])

    def to_spec(self):
        """JSON-ready matrix specification (see :func:`load_spec`)."""
        if not self.is_generator:
            rows = [self.row(n)[1].tolist() for n in range(self.size)]
            return {"p": self.p, "q": self.q, "mode": self.mode, "rows": rows}
        h = self._head.shape[1]
        head = [self.row(n)[1].tolist() for n in range(h)]
        coeffs = [self._tail[:, j].tolist() for j in range(self._tail.shape[1])]
        return {
            "p": self.p,
            "q": self.q,
            "mode": self.mode,
            "head": head,
            "tail": {"period": len(coeffs), "coeffs": coeffs[0] if len(coeffs) == 1 else coeffs},
        }


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def _check_mode(mode):
    if mode not in MODES:
        raise SpecFormatError(f"mode must be one of {MODES}, got {mode!r}")


def _validate(band, p, q, size, mode, tol, row_offset=0, full_rows=False):
    """Positivity and row-sum checks on a diagonal-major block.

    ``full_rows`` treats every offset as in band (tail patterns); otherwise
    the matrix edges of a ``size`` x ``size`` matrix (``size=None`` for no
    right edge) are respected.
    """
    width, n_rows = band.shape
    for j in range(n_rows):
        n = row_offset + j
        for k in range(width):
            d = k - p
            m = n + d
            if not full_rows and (m < 0 or (size is not None and m >= size)):
                if band[k, j] != 0.0:
                    raise SpecFormatError(f"entry ({n}, {m}) lies outside the matrix")
                continue
            if not band[k, j] > 0.0:
                raise NonPositiveInBandEntry(
                    f"in-band entry T[{n},{m}] = {float(band[k, j])!r} is not positive",
                    row=n, col=m, value=float(band[k, j]))
        s = float(band[:, j].sum())
        if mode == "stochastic" and abs(s - 1.0) > tol:
            raise RowSumViolation(f"row {n} sums to {s!r}", row=n, row_sum=s)
        if mode == "substochastic" and s > 1.0 + tol:
            raise RowSumViolation(f"row {n} sums to {s!r} > 1", row=n, row_sum=s)


def new_banded(p, q, diagonals, mode="stochastic", tol=DEFAULT_TOLERANCES.row):
    """Finite banded matrix from its diagonals.

    Parameters
    ----------
    p, q : int
        Lower and upper bandwidths, both at least 1.
    diagonals : mapping or sequence
        ``{offset: entries}`` for offsets ``-p..q``, or a sequence of
        ``p + q + 1`` entry lists ordered from offset ``-p`` to ``q``. The
        entries of offset ``d`` are ``T[n, n + d]`` in increasing ``n``.
    mode : {"stochastic", "substochastic"}
    """
    _check_mode(mode)
    if p < 1 or q < 1:
        raise SpecFormatError("bandwidths p and q must be at least 1")
    if not isinstance(diagonals, Mapping):
        diagonals = dict(zip(range(-p, q + 1), diagonals))
    if set(diagonals) != set(range(-p, q + 1)):
        raise SpecFormatError(f"need diagonals for offsets {-p}..{q}")
    size = len(diagonals[0])
    band = np.zeros((p + q + 1, size))
    for d, values in diagonals.items():
        values = np.asarray(values, dtype=float)
        if len(values) != max(size - abs(d), 0):
            raise SpecFormatError(f"diagonal {d} has length {len(values)}, expected {size - abs(d)}")
        start = -d if d < 0 else 0
        band[d + p, start:start + len(values)] = values
    _validate(band, p, q, size, mode, tol)
    return BandedMatrix(p, q, mode, size=size, band=band, tol=tol)


def _rows_to_band(p, q, rows, size, first_row=0):
    band = np.zeros((p + q + 1, len(rows)))
    for j, values in enumerate(rows):
        n = first_row + j
        lo = max(0, n - p)
        hi = n + q if size is None else min(size - 1, n + q)
        if len(values) != hi - lo + 1:
            raise SpecFormatError(f"row {n} has {len(values)} entries, expected {hi - lo + 1}")
        band[lo - n + p: hi - n + p + 1, j] = values
    return band


def from_rows(p, q, rows, mode="stochastic", tol=DEFAULT_TOLERANCES.row):
    """Finite banded matrix from its rows, each listing only in-band entries.

    Row ``n`` lists ``T[n, max(0, n-p)] .. T[n, min(size-1, n+q)]``.
    """
    _check_mode(mode)
    if p < 1 or q < 1:
        raise SpecFormatError("bandwidths p and q must be at least 1")
    size = len(rows)
    band = _rows_to_band(p, q, rows, size)
    _validate(band, p, q, size, mode, tol)
    return BandedMatrix(p, q, mode, size=size, band=band, tol=tol)


def generator(p, q, head, coeffs, mode="stochastic", tol=DEFAULT_TOLERANCES.row):
    """Semi-infinite banded matrix: explicit head rows, then a periodic tail.

    ``head`` must cover at least the first ``p`` rows (the rows whose band is
    cut by the left edge). ``coeffs`` is one full band row of ``p + q + 1``
    entries, or a list of such rows repeated periodically.
    """
    _check_mode(mode)
    if p < 1 or q < 1:
        raise SpecFormatError("bandwidths p and q must be at least 1")
    if len(head) < p:
        raise SpecFormatError(f"head must contain at least p={p} rows")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim == 1:
        coeffs = coeffs[None, :]
    if coeffs.ndim != 2 or coeffs.shape[1] != p + q + 1:
        raise SpecFormatError(f"tail rows must have p+q+1 = {p + q + 1} entries")
    head_band = _rows_to_band(p, q, head, None)
    _validate(head_band, p, q, None, mode, tol)
    tail_band = coeffs.T.copy()
    _validate(tail_band, p, q, None, mode, tol, row_offset=len(head), full_rows=True)
    return BandedMatrix(p, q, mode, head=head_band, tail=tail_band, tol=tol)


_FINITE_KEYS = {"p", "q", "mode", "rows"}
_GENERATOR_KEYS = {"p", "q", "mode", "head", "tail"}
_TAIL_KEYS = {"period", "coeffs"}


def load_spec(spec, tol=DEFAULT_TOLERANCES.row):
    """Parse a JSON matrix specification (dict, JSON text or path).

    Finite: ``{"p": 1, "q": 2, "mode": "stochastic", "rows": [[...], ...]}``.
    Generator: ``{"p": 1, "q": 1, "head": [[...]], "tail": {"period": 1,
    "coeffs": [...]}}``. Unknown fields are rejected.
    """
    if isinstance(spec, str):
        text = spec
        if not spec.lstrip().startswith("{"):
            with open(spec, encoding="utf-8") as fh:
                text = fh.read()
        try:
            spec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecFormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(spec, Mapping):
        raise SpecFormatError("matrix spec must be a JSON object")
    keys = set(spec)
    is_generator = "tail" in keys or "head" in keys
    allowed = _GENERATOR_KEYS if is_generator else _FINITE_KEYS
    unknown = keys - allowed
    if unknown:
        raise SpecFormatError(f"unknown fields in matrix spec: {sorted(unknown)}")
    for key in ("p", "q"):
        if not isinstance(spec.get(key), int):
            raise SpecFormatError(f"field {key!r} must be an integer")
    mode = spec.get("mode", "stochastic")
    if not is_generator:
        if "rows" not in spec:
            raise SpecFormatError("finite matrix spec needs 'rows'")
        return from_rows(spec["p"], spec["q"], spec["rows"], mode=mode, tol=tol)
    tail = spec.get("tail")
    if not isinstance(tail, Mapping) or set(tail) - _TAIL_KEYS or "coeffs" not in tail:
        raise SpecFormatError("'tail' must be an object with 'period' and 'coeffs'")
    coeffs = tail["coeffs"]
    period = tail.get("period", 1)
    if period == 1 and coeffs and not isinstance(coeffs[0], (list, tuple)):
        coeffs = [coeffs]
    if len(coeffs) != period:
        raise SpecFormatError(f"tail period {period} does not match {len(coeffs)} coefficient rows")
    return generator(spec["p"], spec["q"], spec.get("head", []), coeffs, mode=mode, tol=tol)


def dump_spec(T):
    return json.dumps(T.to_spec(), sort_keys=True)


def truncate(T, N):
    """Leading ``(N+1) x (N+1)`` block of ``T`` as a dense array."""
    if N < 0:
        raise SizeExceeded("truncation order must be non-negative")
    n = N + 1
    if not T.is_generator and n > T.size:
        raise SizeExceeded(f"truncation of order {N} exceeds size {T.size}", size=T.size, N=N)
    band = T.band(n)
    out = np.zeros((n, n))
    for k in range(T.width):
        d = k - T.p
        if d >= 0:
            i = np.arange(0, n - d)
        else:
            i = np.arange(-d, n)
        out[i, i + d] = band[k, i]
    return out


def matvec(A, v):
    """Product ``A v``.

    For a finite banded or dense ``A`` the result has the length of ``v``.
    For a generator only the rows fully determined by ``v`` are returned,
    i.e. ``len(v) - q`` entries.
    """
    v = np.asarray(v, dtype=float)
    if isinstance(A, BandedMatrix):
        n_out = len(v) - A.q if A.is_generator else len(v)
        if not A.is_generator and len(v) != A.size:
            raise DimensionMismatch(f"vector of length {len(v)} for a matrix of size {A.size}")
        if n_out <= 0:
            raise DimensionMismatch("vector too short for a generator product")
        band = A.band(n_out)
        out = np.zeros(n_out)
        for k in range(A.width):
            d = k - A.p
            rows = np.arange(max(0, -d), n_out)
            rows = rows[rows + d < len(v)]
            out[rows] += band[k, rows] * v[rows + d]
        return out
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] != len(v):
        raise DimensionMismatch(f"shape {A.shape} incompatible with vector of length {len(v)}")
    return A @ v


def matrix_power(A, k):
    """``A**k`` by repeated squaring; ``A**0`` is the identity."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"matrix_power needs a square matrix, got shape {A.shape}")
    if k < 0:
        raise ValueError("exponent must be non-negative")
    return np.linalg.matrix_power(A, int(k))


def reflecting_truncation(T, size):
    """Finite stochastic matrix agreeing with ``T`` on its first ``size`` rows,
    except that mass leaving the block is put back on the diagonal."""
    band = np.array(T.band(size), dtype=float)
    for k in range(T.p + 1, T.width):
        d = k - T.p
        rows = np.arange(max(0, size - d), size)
        band[T.p, rows] += band[k, rows]
        band[k, rows] = 0.0
    return BandedMatrix(T.p, T.q, "stochastic", size=size, band=band, tol=T.tol)


def dense_to_banded(A, p, q, mode="stochastic", tol=DEFAULT_TOLERANCES.row):
    """Wrap a dense square array as a validated :class:`BandedMatrix`."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise DimensionMismatch("dense_to_banded needs a square matrix")
    outside = np.abs(np.triu(A, q + 1)).max(initial=0.0) + np.abs(np.tril(A, -p - 1)).max(initial=0.0)
    if outside > 0:
        raise SpecFormatError("matrix has entries outside the declared band")
    diagonals = {d: np.diagonal(A, d) for d in range(-p, q + 1)}
    return new_banded(p, q, diagonals, mode=mode, tol=tol)
