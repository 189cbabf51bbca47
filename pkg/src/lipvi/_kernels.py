"""Fused numerical kernels for envelope reductions and nearest-distance scans.

Every kernel computes each output element independently with a fixed inner
summation order, so results are bit-identical regardless of batch shape or
thread count.  numba provides the fast path; a blocked numpy fallback keeps
the package functional without it.
"""

from __future__ import annotations

import math
import os
import warnings

import numpy as np

try:
    import numba
    from numba import njit, prange
    from numba.core.errors import NumbaWarning
    # The sandbox TBB build is too old for numba; the fallback layer is fine.
    warnings.filterwarnings("ignore", message=".*TBB.*", category=NumbaWarning)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    HAVE_NUMBA = False

_FALLBACK_BLOCK_ENTRIES = 1 << 21


def configured_threads() -> int:
    """Worker cap: LIPVI_THREADS, with 0 or unset meaning automatic."""
    raw = os.environ.get("LIPVI_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _reduce_upper(queries, anchors, labels, eta, out):
        m, dim = queries.shape
        n = anchors.shape[0]
        for i in prange(m):
            best = np.inf
            for j in range(n):
                d2 = 0.0
                for k in range(dim):
                    diff = queries[i, k] - anchors[j, k]
                    d2 += diff * diff
                v = labels[j] + eta * math.sqrt(d2)
                if v < best:
                    best = v
            out[i] = best

    @njit(parallel=True, cache=True)
    def _reduce_lower(queries, anchors, labels, eta, out):
        m, dim = queries.shape
        n = anchors.shape[0]
        for i in prange(m):
            best = -np.inf
            for j in range(n):
                d2 = 0.0
                for k in range(dim):
                    diff = queries[i, k] - anchors[j, k]
                    d2 += diff * diff
                v = labels[j] - eta * math.sqrt(d2)
                if v > best:
                    best = v
            out[i] = best

    @njit(parallel=True, cache=True)
    def _nearest(queries, anchors, out):
        m, dim = queries.shape
        n = anchors.shape[0]
        for i in prange(m):
            best = np.inf
            for j in range(n):
                d2 = 0.0
                for k in range(dim):
                    diff = queries[i, k] - anchors[j, k]
                    d2 += diff * diff
                if d2 < best:
                    best = d2
            out[i] = math.sqrt(best)

    def _set_threads() -> None:
        limit = min(configured_threads(), numba.config.NUMBA_NUM_THREADS)
        numba.set_num_threads(max(1, limit))


def _pairwise_sq(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared distances, one (m, n) plane per coordinate; exact zeros."""
    d2 = (x[:, 0][:, None] - y[:, 0][None, :]) ** 2
    for k in range(1, x.shape[1]):
        d2 += (x[:, k][:, None] - y[:, k][None, :]) ** 2
    return d2


def euclidean_pairwise(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d2 = _pairwise_sq(x, y)
    return np.sqrt(d2, out=d2)


def _contig(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=np.float64)


def reduce_envelope(queries: np.ndarray, anchors: np.ndarray, labels: np.ndarray,
                    eta: float, direction_upper: bool) -> np.ndarray:
    """min_j (labels_j + eta d) over anchors per query, or the max_j mirror."""
    queries = _contig(queries)
    anchors = _contig(anchors)
    labels = _contig(labels)
    out = np.empty(queries.shape[0])
    if HAVE_NUMBA:
        _set_threads()
        kern = _reduce_upper if direction_upper else _reduce_lower
        kern(queries, anchors, labels, float(eta), out)
        return out
    block = max(1, _FALLBACK_BLOCK_ENTRIES // max(1, anchors.shape[0]))
    for start in range(0, queries.shape[0], block):
        d = euclidean_pairwise(queries[start:start + block], anchors)
        vals = labels[None, :] + eta * d if direction_upper else labels[None, :] - eta * d
        out[start:start + block] = vals.min(axis=1) if direction_upper else vals.max(axis=1)
    return out


def nearest_distances(queries: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Per-query distance to the closest anchor."""
    queries = _contig(queries)
    anchors = _contig(anchors)
    out = np.empty(queries.shape[0])
    if HAVE_NUMBA:
        _set_threads()
        _nearest(queries, anchors, out)
        return out
    block = max(1, _FALLBACK_BLOCK_ENTRIES // max(1, anchors.shape[0]))
    for start in range(0, queries.shape[0], block):
        out[start:start + block] = euclidean_pairwise(queries[start:start + block], anchors).min(axis=1)
    return out
