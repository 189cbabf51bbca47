"""Distances on state, action and state-action spaces, plus covering radii.

Every metric kind reduces to Euclidean distance after an embedding of the
raw coordinates (identity, per-axis scaling, or a feature-table lookup), so
all heavy paths share one exact, deterministic kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, EmptyInput, FeatureLookupMiss

# Distances at or below this are treated as exact duplicates.
DUPLICATE_EPS = 1e-12

# Default probe budget for covering-radius estimation.
DEFAULT_PROBE_COUNT = 10_000


@dataclass(frozen=True)
class Point:
    """A state-action pair laid out as a single real vector.

    ``coords`` holds the state coordinates followed by the action
    coordinates; ``len(coords) == state_dim + action_dim``.
    """

    coords: tuple[float, ...]
    state_dim: int
    action_dim: int = 0

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        object.__setattr__(self, "coords", coords)
        if self.state_dim + self.action_dim < 1:
            raise DimensionMismatch("state_dim + action_dim must be at least 1")
        if self.state_dim < 0 or self.action_dim < 0:
            raise DimensionMismatch("dimensions must be non-negative")
        if len(coords) != self.state_dim + self.action_dim:
            raise DimensionMismatch(
                f"expected {self.state_dim + self.action_dim} coordinates, got {len(coords)}"
            )
        if not all(math.isfinite(c) for c in coords):
            raise DimensionMismatch("all coordinates must be finite")

    @property
    def dim(self) -> int:
        return self.state_dim + self.action_dim

    @property
    def state(self) -> tuple[float, ...]:
        return self.coords[: self.state_dim]

    @property
    def action(self) -> tuple[float, ...]:
        return self.coords[self.state_dim:]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


def as_point_block(points) -> np.ndarray:
    """Normalize a Point, a vector, or a sequence of either into an (m, d) array."""
    if isinstance(points, Point):
        return points.as_array()[None, :]
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise DimensionMismatch(f"expected a 1-D or 2-D block, got ndim={arr.ndim}")
        return arr
    seq = list(points)
    if not seq:
        return np.empty((0, 0))
    if isinstance(seq[0], Point):
        return np.vstack([p.as_array() for p in seq])
    return as_point_block(np.asarray(seq, dtype=float))


class Metric:
    """Base distance on state-action vectors.

    ``separable`` asserts d((s1,a),(s2,a)) equals the state-only distance
    whenever the actions agree; the slope-propagation formula is gated on it.
    """

    kind: str = "abstract"
    separable: bool = False

    def expected_dim(self) -> int | None:
        return None

    def map_coords(self, block: np.ndarray) -> np.ndarray:
        """Embedding under which this metric is plain Euclidean."""
        raise NotImplementedError

    def pairwise(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = self.check_block(as_point_block(x))
        y = self.check_block(as_point_block(y))
        return _kernels.euclidean_pairwise(self.map_coords(x), self.map_coords(y))

    def check_block(self, block: np.ndarray) -> np.ndarray:
        dim = self.expected_dim()
        if dim is not None and block.shape[1] != dim:
            raise DimensionMismatch(
                f"{self.kind} metric expects dimension {dim}, got {block.shape[1]}"
            )
        return block

    def describe(self) -> dict:
        return {"kind": self.kind, "separable": self.separable}


@dataclass(frozen=True)
class EuclideanMetric(Metric):
    kind = "euclidean"
    separable = True

    def map_coords(self, block):
        return block


@dataclass(frozen=True)
class WeightedEuclideanMetric(Metric):
    """sqrt(sum_k w_k (u_k - v_k)^2) with strictly positive weights."""

    weights: tuple[float, ...]
    kind = "weighted_euclidean"
    separable = True

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        object.__setattr__(self, "weights", w)
        if not w or any(v <= 0 or not math.isfinite(v) for v in w):
            raise DimensionMismatch("weights must be positive finite reals")
        object.__setattr__(self, "_scale", np.sqrt(np.asarray(w)))

    def expected_dim(self):
        return len(self.weights)

    def map_coords(self, block):
        return block * self._scale

    def describe(self):
        return {"kind": self.kind, "separable": self.separable, "weights": list(self.weights)}


class FeatureTableMetric(Metric):
    """Euclidean distance in a precomputed feature space.

    The table maps known dataset points to feature vectors.  Queries are
    matched against the known points at DUPLICATE_EPS tolerance; unknown
    points borrow the nearest row's features when ``fallback`` is enabled
    (use is reported through :meth:`fallback_hits`) and raise
    FeatureLookupMiss otherwise.  This metric does not assert separability.
    """

    kind = "feature_table"
    separable = False

    def __init__(self, row_points: np.ndarray, features: np.ndarray, fallback: bool = True):
        row_points = as_point_block(row_points)
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[0] != row_points.shape[0]:
            raise DimensionMismatch("one feature vector per table point is required")
        if row_points.shape[0] == 0:
            raise EmptyInput("feature table must map at least one point")
        if not np.isfinite(features).all() or not np.isfinite(row_points).all():
            raise DimensionMismatch("feature table entries must be finite")
        self.row_points = row_points
        self.features = features
        self.fallback = bool(fallback)

    def expected_dim(self):
        return self.row_points.shape[1]

    def _lookup(self, block: np.ndarray, count_fallback: bool = False):
        self.check_block(block)
        hits = 0
        out = np.empty((block.shape[0], self.features.shape[1]))
        for start in range(0, block.shape[0], 4096):
            chunk = block[start:start + 4096]
            d = _kernels.euclidean_pairwise(chunk, self.row_points)
            nearest = d.argmin(axis=1)
            misses = d[np.arange(len(chunk)), nearest] > DUPLICATE_EPS
            if misses.any() and not self.fallback:
                raise FeatureLookupMiss(
                    f"{int(misses.sum())} query point(s) missing from the feature table"
                )
            hits += int(misses.sum())
            out[start:start + 4096] = self.features[nearest]
        return (out, hits) if count_fallback else out

    def fallback_hits(self, points) -> int:
        """Number of the given points that would use the nearest-row fallback."""
        _, hits = self._lookup(as_point_block(points), count_fallback=True)
        return hits

    def map_coords(self, block):
        return self._lookup(block)

    def describe(self):
        return {
            "kind": self.kind,
            "separable": self.separable,
            "table_rows": int(self.row_points.shape[0]),
            "feature_dim": int(self.features.shape[1]),
            "fallback": self.fallback,
        }


def distance(metric: Metric, p, q) -> float:
    """Distance between two points; exactly 0 for coordinate-wise equal inputs
    under the euclidean kinds."""
    if isinstance(p, Point) and isinstance(q, Point):
        if (p.state_dim, p.action_dim) != (q.state_dim, q.action_dim):
            raise DimensionMismatch("points carry different state/action dimensions")
    pb = as_point_block(p)
    qb = as_point_block(q)
    if pb.shape[1] != qb.shape[1]:
        raise DimensionMismatch(f"dimension mismatch: {pb.shape[1]} vs {qb.shape[1]}")
    return float(metric.pairwise(pb, qb)[0, 0])


def min_distances(points, centers, metric: Metric) -> np.ndarray:
    """Per-point distance to the nearest center."""
    pts = metric.check_block(as_point_block(points))
    ctr = metric.check_block(as_point_block(centers))
    return _kernels.nearest_distances(metric.map_coords(pts), metric.map_coords(ctr))


def covering_radius(data_points, probe_points, metric: Metric) -> float:
    """max over probes of the distance to the nearest data point.

    A finite probe set can only under-estimate the supremum over the
    continuous domain, so the result is a lower bound on the true radius.
    """
    data = as_point_block(data_points)
    probes = as_point_block(probe_points)
    if data.shape[0] == 0 or probes.shape[0] == 0:
        raise EmptyInput("covering_radius needs non-empty data and probe sets")
    if data.shape[1] != probes.shape[1]:
        raise DimensionMismatch("data and probe dimensions differ")
    return float(min_distances(probes, data, metric).max())


def default_probes(points, count: int = DEFAULT_PROBE_COUNT, inflate: float = 0.05,
                   seed: int = 0, max_grid_dims: int = 2) -> np.ndarray:
    """Probe set over the bounding box of ``points``, inflated per axis.

    Up to ``max_grid_dims`` active axes (positive width) get a uniform grid of
    about ``count`` points; higher-dimensional boxes fall back to ``count``
    seeded uniform samples.  Degenerate axes stay pinned at their single value.
    """
    arr = as_point_block(points)
    if arr.shape[0] == 0:
        raise EmptyInput("default_probes needs at least one point")
    lo = arr.min(axis=0)
    hi = arr.max(axis=0)
    span = hi - lo
    lo = lo - inflate * span
    hi = hi + inflate * span
    active = np.nonzero(span > 1e-12)[0]
    center = 0.5 * (lo + hi)
    if len(active) == 0:
        return center[None, :].copy()
    if len(active) <= max_grid_dims:
        per_axis = max(2, int(round(count ** (1.0 / len(active)))))
        axes = [np.linspace(lo[i], hi[i], per_axis) for i in active]
        mesh = np.meshgrid(*axes, indexing="ij")
        probes = np.tile(center, (mesh[0].size, 1))
        for k, i in enumerate(active):
            probes[:, i] = mesh[k].ravel()
        return probes
    rng = np.random.default_rng([int(seed), 0x9E37])
    probes = np.tile(center, (count, 1))
    probes[:, active] = rng.uniform(lo[active], hi[active], size=(count, len(active)))
    return probes
