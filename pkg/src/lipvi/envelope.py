"""Closed-form Lipschitz envelopes over anchor points.

The upper envelope of anchors x_j with caps q_j and slope budget eta is
min_j (q_j + eta * d(x, x_j)): the pointwise-largest eta-Lipschitz function
that stays at or below every cap.  The lower envelope mirrors it with
max_j (q_j - eta * d(x, x_j)).  Evaluation is an exact scan over anchors;
no approximate nearest-neighbor structure is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import configured_threads as max_threads  # noqa: F401 - public knob
from .errors import DimensionMismatch, EmptyInput, LengthMismatch
from .metric import Metric, as_point_block

UPPER = "upper"
LOWER = "lower"

CROSSING_TOL = 1e-12


def reduce_over_anchors(dists: np.ndarray, q: np.ndarray, eta: float,
                        direction: str) -> np.ndarray:
    """Envelope values from a precomputed (m, n) distance block."""
    if direction == UPPER:
        return (q[None, :] + eta * dists).min(axis=1)
    if direction == LOWER:
        return (q[None, :] - eta * dists).max(axis=1)
    raise ValueError(f"direction must be '{UPPER}' or '{LOWER}', got {direction!r}")


@dataclass(frozen=True)
class EnvelopeState:
    """Anchors, per-anchor values, slope budget and direction.

    The constructor snapshots the anchors and values; evaluation reads only
    the snapshots, so a state is immutable and safe to share across threads.
    """

    anchors: np.ndarray
    q: np.ndarray
    eta: float
    direction: str
    metric: Metric

    def __post_init__(self):
        anchors = as_point_block(self.anchors)
        q = np.asarray(self.q, dtype=float).ravel()
        if anchors.shape[0] < 1:
            raise EmptyInput("an envelope needs at least one anchor")
        if q.shape[0] != anchors.shape[0]:
            raise LengthMismatch("one value per anchor is required")
        if not np.isfinite(q).all():
            raise DimensionMismatch("anchor values must be finite")
        if not (self.eta > 0):
            raise DimensionMismatch("eta must be positive")
        if self.direction not in (UPPER, LOWER):
            raise DimensionMismatch(f"unknown direction {self.direction!r}")
        self.metric.check_block(anchors)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "q", q)
        # Evaluation reads these frozen copies, never the public fields.
        object.__setattr__(self, "_mapped_anchors", self.metric.map_coords(anchors).copy())
        object.__setattr__(self, "_labels", q.copy())

    @property
    def n(self) -> int:
        return self.anchors.shape[0]

    def eval(self, x) -> float:
        block = self.metric.check_block(as_point_block(x))
        if block.shape[0] != 1:
            raise DimensionMismatch("eval takes a single point; use eval_batch")
        return float(self._reduce(block)[0])

    def _reduce(self, block: np.ndarray) -> np.ndarray:
        return _kernels.reduce_envelope(self.metric.map_coords(block),
                                        self._mapped_anchors, self._labels,
                                        self.eta, self.direction == UPPER)

    def argmin_anchor(self, x) -> int:
        """Index of the anchor attaining the envelope; smallest index on ties."""
        block = self.metric.check_block(as_point_block(x))
        d = self.metric.pairwise(block, self.anchors)[0]
        if self.direction == UPPER:
            return int((self._labels + self.eta * d).argmin())
        return int((self._labels - self.eta * d).argmax())

    def eval_batch(self, xs) -> np.ndarray:
        """Element-wise equal to eval.

        Each output depends only on its own query, so internal batching and
        threading never change the result.
        """
        return self._reduce(self.metric.check_block(as_point_block(xs)))

    def expected_value(self, init_points) -> float:
        """Arithmetic mean of the envelope over the given initial points."""
        pts = as_point_block(init_points)
        if pts.shape[0] == 0:
            raise EmptyInput("expected_value needs at least one initial point")
        return float(self.eval_batch(pts).mean())


def eval_envelope(state: EnvelopeState, x) -> float:
    return state.eval(x)


def eval_batch(state: EnvelopeState, xs) -> np.ndarray:
    return state.eval_batch(xs)


def expected_value(state: EnvelopeState, init_points) -> float:
    return state.expected_value(init_points)


def crossing_indices(upper_q, lower_q, tol: float = CROSSING_TOL) -> np.ndarray:
    """Indices where the upper values dip strictly below the lower values.

    Equality is not a crossing; the tolerance guards against float noise.
    """
    upper_q = np.asarray(upper_q, dtype=float).ravel()
    lower_q = np.asarray(lower_q, dtype=float).ravel()
    if upper_q.shape != lower_q.shape:
        raise LengthMismatch(f"length mismatch: {upper_q.shape[0]} vs {lower_q.shape[0]}")
    return np.nonzero(upper_q < lower_q - tol)[0]
