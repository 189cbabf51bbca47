"""Empirical Lipschitz-norm estimation and slope-budget propagation.

The pair-scan maxima are lower bounds on the true norms (an empirical max
can only under-shoot a supremum); the misspecification diagnosis in the
iteration module is the practical guard against the resulting optimism.
"""

from __future__ import annotations

import numpy as np

from .errors import (ContractionViolated, DuplicateConflict,
                     SeparabilityRequired, TooFewRows)
from .mdp import TransitionDataset, check_gamma
from .metric import (DUPLICATE_EPS, EuclideanMetric, Metric,
                     WeightedEuclideanMetric)

_TAG_ROWCAP = 29

# |value difference| above this over a duplicate pair is an infinite slope.
_CONFLICT_TOL = 1e-9

_PAIR_BLOCK = 256


def _capped_indices(n: int, row_cap: int | None, seed: int) -> np.ndarray:
    if row_cap is None or n <= row_cap:
        return np.arange(n)
    rng = np.random.default_rng([int(seed), _TAG_ROWCAP])
    return np.sort(rng.choice(n, size=row_cap, replace=False))


def _pair_scan(points: np.ndarray, values: np.ndarray, metric: Metric,
               value_dist) -> float:
    """max over pairs of value-difference / point-distance, skipping duplicates.

    ``value_dist(i_block, j)`` returns the numerator block; duplicates with a
    conflicting numerator raise DuplicateConflict.
    """
    n = points.shape[0]
    best = 0.0
    for start in range(0, n, _PAIR_BLOCK):
        stop = min(n, start + _PAIR_BLOCK)
        d = metric.pairwise(points[start:stop], points)
        num = value_dist(np.arange(start, stop))
        dup = d <= DUPLICATE_EPS
        if dup.any():
            conflicts = dup & (num > _CONFLICT_TOL)
            if conflicts.any():
                i, j = np.argwhere(conflicts)[0]
                raise DuplicateConflict(
                    f"rows {start + int(i)} and {int(j)} share a point but "
                    f"disagree by {num[i, j]:.3g}"
                )
            num = np.where(dup, 0.0, num)
            d = np.where(dup, 1.0, d)
        best = max(best, float((num / d).max()))
    return best


def estimate_reward_lipschitz(dataset: TransitionDataset, metric: Metric,
                              row_cap: int | None = 5000, seed: int = 0) -> float:
    """Exhaustive max of |r_i - r_j| / d(x_i, x_j) over row pairs.

    Datasets beyond ``row_cap`` rows are scanned on a seeded uniform row
    subsample, which can only lower the estimate further; pass None to force
    the full scan.
    """
    if dataset.n < 2:
        raise TooFewRows("need at least two rows to estimate a slope")
    idx = _capped_indices(dataset.n, row_cap, seed)
    x = dataset.x()[idx]
    r = dataset.r[idx]
    return _pair_scan(x, r, metric,
                      lambda rows: np.abs(r[rows][:, None] - r[None, :]))


def estimate_transition_lipschitz(dataset: TransitionDataset, metric_x: Metric,
                                  metric_s: Metric, row_cap: int | None = 5000,
                                  seed: int = 0) -> float:
    """Exhaustive max of d_s(s'_i, s'_j) / d_x(x_i, x_j) over row pairs."""
    if dataset.n < 2:
        raise TooFewRows("need at least two rows to estimate a slope")
    idx = _capped_indices(dataset.n, row_cap, seed)
    x = dataset.x()[idx]
    s_next = dataset.s_next[idx]
    return _pair_scan(x, s_next, metric_x,
                      lambda rows: metric_s.pairwise(s_next[rows], s_next))


def state_metric(metric: Metric, state_dim: int) -> Metric:
    """State-space restriction of a separable state-action metric."""
    if isinstance(metric, WeightedEuclideanMetric):
        return WeightedEuclideanMetric(metric.weights[:state_dim])
    if isinstance(metric, EuclideanMetric):
        return EuclideanMetric()
    raise SeparabilityRequired(
        f"{metric.kind} metric has no canonical state restriction"
    )


def propagate(eta_r: float, eta_t: float, gamma: float,
              metric: Metric | None = None) -> float:
    """Slope budget for the value function from reward and transition slopes.

    Returns eta_r / (1 - gamma * eta_t), valid only while gamma * eta_t < 1.
    When a metric is supplied it must assert separability, since the formula
    is derived under a separable state-action distance; non-separable metrics
    refuse and the caller must pick the budget explicitly.
    """
    gamma = check_gamma(gamma)
    if eta_r < 0 or eta_t < 0:
        raise ContractionViolated("slope estimates must be non-negative")
    if metric is not None and not metric.separable:
        raise SeparabilityRequired(
            f"{metric.kind} metric does not assert separability; "
            "pass eta explicitly"
        )
    if gamma * eta_t >= 1.0:
        raise ContractionViolated(
            f"gamma * transition slope = {gamma * eta_t:.6g} >= 1; "
            "the propagation formula does not apply"
        )
    return eta_r / (1.0 - gamma * eta_t)
