"""Trajectory importance sampling and a simple concentration lower bound.

This baseline needs the behavior policy's density at every logged action, so
it only applies to data from the built-in simulators where that policy is
known; it exists for looseness comparisons against the interval bounds.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import InvalidDelta, ZeroBehaviorDensity
from .mdp import Policy, Trajectory, check_gamma


def weighted_returns(trajectories: Sequence[Trajectory], behavior: Policy,
                     target: Policy, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-trajectory importance weights and discounted returns.

    Weights are the product over steps of target/behavior action densities,
    accumulated in log space so long horizons underflow to 0 instead of
    corrupting the mean.
    """
    gamma = check_gamma(gamma)
    weights = np.empty(len(trajectories))
    returns = np.empty(len(trajectories))
    for idx, traj in enumerate(trajectories):
        log_w = 0.0
        for s, a in zip(traj.s, traj.a):
            pb = behavior.density(s, a)
            if pb <= 0.0:
                raise ZeroBehaviorDensity(
                    f"behavior density vanishes at a logged action in trajectory {idx}"
                )
            pt = target.density(s, a)
            log_w += (-math.inf if pt == 0.0 else math.log(pt)) - math.log(pb)
        weights[idx] = math.exp(log_w) if log_w < 700.0 else math.inf
        disc = gamma ** np.arange(len(traj.r))
        returns[idx] = float(disc @ traj.r)
    return weights, returns


def is_estimate(trajectories: Sequence[Trajectory], behavior: Policy,
                target: Policy, gamma: float) -> float:
    """Mean over trajectories of importance weight times discounted return."""
    weights, returns = weighted_returns(trajectories, behavior, target, gamma)
    return float((weights * returns).mean())


def effective_sample_size(weights) -> float:
    """sum(w) / max(w); collapses toward 1 as one trajectory dominates."""
    weights = np.asarray(weights, dtype=float).ravel()
    top = float(weights.max(initial=0.0))
    if top <= 0.0:
        return 0.0
    return float(weights.sum() / top)


def hoeffding_lower(weighted_values, value_range: float, delta: float) -> float:
    """mean - range * sqrt(ln(1/delta) / (2 m)).

    ``value_range`` must bound the magnitude of the weighted returns for the
    concentration argument to apply; delta = 1 degenerates to the plain mean.
    """
    if not (0.0 < delta <= 1.0):
        raise InvalidDelta(f"delta must lie in (0, 1], got {delta}")
    vals = np.asarray(weighted_values, dtype=float).ravel()
    if vals.size == 0:
        raise InvalidDelta("need at least one weighted return")
    m = vals.size
    return float(vals.mean() - value_range * math.sqrt(math.log(1.0 / delta) / (2.0 * m)))
