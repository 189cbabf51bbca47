"""Frozen empirical Bellman backup.

The target policy's next-state actions are sampled once at construction, so
every later application of the operator is pure arithmetic over stored
points.  That determinism is what makes the monotone iteration traces exact
instead of holding only in expectation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, IndexOutOfRange
from .mdp import DiscreteTablePolicy, Policy, TransitionDataset, check_gamma
from .metric import Metric

_TAG_FREEZE = 17


@dataclass(frozen=True)
class FrozenBellman:
    """Per-row rewards plus pre-sampled next state-action points.

    ``next_points[i, k]`` shares the logged next state of row i and carries
    the k-th frozen action draw; ``weights[i]`` sums to 1 per row (uniform
    for sampled actions, exact probabilities for discrete policies).
    """

    anchors: np.ndarray      # (n, ds + da) logged state-action pairs
    rewards: np.ndarray      # (n,)
    gamma: float
    next_points: np.ndarray  # (n, K, ds + da)
    weights: np.ndarray      # (n, K)
    seed: int
    action_samples: int
    policy_stochastic: bool

    @property
    def n(self) -> int:
        return self.anchors.shape[0]

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]

    def flat_next_points(self) -> np.ndarray:
        return self.next_points.reshape(-1, self.dim)


def freeze(dataset: TransitionDataset, target: Policy, action_samples: int,
           gamma: float, seed: int = 0) -> FrozenBellman:
    """Draw and store the target-policy actions at every logged next state.

    Deterministic given (dataset, policy, action_samples, seed).  Discrete
    policies store the exact action expectation instead of samples, in which
    case ``action_samples`` is ignored.
    """
    gamma = check_gamma(gamma)
    if action_samples < 1:
        raise EmptyInput("action_samples must be at least 1")
    n = dataset.n
    anchors = dataset.x()
    if isinstance(target, DiscreteTablePolicy):
        k = len(target.actions)
        next_points = np.empty((n, k, dataset.state_dim + target.action_dim))
        weights = np.empty((n, k))
        for i in range(n):
            weights[i] = target.probs(dataset.s_next[i])
            next_points[i, :, :dataset.state_dim] = dataset.s_next[i]
            next_points[i, :, dataset.state_dim:] = target.actions
    else:
        rng = np.random.default_rng([int(seed), _TAG_FREEZE])
        k = int(action_samples)
        next_points = np.empty((n, k, dataset.state_dim + target.action_dim))
        for i in range(n):
            next_points[i, :, :dataset.state_dim] = dataset.s_next[i]
            next_points[i, :, dataset.state_dim:] = target.sample_many(dataset.s_next[i], rng, k)
        weights = np.full((n, k), 1.0 / k)
    return FrozenBellman(anchors, dataset.r.copy(), gamma, next_points, weights,
                         int(seed), k, target.stochastic)


def apply(fb: FrozenBellman, value_fn, i: int) -> float:
    """One Bellman backup at row ``i``: r_i + gamma * weighted mean of the
    value function at the frozen next points."""
    if not (0 <= i < fb.n):
        raise IndexOutOfRange(f"row {i} outside 0..{fb.n - 1}")
    vals = np.array([float(value_fn(p)) for p in fb.next_points[i]])
    return float(fb.rewards[i] + fb.gamma * float(fb.weights[i] @ vals))


def mean_next_distance(fb: FrozenBellman, metric: Metric) -> np.ndarray:
    """Weighted mean distance from each anchor to its frozen next points."""
    out = np.empty(fb.n)
    for i in range(fb.n):
        d = metric.pairwise(fb.next_points[i], fb.anchors[i][None, :])[:, 0]
        out[i] = float(d @ fb.weights[i])
    return out
