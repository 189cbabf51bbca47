"""Policies, simulated environments, trajectory collection and ground truth.

Both built-in environments have deterministic transitions and rewards, so a
single (state, action) pair always maps to the same (next state, reward)
pair bit-for-bit.  Randomness enters only through policies and initial-state
sampling, and every sampling path is seeded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyInput, InvalidGamma

# Seed-stream tags keep collection, rollouts, freezing etc. independent.
_TAG_TRUTH = 11
_TAG_INIT_POINTS = 13


def check_gamma(gamma: float) -> float:
    """Discount factors live in [0, 1); 0 keeps the one-step special cases usable."""
    gamma = float(gamma)
    if not (0.0 <= gamma < 1.0):
        raise InvalidGamma(f"gamma must lie in [0, 1), got {gamma}")
    return gamma


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

class Policy:
    """Maps states to action distributions."""

    action_dim: int = 1
    stochastic: bool = False

    def mean(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample_many(self, s: np.ndarray, rng: np.random.Generator, count: int) -> np.ndarray:
        return np.vstack([self.sample(s, rng) for _ in range(count)])

    def density(self, s: np.ndarray, a: np.ndarray) -> float:
        """Density (or pmf) of action ``a`` at state ``s``.

        Deterministic policies return inf at their action and 0 elsewhere;
        they cannot serve as importance-sampling behavior policies.
        """
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": type(self).__name__, "stochastic": self.stochastic}


def _gauss_pdf(x: float, mu: float, sigma: float) -> float:
    if sigma <= 0.0:
        return math.inf if x == mu else 0.0
    z = (x - mu) / sigma
    return math.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class GaussianLinearPolicy(Policy):
    """1-D action a = gain * s + bias + noise, noise ~ N(0, sigma^2)."""

    gain: float
    bias: float
    sigma: float = 0.0
    action_dim = 1

    def __post_init__(self):
        if self.sigma < 0:
            raise DimensionMismatch("sigma must be non-negative")

    @property
    def stochastic(self) -> bool:
        return self.sigma > 0.0

    def _mu(self, s) -> float:
        return self.gain * float(np.asarray(s).ravel()[0]) + self.bias

    def mean(self, s):
        return np.array([self._mu(s)])

    def sample(self, s, rng):
        mu = self._mu(s)
        if self.sigma == 0.0:
            return np.array([mu])
        return np.array([mu + self.sigma * rng.standard_normal()])

    def sample_many(self, s, rng, count):
        mu = self._mu(s)
        if self.sigma == 0.0:
            return np.full((count, 1), mu)
        return (mu + self.sigma * rng.standard_normal(count))[:, None]

    def density(self, s, a):
        return _gauss_pdf(float(np.asarray(a).ravel()[0]), self._mu(s), self.sigma)

    def describe(self):
        return {"kind": "gaussian_linear", "gain": self.gain, "bias": self.bias,
                "sigma": self.sigma, "stochastic": self.stochastic}


@dataclass(frozen=True)
class ConstantPolicy(Policy):
    """Always plays the same action."""

    action: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "action", tuple(float(v) for v in np.atleast_1d(self.action)))

    @property
    def action_dim(self) -> int:
        return len(self.action)

    def mean(self, s):
        return np.asarray(self.action)

    def sample(self, s, rng):
        return np.asarray(self.action)

    def sample_many(self, s, rng, count):
        return np.tile(np.asarray(self.action), (count, 1))

    def density(self, s, a):
        same = np.allclose(np.asarray(a, dtype=float).ravel(), self.action, atol=1e-12)
        return math.inf if same else 0.0

    def describe(self):
        return {"kind": "constant", "action": list(self.action), "stochastic": False}


class DiscreteTablePolicy(Policy):
    """Finite action set with per-state probability rows.

    ``table`` maps a state (as a tuple of floats) to a probability vector over
    ``actions``; states missing from the table use ``default_probs``.
    """

    def __init__(self, actions, table: dict, default_probs=None):
        self.actions = np.atleast_2d(np.asarray(actions, dtype=float))
        self.table = {}
        for key, probs in table.items():
            self.table[self._key(key)] = self._check_probs(probs)
        self.default_probs = None if default_probs is None else self._check_probs(default_probs)
        self.stochastic = True

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    def _check_probs(self, probs) -> np.ndarray:
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (self.actions.shape[0],):
            raise DimensionMismatch("one probability per action required")
        if abs(float(probs.sum()) - 1.0) > 1e-9 or (probs < 0).any():
            raise DimensionMismatch("probability rows must be non-negative and sum to 1")
        return probs

    @staticmethod
    def _key(s) -> tuple:
        return tuple(float(v) for v in np.atleast_1d(np.asarray(s, dtype=float)))

    def probs(self, s) -> np.ndarray:
        row = self.table.get(self._key(s), self.default_probs)
        if row is None:
            raise DimensionMismatch(f"state {s} missing from policy table and no default given")
        return row

    def mean(self, s):
        return self.probs(s) @ self.actions

    def sample(self, s, rng):
        return self.actions[rng.choice(len(self.actions), p=self.probs(s))]

    def density(self, s, a):
        a = np.asarray(a, dtype=float).ravel()
        row = self.probs(s)
        total = 0.0
        for k, act in enumerate(self.actions):
            if np.allclose(act, a, atol=1e-12):
                total += float(row[k])
        return total

    def describe(self):
        return {"kind": "discrete_table", "actions": self.actions.tolist(),
                "states": len(self.table), "stochastic": True}


def _pendulum_controller(s) -> float:
    """Deterministic swing-up: smooth energy pumping blended into a PD hold.

    The pump saturates quickly and carries a small velocity bias so the
    hanging rest point is not a fixed point; the blend keeps the control law
    smooth, which keeps the closed-loop value function Lipschitz.
    """
    costh, sinth, thdot = (float(v) for v in np.asarray(s).ravel())
    th = math.atan2(sinth, costh)
    energy = thdot * thdot / 6.0 + 5.0 * costh
    near_top = math.exp(-((th / 0.45) ** 2) - ((thdot / 2.0) ** 2))
    pump = 2.0 * math.tanh(1.2 * (thdot + 0.15) * (5.0 - energy))
    hold = -12.0 * th - 2.5 * thdot
    u = (1.0 - near_top) * pump + near_top * hold
    return min(2.0, max(-2.0, u))


@dataclass(frozen=True)
class SwingUpPolicy(Policy):
    """Pendulum swing-up controller plus optional Gaussian torque noise."""

    sigma: float = 0.0
    action_dim = 1

    @property
    def stochastic(self) -> bool:
        return self.sigma > 0.0

    def mean(self, s):
        return np.array([_pendulum_controller(s)])

    def sample(self, s, rng):
        u = _pendulum_controller(s)
        if self.sigma == 0.0:
            return np.array([u])
        return np.array([u + self.sigma * rng.standard_normal()])

    def sample_many(self, s, rng, count):
        u = _pendulum_controller(s)
        if self.sigma == 0.0:
            return np.full((count, 1), u)
        return (u + self.sigma * rng.standard_normal(count))[:, None]

    def density(self, s, a):
        return _gauss_pdf(float(np.asarray(a).ravel()[0]),
                          _pendulum_controller(s), self.sigma)

    def describe(self):
        return {"kind": "swingup", "sigma": self.sigma, "stochastic": self.stochastic}


# ---------------------------------------------------------------------------
# Environments
# ---------------------------------------------------------------------------

class Environment:
    name: str = "abstract"
    state_dim: int = 1
    action_dim: int = 1

    def step(self, s: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, float]:
        raise NotImplementedError

    def init_state(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def default_target(self) -> Policy:
        raise NotImplementedError

    def default_behavior(self) -> Policy:
        raise NotImplementedError

    def _check(self, s, a) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=float).ravel()
        a = np.asarray(a, dtype=float).ravel()
        if s.shape != (self.state_dim,) or a.shape != (self.action_dim,):
            raise DimensionMismatch(
                f"{self.name} expects state dim {self.state_dim} and action dim "
                f"{self.action_dim}, got {s.shape} and {a.shape}"
            )
        return s, a


def _bump(x: float) -> float:
    return math.sqrt(x * x + x * math.sin(x) + 1.0)


@dataclass(frozen=True)
class SyntheticLinearEnv(Environment):
    """1-D affine transitions with a reward built so the target Q is known.

    The transition is s' = 0.8 s - 0.4 a - 0.1 and the known value function is
    q_value(s, a) = f(s) + f(a - pi/2) with f(x) = sqrt(x^2 + x sin x + 1).
    The reward is the one-step residual of that value function, using the
    target policy's mean action at the next state so the reward stays a
    deterministic function of (s, a).  With the default tiny policy noise the
    mean-action approximation is second order in sigma.
    """

    gamma: float = 0.95
    policy_gain: float = 1.5
    policy_bias: float = -0.1
    policy_sigma: float = math.exp(-5.0)

    name = "synthetic"
    state_dim = 1
    action_dim = 1

    def __post_init__(self):
        check_gamma(self.gamma)

    def transition(self, s: float, a: float) -> float:
        return 0.8 * s - 0.4 * a - 0.1

    def q_value(self, s: float, a: float) -> float:
        return _bump(s) + _bump(a - math.pi / 2.0)

    def step(self, s, a):
        s, a = self._check(s, a)
        s0, a0 = float(s[0]), float(a[0])
        sn = self.transition(s0, a0)
        an = self.policy_gain * sn + self.policy_bias
        r = self.q_value(s0, a0) - self.gamma * self.q_value(sn, an)
        return np.array([sn]), r

    def init_state(self, rng):
        return np.array([rng.uniform(-1.2, 1.2)])

    def default_target(self):
        return GaussianLinearPolicy(self.policy_gain, self.policy_bias, self.policy_sigma)

    def default_behavior(self, sigma: float = 0.1):
        return GaussianLinearPolicy(self.policy_gain, self.policy_bias, sigma)


def wrap_angle(th: float) -> float:
    return ((th + math.pi) % (2.0 * math.pi)) - math.pi


@dataclass(frozen=True)
class PendulumEnv(Environment):
    """Torque-limited swing-up with state (cos th, sin th, thdot).

    Gravity 10, mass 1, length 1, dt 0.05; velocity clipped to [-8, 8] and
    torque to [-2, 2]; reward -(wrap(th)^2 + 0.1 thdot^2 + 0.001 a^2).
    """

    name = "pendulum"
    state_dim = 3
    action_dim = 1

    dt: float = 0.05

    def step(self, s, a):
        s, a = self._check(s, a)
        costh, sinth, thdot = (float(v) for v in s)
        th = math.atan2(sinth, costh)
        u = min(2.0, max(-2.0, float(a[0])))
        cost = wrap_angle(th) ** 2 + 0.1 * thdot * thdot + 0.001 * u * u
        thdot_n = thdot + (15.0 * sinth + 3.0 * u) * self.dt
        thdot_n = min(8.0, max(-8.0, thdot_n))
        th_n = th + thdot_n * self.dt
        return np.array([math.cos(th_n), math.sin(th_n), thdot_n]), -cost

    def init_state(self, rng):
        th = rng.uniform(-math.pi, math.pi)
        thdot = rng.uniform(-1.0, 1.0)
        return np.array([math.cos(th), math.sin(th), thdot])

    def default_target(self):
        return SwingUpPolicy(0.0)

    def default_behavior(self, sigma: float = 0.4):
        return SwingUpPolicy(sigma)


def make_env(name: str, gamma: float = 0.95) -> Environment:
    if name == "synthetic":
        return SyntheticLinearEnv(gamma=gamma)
    if name == "pendulum":
        return PendulumEnv()
    raise EmptyInput(f"unknown environment {name!r}; valid: synthetic, pendulum")


def step(env: Environment, s, a) -> tuple[np.ndarray, float]:
    return env.step(s, a)


def sample_action(policy: Policy, s, rng: np.random.Generator) -> np.ndarray:
    return policy.sample(np.asarray(s, dtype=float), rng)


# ---------------------------------------------------------------------------
# Datasets and collection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionDataset:
    """Logged transitions (s, a, r, s') with optional (episode, t) tags."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    episode: np.ndarray | None = None
    t: np.ndarray | None = None

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.s, dtype=float))
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        r = np.asarray(self.r, dtype=float).ravel()
        sn = np.atleast_2d(np.asarray(self.s_next, dtype=float))
        if s.shape[0] < 1:
            raise EmptyInput("a dataset needs at least one row")
        if not (s.shape[0] == a.shape[0] == r.shape[0] == sn.shape[0]):
            raise DimensionMismatch("row counts differ across fields")
        if s.shape[1] != sn.shape[1]:
            raise DimensionMismatch("state and next-state dimensions differ")
        for arr in (s, a, r, sn):
            if not np.isfinite(arr).all():
                raise DimensionMismatch("dataset values must be finite")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s_next", sn)
        for name in ("episode", "t"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=int).ravel()
                if val.shape[0] != s.shape[0]:
                    raise DimensionMismatch(f"{name} tags must cover every row")
                object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def state_dim(self) -> int:
        return self.s.shape[1]

    @property
    def action_dim(self) -> int:
        return self.a.shape[1]

    def x(self) -> np.ndarray:
        """State-action block, one row per transition."""
        return np.hstack([self.s, self.a])

    def subset(self, indices) -> "TransitionDataset":
        idx = np.asarray(indices, dtype=int)
        return TransitionDataset(
            self.s[idx], self.a[idx], self.r[idx], self.s_next[idx],
            None if self.episode is None else self.episode[idx],
            None if self.t is None else self.t[idx],
        )


def collect(env: Environment, behavior: Policy, n_t: int, H: int,
            init_sampler: Callable | None = None, seed: int = 0) -> TransitionDataset:
    """Roll ``n_t`` episodes of ``H`` steps; rows are tagged (episode, t).

    Each episode owns an RNG derived from (seed, episode index), so the result
    is independent of any episode-level scheduling.
    """
    if n_t < 1 or H < 1:
        raise EmptyInput("n_t and H must be at least 1")
    sampler = init_sampler or env.init_state
    s_rows, a_rows, r_rows, sn_rows, eps, ts = [], [], [], [], [], []
    for ep in range(n_t):
        rng = np.random.default_rng([int(seed), ep])
        s = np.asarray(sampler(rng), dtype=float)
        for t in range(H):
            a = behavior.sample(s, rng)
            sn, r = env.step(s, a)
            s_rows.append(s)
            a_rows.append(np.asarray(a, dtype=float))
            r_rows.append(r)
            sn_rows.append(sn)
            eps.append(ep)
            ts.append(t)
            s = sn
    return TransitionDataset(np.vstack(s_rows), np.vstack(a_rows), np.asarray(r_rows),
                             np.vstack(sn_rows), np.asarray(eps), np.asarray(ts))


@dataclass(frozen=True)
class ReturnEstimate:
    """Monte Carlo return with its uncertainty bookkeeping."""

    value: float
    std_error: float
    truncation: float
    n_rollouts: int
    horizon: int

    @property
    def band(self) -> float:
        """3 standard errors plus the horizon-truncation tolerance."""
        return 3.0 * self.std_error + self.truncation


def ground_truth_return(env: Environment, target: Policy,
                        init_sampler: Callable | None, gamma: float,
                        n_rollouts: int, H: int, seed: int = 0) -> ReturnEstimate:
    """Average of the discounted H-step return over seeded rollouts."""
    gamma = check_gamma(gamma)
    if n_rollouts < 1 or H < 1:
        raise EmptyInput("n_rollouts and H must be at least 1")
    sampler = init_sampler or env.init_state
    totals = np.empty(n_rollouts)
    r_max = 0.0
    for k in range(n_rollouts):
        rng = np.random.default_rng([int(seed), _TAG_TRUTH, k])
        s = np.asarray(sampler(rng), dtype=float)
        total = 0.0
        disc = 1.0
        for _ in range(H):
            a = target.sample(s, rng)
            s, r = env.step(s, a)
            total += disc * r
            disc *= gamma
            r_max = max(r_max, abs(r))
        totals[k] = total
    value = float(totals.mean())
    se = float(totals.std(ddof=1) / math.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    truncation = gamma ** H * r_max / (1.0 - gamma)
    return ReturnEstimate(value, se, truncation, n_rollouts, H)


def draw_init_points(env: Environment, target: Policy, count: int, seed: int = 0,
                     init_sampler: Callable | None = None) -> np.ndarray:
    """Initial state-action pairs: s0 from the initial distribution, a0 from the policy."""
    if count < 1:
        raise EmptyInput("need at least one initial point")
    sampler = init_sampler or env.init_state
    rng = np.random.default_rng([int(seed), _TAG_INIT_POINTS])
    rows = []
    for _ in range(count):
        s = np.asarray(sampler(rng), dtype=float)
        a = np.asarray(target.sample(s, rng), dtype=float)
        rows.append(np.concatenate([s, a]))
    return np.vstack(rows)


def estimate_value_slope(env: Environment, target: Policy, gamma: float,
                         count: int = 300, horizon: int = 200,
                         action_jitter: float = 0.5, seed: int = 0) -> float:
    """Empirical Lipschitz slope of the target's value over rollout probes.

    Probes pair initial states with jittered mean actions; each value is a
    deterministic mean-action rollout.  The max pairwise ratio under-estimates
    the true norm, so callers should keep a margin (the pendulum experiments
    double it) when turning this into a slope budget or metric scale.
    """
    gamma = check_gamma(gamma)
    if count < 2:
        raise EmptyInput("need at least two probes to measure a slope")
    rng = np.random.default_rng([int(seed), 37])
    xs = np.empty((count, env.state_dim + env.action_dim))
    values = np.empty(count)
    for i in range(count):
        s = np.asarray(env.init_state(rng), dtype=float)
        a = np.asarray(target.mean(s), dtype=float)
        a = a + rng.uniform(-action_jitter, action_jitter, size=a.shape)
        xs[i] = np.concatenate([s, a])
        total = 0.0
        disc = 1.0
        cur, r = env.step(s, a)
        total += r
        for _ in range(horizon - 1):
            disc *= gamma
            cur, r = env.step(cur, target.mean(cur))
            total += disc * r
        values[i] = total
    from ._kernels import euclidean_pairwise
    d = euclidean_pairwise(xs, xs)
    dv = np.abs(values[:, None] - values[None, :])
    mask = d > 1e-12
    return float((dv[mask] / d[mask]).max())


def calibrated_metric_scale(env: Environment, target: Policy, gamma: float,
                            eta: float, margin: float = 2.0, count: int = 300,
                            horizon: int = 200, seed: int = 0) -> float:
    """Uniform coordinate scale making ``eta`` a valid slope budget.

    Stretching every axis by margin * slope / eta leaves the value function
    with slope about eta / margin in the scaled space, mirroring the
    experimental practice of budgeting twice the measured value slope.
    """
    slope = estimate_value_slope(env, target, gamma, count=count,
                                 horizon=horizon, seed=seed)
    return max(1.0, margin * slope / eta)


@dataclass(frozen=True)
class Trajectory:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray


def split_trajectories(dataset: TransitionDataset) -> list[Trajectory]:
    """Group dataset rows into per-episode trajectories ordered by t."""
    if dataset.episode is None or dataset.t is None:
        raise EmptyInput("dataset has no (episode, t) tags")
    out = []
    for ep in np.unique(dataset.episode):
        idx = np.nonzero(dataset.episode == ep)[0]
        idx = idx[np.argsort(dataset.t[idx], kind="stable")]
        out.append(Trajectory(dataset.s[idx], dataset.a[idx], dataset.r[idx]))
    return out
