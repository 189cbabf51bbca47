"""Lipschitz value iteration: interval bounds on the discounted return.

Two value chains run in lockstep against one frozen Bellman operator.  The
upper chain starts from labels large enough that the first backup can only
shrink them; from there every backup through the upper envelope keeps
shrinking them, so the per-iteration return estimates form a non-increasing
sequence and any prefix already yields a valid bound.  The lower chain
mirrors this upward.  Subsampled iterations update a random index batch
against an envelope built from that batch only, clamped against the previous
labels so monotonicity survives the looser envelope.

When the two converged envelopes cross at a data point, no function with the
configured slope budget can satisfy every logged backup, so the slope budget
is multiplied by the escalation factor and both chains restart fresh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from . import version as _version
from .bellman import FrozenBellman, freeze, mean_next_distance
from .envelope import LOWER, UPPER, EnvelopeState, crossing_indices
from .errors import (DimensionMismatch, EmptyInput, EmptySubset, EtaExhausted,
                     LipviError)
from .mdp import Policy, TransitionDataset
from .metric import (EuclideanMetric, FeatureTableMetric, Metric,
                     as_point_block, covering_radius, default_probes)

PASS = "pass"
REJECT = "reject"

_TAG_SUBSAMPLE = 23

# Above this many anchors the crossing check runs every 10th iteration
# (plus at convergence).  A crossing can only deepen along a monotone run,
# so a sparser schedule delays detection but never loses it.
_DIAG_EVERY_N = 4000


@dataclass(frozen=True)
class LviConfig:
    """Knobs for one bounds run."""

    gamma: float
    eta: float
    max_iters: int = 100
    tol: float | None = None          # None: resolved to 1e-6 * (1 + max |r_i|)
    subsample_size: int = 0           # 0 = full-sample updates
    action_samples: int = 128
    init_count: int = 100
    escalation_factor: float = 1.1
    max_escalations: int = 20
    seed: int = 0

    def validate(self) -> "LviConfig":
        from .mdp import check_gamma
        check_gamma(self.gamma)
        if not (self.eta > 0):
            raise LipviError("eta must be positive")
        if self.max_iters < 1:
            raise LipviError("max_iters must be at least 1")
        if self.tol is not None and not (self.tol > 0):
            raise LipviError("tol must be positive when given")
        if self.subsample_size < 0:
            raise LipviError("subsample_size must be non-negative")
        if self.action_samples < 1:
            raise LipviError("action_samples must be at least 1")
        if self.init_count < 1:
            raise LipviError("init_count must be at least 1")
        if not (self.escalation_factor > 1):
            raise LipviError("escalation_factor must exceed 1")
        if self.max_escalations < 0:
            raise LipviError("max_escalations must be non-negative")
        return self


@dataclass(frozen=True)
class TracePoint:
    t: int
    r_upper: float
    r_lower: float
    max_dq: float

    def to_dict(self) -> dict:
        return {"t": self.t, "r_upper": self.r_upper,
                "r_lower": self.r_lower, "max_dq": self.max_dq}


@dataclass(frozen=True)
class BoundsReport:
    """Everything a run asserts, plus enough context to reproduce it."""

    lower: float
    upper: float
    eta_used: float
    escalations: int
    iterations_upper: int
    iterations_lower: int
    trace: tuple[TracePoint, ...]
    diagnosis: str                 # "passed" | "escalated" | "exhausted"
    covering_radius: float
    gap_bound: float
    config: dict
    seed: int

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "eta_used": self.eta_used,
            "escalations": self.escalations,
            "iterations": {"upper": self.iterations_upper, "lower": self.iterations_lower},
            "trace": [p.to_dict() for p in self.trace],
            "diagnosis": self.diagnosis,
            "covering_radius": self.covering_radius,
            "gap_bound": self.gap_bound,
            "config": self.config,
            "seed": self.seed,
            "versions": {"lipvi": _version.VERSION, "numpy": np.__version__},
        }


def _envelope_values(queries: np.ndarray, anchors: np.ndarray, q: np.ndarray,
                     eta: float, direction: str, metric: Metric) -> np.ndarray:
    return _kernels.reduce_envelope(metric.map_coords(queries),
                                    metric.map_coords(anchors),
                                    q, eta, direction == UPPER)


def _init_values(fb: FrozenBellman, eta: float, mean_d: np.ndarray,
                 direction: str) -> np.ndarray:
    """Labels that provably move toward the fixed point from the first backup.

    Solving q = r + gamma * (q +/- eta * mean_d) for q gives labels whose own
    one-step backup through the envelope cannot overshoot them; that identity
    is re-checked here numerically.
    """
    sign = 1.0 if direction == UPPER else -1.0
    q0 = (fb.rewards + sign * fb.gamma * eta * mean_d) / (1.0 - fb.gamma)
    one_step_self = fb.rewards + fb.gamma * (q0 + sign * eta * mean_d)
    slack = 1e-9 * (1.0 + np.abs(q0))
    drift = sign * (one_step_self - q0)
    if (drift > slack).any():
        raise LipviError("initialization lost the one-step monotonicity margin")
    return q0


def init_upper(fb: FrozenBellman, eta: float, metric: Metric) -> np.ndarray:
    """Per-row (r_i + gamma * eta * mean frozen distance) / (1 - gamma)."""
    return _init_values(fb, eta, mean_next_distance(fb, metric), UPPER)


def init_lower(fb: FrozenBellman, eta: float, metric: Metric) -> np.ndarray:
    """Mirror of init_upper with the distance term subtracted."""
    return _init_values(fb, eta, mean_next_distance(fb, metric), LOWER)


def _check_labels(q, fb: FrozenBellman) -> np.ndarray:
    q = np.asarray(q, dtype=float).ravel()
    if q.shape[0] != fb.n:
        raise DimensionMismatch(f"expected {fb.n} labels, got {q.shape[0]}")
    if not np.isfinite(q).all():
        raise DimensionMismatch("labels must be finite")
    return q


def iterate_full(q_t, fb: FrozenBellman, eta: float, metric: Metric,
                 direction: str) -> np.ndarray:
    """One unclamped backup of every label through the all-anchor envelope."""
    q_t = _check_labels(q_t, fb)
    n, k, _ = fb.next_points.shape
    vals = _envelope_values(fb.flat_next_points(), fb.anchors, q_t, eta,
                            direction, metric).reshape(n, k)
    return fb.rewards + fb.gamma * (vals * fb.weights).sum(axis=1)


def iterate_subsampled(q_t, fb: FrozenBellman, eta: float, metric: Metric,
                       direction: str, subset) -> np.ndarray:
    """Backup of the subset labels only, against the subset-anchor envelope.

    The subset envelope is looser than the full one, so the fresh backup is
    clamped against the previous label; indices outside the subset are
    untouched.
    """
    q_t = _check_labels(q_t, fb)
    subset = np.unique(np.asarray(subset, dtype=int).ravel())
    if subset.size == 0:
        raise EmptySubset("the update subset must be non-empty")
    if subset.min() < 0 or subset.max() >= fb.n:
        raise DimensionMismatch("subset indices out of range")
    k = fb.next_points.shape[1]
    queries = fb.next_points[subset].reshape(-1, fb.dim)
    vals = _envelope_values(queries, fb.anchors[subset], q_t[subset], eta,
                            direction, metric).reshape(subset.size, k)
    bell = fb.rewards[subset] + fb.gamma * (vals * fb.weights[subset]).sum(axis=1)
    out = q_t.copy()
    if direction == UPPER:
        out[subset] = np.minimum(q_t[subset], bell)
    else:
        out[subset] = np.maximum(q_t[subset], bell)
    return out


def diagnose(upper_q, lower_q) -> str:
    """Reject when any upper value dips strictly below its lower counterpart."""
    return REJECT if crossing_indices(upper_q, lower_q).size else PASS


def diagnose_states(upper_state: EnvelopeState, lower_state: EnvelopeState) -> str:
    """Crossing check between two full envelopes.

    The envelopes cross somewhere iff at some anchor the upper label falls
    below the lower envelope's value there (a point between two anchors
    realizes the infimum of the two distance terms), so anchor comparisons
    suffice.
    """
    lower_at_anchors = lower_state.eval_batch(upper_state.anchors)
    return diagnose(upper_state.q, lower_at_anchors)


class _RunState:
    """Pre-embedded coordinate blocks shared by every iteration of one run."""

    def __init__(self, fb: FrozenBellman, metric: Metric, init_points: np.ndarray):
        self.fb = fb
        self.metric = metric
        self.k = fb.next_points.shape[1]
        self.m_anchors = np.ascontiguousarray(metric.map_coords(fb.anchors))
        self.m_next = np.ascontiguousarray(metric.map_coords(fb.flat_next_points()))
        self.m_init = np.ascontiguousarray(metric.map_coords(init_points))

    def clamped_update(self, q: np.ndarray, eta: float, direction: str,
                       subset: np.ndarray | None) -> tuple[np.ndarray, float]:
        fb = self.fb
        if subset is None:
            sel = np.arange(fb.n)
            queries = self.m_next
            sub_anchors = self.m_anchors
        else:
            sel = subset
            rowsel = (sel[:, None] * self.k + np.arange(self.k)).ravel()
            queries = self.m_next[rowsel]
            sub_anchors = self.m_anchors[sel]
        vals = _kernels.reduce_envelope(queries, sub_anchors, q[sel], eta,
                                        direction == UPPER).reshape(sel.size, self.k)
        bell = fb.rewards[sel] + fb.gamma * (vals * fb.weights[sel]).sum(axis=1)
        clamp = np.minimum if direction == UPPER else np.maximum
        new = q.copy()
        new[sel] = clamp(q[sel], bell)
        delta = float(np.abs(new[sel] - q[sel]).max()) if sel.size else 0.0
        return new, delta

    def return_estimate(self, q: np.ndarray, eta: float, direction: str) -> float:
        vals = _kernels.reduce_envelope(self.m_init, self.m_anchors, q, eta,
                                        direction == UPPER)
        return float(vals.mean())

    def lower_envelope_at_anchors(self, q_lower: np.ndarray, eta: float) -> np.ndarray:
        return _kernels.reduce_envelope(self.m_anchors, self.m_anchors, q_lower,
                                        eta, False)


def run(dataset: TransitionDataset, target: Policy, cfg: LviConfig,
        init_points, metric: Metric | None = None) -> BoundsReport:
    """Full pipeline: freeze, iterate both chains, diagnose, escalate.

    ``init_points`` are state-action pairs drawn from the initial
    distribution with target-policy actions; they are fixed for the whole
    run (including escalations) so traces stay comparable.  Raises
    EtaExhausted, with the report attached, when the crossing diagnosis still
    rejects after the configured escalations.
    """
    cfg.validate()
    metric = metric or EuclideanMetric()
    init_pts = metric.check_block(as_point_block(init_points))
    if init_pts.shape[0] == 0:
        raise EmptyInput("run needs at least one initial point")
    fb = freeze(dataset, target, cfg.action_samples, cfg.gamma, cfg.seed)
    if init_pts.shape[1] != fb.dim:
        raise DimensionMismatch("initial points and dataset dimensions differ")
    n = fb.n
    tol = cfg.tol if cfg.tol is not None else 1e-6 * (1.0 + float(np.abs(fb.rewards).max()))

    probes = default_probes(np.vstack([fb.anchors, init_pts]), seed=cfg.seed)
    eps_cover = covering_radius(fb.anchors, probes, metric)

    state = _RunState(fb, metric, init_pts)
    mean_d = mean_next_distance(fb, metric)
    subsize = cfg.subsample_size if 0 < cfg.subsample_size < n else 0
    diag_every = 1 if n <= _DIAG_EVERY_N else 10

    def config_echo(eta_used: float) -> dict:
        echo = {
            "gamma": cfg.gamma,
            "eta": cfg.eta,
            "eta_used": eta_used,
            "max_iters": cfg.max_iters,
            "tol": tol,
            "subsample_size": subsize,
            "action_samples": fb.action_samples,
            "init_count": int(init_pts.shape[0]),
            "escalation_factor": cfg.escalation_factor,
            "max_escalations": cfg.max_escalations,
            "seed": cfg.seed,
            "n_rows": n,
            "metric": metric.describe(),
            "policy": target.describe(),
            "policy_stochastic": fb.policy_stochastic,
            "diagnose_every": diag_every,
        }
        if isinstance(metric, FeatureTableMetric):
            lookups = np.vstack([fb.anchors, fb.flat_next_points(), init_pts])
            echo["metric"]["fallback_hits"] = metric.fallback_hits(lookups)
        return echo

    eta = float(cfg.eta)
    report = None
    for escalation in range(cfg.max_escalations + 1):
        qu = _init_values(fb, eta, mean_d, UPPER)
        ql = _init_values(fb, eta, mean_d, LOWER)
        trace: list[TracePoint] = []
        iters = {UPPER: 0, LOWER: 0}
        done = {UPPER: False, LOWER: False}
        rejected = False
        for t in range(1, cfg.max_iters + 1):
            if subsize:
                rng = np.random.default_rng([int(cfg.seed), _TAG_SUBSAMPLE, t])
                subset = np.sort(rng.choice(n, size=subsize, replace=False))
            else:
                subset = None
            du = dl = 0.0
            if not done[UPPER]:
                qu, du = state.clamped_update(qu, eta, UPPER, subset)
                iters[UPPER] = t
                done[UPPER] = du <= tol
            if not done[LOWER]:
                ql, dl = state.clamped_update(ql, eta, LOWER, subset)
                iters[LOWER] = t
                done[LOWER] = dl <= tol
            trace.append(TracePoint(
                t,
                state.return_estimate(qu, eta, UPPER),
                state.return_estimate(ql, eta, LOWER),
                max(du, dl),
            ))
            finishing = (done[UPPER] and done[LOWER]) or t == cfg.max_iters
            if finishing or t % diag_every == 0:
                lower_env = state.lower_envelope_at_anchors(ql, eta)
                if crossing_indices(qu, lower_env).size:
                    rejected = True
                    break
            if done[UPPER] and done[LOWER]:
                break
        diagnosis = "exhausted" if rejected else ("passed" if escalation == 0 else "escalated")
        report = BoundsReport(
            lower=trace[-1].r_lower,
            upper=trace[-1].r_upper,
            eta_used=eta,
            escalations=escalation,
            iterations_upper=iters[UPPER],
            iterations_lower=iters[LOWER],
            trace=tuple(trace),
            diagnosis=diagnosis,
            covering_radius=eps_cover,
            gap_bound=2.0 * eta * eps_cover / (1.0 - cfg.gamma),
            config=config_echo(eta),
            seed=cfg.seed,
        )
        if not rejected:
            return report
        if escalation < cfg.max_escalations:
            eta *= cfg.escalation_factor
    raise EtaExhausted(
        f"diagnosis still rejects after {cfg.max_escalations} escalations "
        f"(final eta {eta:.6g})",
        report=report,
    )
