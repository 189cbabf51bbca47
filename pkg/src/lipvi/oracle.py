"""Brute-force references for tiny instances.

Independent of the envelope-iteration code path: the bound programs are
restated as dense linear programs over the finite point set (any feasible
finite labelling extends to a full slope-bounded function, so the restriction
is exact) and solved with a small two-phase simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bellman import FrozenBellman
from .envelope import LOWER, UPPER, EnvelopeState
from .errors import (DimensionMismatch, EmptyInput, Infeasible,
                     InstanceTooLarge, LipviError, Unbounded)
from .metric import DUPLICATE_EPS, Metric, as_point_block, distance

MAX_LP_POINTS = 60

_SIMPLEX_TOL = 1e-9
_MAX_PIVOTS = 200_000


@dataclass(frozen=True)
class LpResult:
    status: str               # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    value: float | None


def _price_out(obj: np.ndarray, tableau: np.ndarray, basis: np.ndarray) -> None:
    for row, col in enumerate(basis):
        if abs(obj[col]) > 0.0:
            obj -= obj[col] * tableau[row]


def _pivot(tableau: np.ndarray, obj: np.ndarray, basis: np.ndarray,
           row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    obj -= obj[col] * tableau[row]
    basis[row] = col


def _bland_iterate(tableau: np.ndarray, obj: np.ndarray, basis: np.ndarray,
                   allowed: np.ndarray) -> str:
    """Maximize with Bland's rule; entering and leaving ties both take the
    smallest index, which rules out cycling."""
    pivots = 0
    while True:
        candidates = np.nonzero(allowed & (obj[:-1] > _SIMPLEX_TOL))[0]
        if candidates.size == 0:
            return "optimal"
        col = int(candidates[0])
        column = tableau[:, col]
        rows = np.nonzero(column > _SIMPLEX_TOL)[0]
        if rows.size == 0:
            return "unbounded"
        ratios = tableau[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + _SIMPLEX_TOL * (1.0 + abs(best))]
        row = int(tied[np.argmin(basis[tied])])
        _pivot(tableau, obj, basis, row, col)
        pivots += 1
        if pivots > _MAX_PIVOTS:
            raise LipviError("simplex exceeded the pivot budget")


def solve_max(c, a_ub=None, b_ub=None, a_eq=None, b_eq=None) -> LpResult:
    """maximize c.x subject to a_ub.x <= b_ub and a_eq.x == b_eq, x free.

    Free variables are split into positive and negative parts; feasibility is
    established by a phase-1 artificial objective before the real objective
    runs.  Dense and deliberately small-scale.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.shape[0]
    a_ub = np.zeros((0, n)) if a_ub is None else np.atleast_2d(np.asarray(a_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    a_eq = np.zeros((0, n)) if a_eq is None else np.atleast_2d(np.asarray(a_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    m_ub, m_eq = a_ub.shape[0], a_eq.shape[0]
    m = m_ub + m_eq

    split = np.hstack([np.vstack([a_ub, a_eq]), -np.vstack([a_ub, a_eq])])
    rhs = np.concatenate([b_ub, b_eq])
    slack_cols = 2 * n + np.arange(m_ub)
    art_needed = []
    tableau = np.zeros((m, 2 * n + m_ub + 1))
    tableau[:, : 2 * n] = split
    tableau[:m_ub, 2 * n: 2 * n + m_ub] = np.eye(m_ub)
    tableau[:, -1] = rhs
    negative = tableau[:, -1] < 0
    tableau[negative] *= -1.0

    basis = np.full(m, -1, dtype=int)
    for i in range(m_ub):
        if not negative[i]:
            basis[i] = slack_cols[i]
        else:
            art_needed.append(i)
    art_needed.extend(range(m_ub, m))

    n_art = len(art_needed)
    if n_art:
        art_block = np.zeros((m, n_art))
        for k, i in enumerate(art_needed):
            art_block[i, k] = 1.0
            basis[i] = 2 * n + m_ub + k
        tableau = np.hstack([tableau[:, :-1], art_block, tableau[:, -1:]])
    ncols = tableau.shape[1] - 1
    art_start = 2 * n + m_ub

    if n_art:
        obj1 = np.zeros(ncols + 1)
        obj1[art_start:ncols] = -1.0
        _price_out(obj1, tableau, basis)
        allowed = np.ones(ncols, dtype=bool)
        status = _bland_iterate(tableau, obj1, basis, allowed)
        if status != "optimal" or -obj1[-1] < -_SIMPLEX_TOL:
            return LpResult("infeasible", None, None)
        keep = np.ones(m, dtype=bool)
        for row in range(m):
            if basis[row] >= art_start:
                pivot_col = next(
                    (j for j in range(art_start)
                     if abs(tableau[row, j]) > _SIMPLEX_TOL), None)
                if pivot_col is None:
                    keep[row] = False
                else:
                    obj_dummy = np.zeros(ncols + 1)
                    _pivot(tableau, obj_dummy, basis, row, pivot_col)
        tableau = tableau[keep]
        basis = basis[keep]
        m = tableau.shape[0]

    obj2 = np.zeros(ncols + 1)
    obj2[:n] = c
    obj2[n: 2 * n] = -c
    _price_out(obj2, tableau, basis)
    allowed = np.zeros(ncols, dtype=bool)
    allowed[:art_start] = True
    status = _bland_iterate(tableau, obj2, basis, allowed)
    if status == "unbounded":
        return LpResult("unbounded", None, None)
    full = np.zeros(ncols)
    full[basis] = tableau[:, -1]
    x = full[:n] - full[n: 2 * n]
    return LpResult("optimal", x, float(c @ x))


# ---------------------------------------------------------------------------
# Bound and feasibility programs over the finite point set
# ---------------------------------------------------------------------------

def _dedup_points(blocks: list[np.ndarray], metric: Metric):
    """Merge points within DUPLICATE_EPS; returns the table and index maps."""
    kept: list[np.ndarray] = []
    maps = []
    for block in blocks:
        idx = np.empty(block.shape[0], dtype=int)
        for i, p in enumerate(block):
            match = None
            for j, kp in enumerate(kept):
                if distance(metric, p, kp) <= DUPLICATE_EPS:
                    match = j
                    break
            if match is None:
                kept.append(p)
                match = len(kept) - 1
            idx[i] = match
        maps.append(idx)
    return np.vstack(kept), maps


def _pair_constraints(points: np.ndarray, eta: float, metric: Metric):
    p = points.shape[0]
    d = metric.pairwise(points, points)
    rows, rhs = [], []
    for i in range(p):
        for j in range(p):
            if i == j:
                continue
            row = np.zeros(p)
            row[i] = 1.0
            row[j] = -1.0
            rows.append(row)
            rhs.append(eta * d[i, j])
    return np.vstack(rows), np.asarray(rhs)


def _bellman_rows(fb: FrozenBellman, anchor_idx, next_idx, p: int):
    rows = np.zeros((fb.n, p))
    for i in range(fb.n):
        rows[i, anchor_idx[i]] += 1.0
        for k in range(fb.next_points.shape[1]):
            rows[i, next_idx[i, k]] -= fb.gamma * fb.weights[i, k]
    return rows


def _lp_points(fb: FrozenBellman, anchors, init_points, metric: Metric):
    anchor_block = as_point_block(anchors)
    if anchor_block.shape != fb.anchors.shape or not np.array_equal(anchor_block, fb.anchors):
        raise DimensionMismatch("anchors must match the frozen operator's rows")
    init_block = as_point_block(init_points) if init_points is not None else np.zeros((0, fb.dim))
    blocks = [anchor_block, fb.flat_next_points(), init_block]
    points, (anchor_idx, next_flat_idx, init_idx) = _dedup_points(blocks, metric)
    if points.shape[0] > MAX_LP_POINTS:
        raise InstanceTooLarge(
            f"{points.shape[0]} distinct points exceed the {MAX_LP_POINTS}-point cap"
        )
    next_idx = next_flat_idx.reshape(fb.n, fb.next_points.shape[1])
    return points, anchor_idx, next_idx, init_idx


def lp_bound(fb: FrozenBellman, anchors, init_points, eta: float,
             metric: Metric, direction: str) -> float:
    """Optimum of the bound program restated over the finite point set.

    Variables are function values at every distinct point; ordered pairwise
    rows encode the slope budget, per-row backup rows the logged-data side,
    and the objective is the mean over the initial points.
    """
    if direction not in (UPPER, LOWER):
        raise DimensionMismatch(f"unknown direction {direction!r}")
    init_block = as_point_block(init_points)
    if init_block.shape[0] == 0:
        raise EmptyInput("lp_bound needs at least one initial point")
    points, anchor_idx, next_idx, init_idx = _lp_points(fb, anchors, init_block, metric)
    p = points.shape[0]
    a_pair, b_pair = _pair_constraints(points, eta, metric)
    bell = _bellman_rows(fb, anchor_idx, next_idx, p)
    if direction == UPPER:
        a_ub = np.vstack([a_pair, bell])
        b_ub = np.concatenate([b_pair, fb.rewards])
    else:
        a_ub = np.vstack([a_pair, -bell])
        b_ub = np.concatenate([b_pair, -fb.rewards])
    c = np.zeros(p)
    for j in init_idx:
        c[j] += 1.0 / init_idx.shape[0]
    if direction == LOWER:
        c = -c
    result = solve_max(c, a_ub, b_ub)
    if result.status == "infeasible":
        raise Infeasible("the bound program admits no feasible labelling")
    if result.status == "unbounded":
        raise Unbounded("an initial point is not slope-connected to any anchor")
    return result.value if direction == UPPER else -result.value


def bellman_consistency(fb: FrozenBellman, eta: float, metric: Metric) -> bool:
    """Whether some labelling meets every backup equality within the slope budget.

    False certifies that no function with this slope budget satisfies all the
    logged backups, which must coincide with a crossing-diagnosis rejection
    on the same frozen instance.
    """
    points, anchor_idx, next_idx, _ = _lp_points(fb, fb.anchors, None, metric)
    p = points.shape[0]
    a_pair, b_pair = _pair_constraints(points, eta, metric)
    bell = _bellman_rows(fb, anchor_idx, next_idx, p)
    result = solve_max(np.zeros(p), a_pair, b_pair, bell, fb.rewards)
    return result.status == "optimal"


def grid_envelope_optimality(env_state: EnvelopeState, probe_grid) -> float:
    """Largest one-sided gap between grid-built extremal cones and the envelope.

    At each probe the best cap-respecting (floor-respecting) cone value is
    rebuilt with scalar arithmetic from the state's declared anchors and
    values; a sound envelope is never beaten, so the result stays at or
    below zero-plus-rounding.
    """
    probes = as_point_block(probe_grid)
    anchors = [env_state.anchors[j] for j in range(env_state.n)]
    labels = [float(v) for v in env_state.q]
    eta = env_state.eta
    worst = -math.inf
    for z in probes:
        if env_state.direction == UPPER:
            cone = min(labels[j] + eta * distance(env_state.metric, z, anchors[j])
                       for j in range(env_state.n))
            gap = cone - env_state.eval(z)
        else:
            cone = max(labels[j] - eta * distance(env_state.metric, z, anchors[j])
                       for j in range(env_state.n))
            gap = env_state.eval(z) - cone
        worst = max(worst, gap)
    return worst
