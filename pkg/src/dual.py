"""Dual of the deterministic problem and solvers for its multiplier.

For a distribution pi over states the deterministic problem is

    min  V * sum_i pi_i f(s_i, x_i)   s.t.  sum_i pi_i [A_j - mu_j](s_i, x_i) <= 0  for all j

with per-state action mixtures. Its dual function decomposes by state:
g(gamma) = sum_i pi_i g_i(gamma), g_i(gamma) = min_x V f + gamma . (A - mu).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from src.errors import DimensionError, ParameterError
from src.model import SystemModel, as_distribution

logger = logging.getLogger(__name__)

MAX_ORACLE_QUEUES = 3
_GRID_CHUNK = 20000


@dataclass(frozen=True)
class Multiplier:
    """Nonnegative Lagrange multiplier, one entry per queue."""

    gamma: tuple

    def __post_init__(self):
        gamma = tuple(float(g) for g in self.gamma)
        if any(g < 0 or math.isnan(g) for g in gamma):
            raise ParameterError(f"multiplier entries must be nonnegative, got {gamma}")
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def zeros(cls, r):
        return cls((0.0,) * r)

    def as_array(self):
        return np.asarray(self.gamma, dtype=float)

    def __len__(self):
        return len(self.gamma)


def multiplier_cap(V):
    """V log V, the value used when the dual is unbounded."""
    return V * math.log(V)


@dataclass(frozen=True)
class DualSolverParams:
    """Projected subgradient settings.

    Step n is alpha_0 / sqrt(n) with alpha_0 = step_scale * V. A full solve,
    cold or warm, runs the schedule from n = 1 for at most max_iters steps.
    Tracking resumes it at n = max_iters for at most warm_iters steps.
    """

    V: float
    max_iters: int = 10000
    warm_iters: int = 100
    step_scale: float = 1.0
    tolerance: float = 1e-4
    check_every: int = 100
    unbounded_patience: int = 100

    def __post_init__(self):
        if not self.V >= 1:
            raise ParameterError(f"V must be at least 1, got {self.V}")
        if self.max_iters < 1 or self.warm_iters < 1:
            raise ParameterError("iteration budgets must be positive")
        if not self.step_scale > 0:
            raise ParameterError("step_scale must be positive")

    @property
    def cap(self):
        return multiplier_cap(self.V)


@dataclass(frozen=True)
class SolveResult:
    multiplier: Multiplier
    value: float
    capped: bool
    iterations: int
    converged: bool


@dataclass(frozen=True)
class OracleResult:
    multiplier: Multiplier
    value: float
    plateau_points: int


@dataclass(frozen=True)
class SlackResult:
    feasible: bool
    slack: float
    method: str


@dataclass(frozen=True)
class LpOptimum:
    feasible: bool
    cost: float
    multiplier: Optional[Multiplier]


@dataclass(frozen=True)
class OptimalityCheck:
    g_star: float
    g_star_over_v: float
    lp_cost: float
    matches: str


def _gamma_array(model: SystemModel, gamma):
    arr = gamma.as_array() if isinstance(gamma, Multiplier) else np.asarray(gamma, dtype=float)
    if arr.shape != (model.num_queues,):
        raise DimensionError(f"multiplier has shape {arr.shape}, expected ({model.num_queues},)")
    return arr


def _state_idx(model: SystemModel, state):
    if isinstance(state, (int, np.integer)):
        if not 0 <= state < model.num_states:
            raise ParameterError(f"state index {state} is outside 0..{model.num_states - 1}")
        return int(state)
    return model.state_index(state)


def lagrangian_table(model: SystemModel, gamma, V):
    """V f(s_i, x) + gamma . (A - mu)(s_i, x) for every state and action."""
    return V * model.cost_table + model.drift_table @ gamma


def per_state_dual(model: SystemModel, state, gamma, V):
    """Single-state dual g_i(gamma) and its minimising action index.

    Ties go to the lowest action index.
    """
    i = _state_idx(model, state)
    g = _gamma_array(model, gamma)
    row = V * model.cost_table[i] + model.drift_table[i] @ g
    k = int(np.argmin(row))
    return float(row[k]), k


def dual_value(model: SystemModel, gamma, pi, V):
    """g(gamma, pi) = sum_i pi_i g_i(gamma)."""
    pi = as_distribution(pi, model.num_states)
    g = _gamma_array(model, gamma)
    return float(pi @ lagrangian_table(model, g, V).min(axis=1))


def expected_drift(model: SystemModel, gamma, pi, V):
    """Subgradient of g at gamma: expected drift under the per-state argmins."""
    pi = np.asarray(pi, dtype=float)
    g = _gamma_array(model, gamma)
    choice = lagrangian_table(model, g, V).argmin(axis=1)
    drift = model.drift_table[np.arange(model.num_states), choice]
    return pi @ drift


def solve_multiplier(model: SystemModel, pi, params: DualSolverParams, warm_start: Optional[Multiplier] = None):
    """Maximise g(., pi) over gamma >= 0 by projected subgradient ascent.

    Args:
        model: SystemModel
        pi: Distribution over the model's states
        params: DualSolverParams
        warm_start: Previous multiplier to start from, or None

    Returns:
        SolveResult. When the iterates run past V log V while the drift
        keeps pushing outward, the multiplier is V log V in every entry
        and capped is set.
    """
    if warm_start is None:
        gamma = np.zeros(model.num_queues)
    else:
        gamma = np.minimum(_gamma_array(model, warm_start), max(params.cap, 0.0))
    return _ascend(model, pi, params, gamma, 1, params.max_iters)


def track_multiplier(model: SystemModel, pi, params: DualSolverParams, start: Multiplier):
    """A few small steps from start, for a pi that moved only slightly.

    The schedule resumes at n = max_iters and runs at most warm_iters steps.
    """
    gamma = np.minimum(_gamma_array(model, start), max(params.cap, 0.0))
    return _ascend(model, pi, params, gamma, params.max_iters, params.warm_iters)


def _ascend(model: SystemModel, pi, params: DualSolverParams, gamma, first, budget):
    pi = as_distribution(pi, model.num_states)
    V = float(params.V)
    cap = params.cap
    r = model.num_queues
    vcost = V * model.cost_table
    drift_table = model.drift_table
    rows = np.arange(model.num_states)
    alpha0 = params.step_scale * V

    ceiling = max(cap, 0.0)
    avg = gamma.copy()
    count = 1
    best, best_value = gamma.copy(), -math.inf
    last_check = None
    outside = 0
    converged = False
    step = 0

    for n in range(first, first + budget):
        step = n - first + 1
        table = vcost + drift_table @ gamma
        choice = table.argmin(axis=1)
        value = float(pi @ table[rows, choice])
        if value > best_value:
            best, best_value = gamma.copy(), value
        sub = pi @ drift_table[rows, choice]

        if np.max(gamma) > cap and np.max(sub) > 0:
            outside += 1
            if outside >= params.unbounded_patience:
                logger.info(f"[DUAL] Multiplier unbounded after {step} iterations; capping at V log V = {cap:.4g}")
                capped = Multiplier((cap,) * r)
                return SolveResult(capped, dual_value(model, capped, pi, V), True, step, False)
        else:
            outside = 0

        gamma = np.maximum(gamma + (alpha0 / math.sqrt(n)) * sub, 0.0)
        # suffix averaging: restart the average at every power of two
        if step & (step - 1) == 0:
            avg, count, last_check = gamma.copy(), 1, None
        else:
            count += 1
            avg += (gamma - avg) / count

        if step % params.check_every == 0:
            if last_check is not None and np.max(np.abs(avg - last_check)) <= params.tolerance * max(1.0, V):
                converged = True
                break
            last_check = avg.copy()

    result = np.minimum(avg, ceiling)
    result_value = dual_value(model, result, pi, V)
    best = np.minimum(best, ceiling)
    best_value = dual_value(model, best, pi, V)
    if best_value > result_value + 1e-12:
        result, result_value = best, best_value
    logger.debug(f"[DUAL] Solved in {step} iterations (converged={converged}): gamma={result}")
    return SolveResult(Multiplier(tuple(result)), result_value, False, step, converged)


def oracle_grid_max(V, reference=None, margin=1.25):
    """Lattice extent for grid_oracle: 2V, widened to margin times the largest
    entry of a reference multiplier when that lies beyond 2V."""
    extent = 2.0 * float(V)
    if reference is not None:
        ref = reference.as_array() if isinstance(reference, Multiplier) else np.asarray(reference, dtype=float)
        extent = max(extent, margin * float(np.max(ref)))
    return extent


def grid_oracle(model: SystemModel, pi, V, grid_max, grid_step):
    """Exhaustive maximisation of g over the lattice [0, grid_max]^r.

    Returns the lexicographically lowest maximiser together with the
    number of lattice points tied with it (a flatness diagnostic).
    """
    r = model.num_queues
    if r > MAX_ORACLE_QUEUES:
        raise ParameterError(f"grid oracle supports at most {MAX_ORACLE_QUEUES} queues, model has {r}")
    if not (grid_step > 0 and grid_max >= 0):
        raise ParameterError("grid oracle needs grid_step > 0 and grid_max >= 0")
    pi = as_distribution(pi, model.num_states)
    axis = np.arange(int(math.floor(grid_max / grid_step + 1e-9)) + 1) * grid_step
    points = np.stack(np.meshgrid(*([axis] * r), indexing="ij"), axis=-1).reshape(-1, r)

    vcost = V * model.cost_table
    values = np.empty(points.shape[0])
    for lo in range(0, points.shape[0], _GRID_CHUNK):
        chunk = points[lo:lo + _GRID_CHUNK]
        table = vcost[None, :, :] + np.einsum("pr,mkr->pmk", chunk, model.drift_table)
        values[lo:lo + _GRID_CHUNK] = table.min(axis=2) @ pi

    best = int(np.argmax(values))
    plateau = int(np.count_nonzero(values >= values[best] - 1e-9))
    logger.debug(f"[DUAL] Grid oracle over {points.shape[0]} points: argmax {points[best]}, plateau {plateau}")
    return OracleResult(Multiplier(tuple(points[best])), float(values[best]), plateau)


def _mixture_lp(model: SystemModel, pi, objective):
    """Shared LP over per-state action mixtures.

    objective "slack": minimise the worst expected drift s.
    objective "cost": minimise expected cost subject to drift <= 0.
    """
    M, r = model.num_states, model.num_queues
    valid = np.argwhere(model.action_mask)
    n_mix = valid.shape[0]
    drift = model.drift_table[valid[:, 0], valid[:, 1]] * pi[valid[:, 0]][:, None]

    A_eq = np.zeros((M, n_mix))
    A_eq[valid[:, 0], np.arange(n_mix)] = 1.0
    b_eq = np.ones(M)

    if objective == "slack":
        c = np.zeros(n_mix + 1)
        c[-1] = 1.0
        A_ub = np.hstack([drift.T, -np.ones((r, 1))])
        A_eq = np.hstack([A_eq, np.zeros((M, 1))])
        bounds = [(0, None)] * n_mix + [(None, None)]
    else:
        c = model.cost_table[valid[:, 0], valid[:, 1]] * pi[valid[:, 0]]
        A_ub = drift.T
        bounds = [(0, None)] * n_mix
    return linprog(c, A_ub=A_ub, b_ub=np.zeros(r), A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")


def verify_slack(model: SystemModel, pi, samples=10000, rng=None, use_lp=True):
    """Search for per-state action mixtures with negative expected drift.

    Combines random mixtures, greedy per-state drift minimisation along
    random weightings of the queues, and (optionally) an exact LP.

    Returns:
        SlackResult with the best worst-queue drift found; feasible if < 0
    """
    pi = as_distribution(pi, model.num_states)
    rng = np.random.default_rng(0) if rng is None else rng
    M, r = model.num_states, model.num_queues
    mask = model.action_mask
    drift = model.drift_table
    best, method = math.inf, "none"

    # random mixtures, in batches to bound memory
    for lo in range(0, samples, 2000):
        n = min(2000, samples - lo)
        weights = rng.dirichlet(np.ones(model.max_actions), size=(n, M)) * mask[None]
        weights /= weights.sum(axis=2, keepdims=True)
        worst = np.einsum("smk,mkr,m->sr", weights, drift, pi).max(axis=1)
        if worst.min() < best:
            best, method = float(worst.min()), "random"

    # greedy pure policies for random queue weightings
    directions = np.vstack([np.eye(r), rng.dirichlet(np.ones(r), size=max(1, samples // 50))])
    for direction in directions:
        score = np.where(mask, drift @ direction, np.inf)
        choice = score.argmin(axis=1)
        worst = float((pi @ drift[np.arange(M), choice]).max())
        if worst < best:
            best, method = worst, "greedy"

    if use_lp:
        res = _mixture_lp(model, pi, "slack")
        if res.status == 0 and res.fun < best:
            best, method = float(res.fun), "lp"

    logger.debug(f"[DUAL] Slack search best drift {best:.6g} via {method}")
    return SlackResult(best < 0, best, method)


def deterministic_optimum(model: SystemModel, pi, V=1.0):
    """Solve the deterministic problem exactly as a linear program.

    Returns:
        LpOptimum with the optimal time-average cost (without the V factor)
        and the multiplier read from the drift constraints' marginals,
        scaled to the V-weighted problem.
    """
    pi = as_distribution(pi, model.num_states)
    res = _mixture_lp(model, pi, "cost")
    if res.status != 0:
        logger.info(f"[DUAL] Deterministic problem infeasible or failed: {res.message}")
        return LpOptimum(False, math.inf, None)
    gamma = np.maximum(-np.asarray(res.ineqlin.marginals) * V, 0.0)
    return LpOptimum(True, float(res.fun), Multiplier(tuple(gamma)))


def optimality_check(model: SystemModel, pi, params: DualSolverParams):
    """Compare g* against the optimal cost to settle whether f* = g* or g*/V."""
    solved = solve_multiplier(model, pi, params)
    lp = deterministic_optimum(model, pi, params.V)
    g_star = solved.value
    if lp.feasible:
        # the LP multiplier is exact; keep whichever dual value is larger
        g_star = max(g_star, dual_value(model, lp.multiplier, pi, params.V))
    over_v = g_star / params.V
    matches = "g*/V" if abs(over_v - lp.cost) <= abs(g_star - lp.cost) else "g*"
    logger.info(f"[DUAL] g*={g_star:.6g}, g*/V={over_v:.6g}, LP cost={lp.cost:.6g} -> optimal cost is {matches}")
    return OptimalityCheck(g_star, over_v, lp.cost, matches)
