"""Scenario presets, parameter sweeps and the detector/oracle benchmarks."""
from __future__ import annotations

import csv
import logging
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from src.ade import DEFAULT_DETECTION_NORM, change_statistic
from src.config import PRESET_BUILDERS, ExperimentConfig, effective_e_w_values, validate_config
from src.controller import ControllerConfig, derive_params
from src.dual import (DualSolverParams, deterministic_optimum, grid_oracle, optimality_check,
                      oracle_grid_max, solve_multiplier)
from src.errors import CellFailure, ParameterError
from src.model import two_queue_distribution
from src.output_format import (PLOT_COLUMNS, SWEEP_COLUMNS, VECTOR_SEPARATOR, format_number,
                               format_vector)
from src.prediction import PredictionProfile
from src.resource_monitor import ResourceMonitor
from src.simulator import run_simulation, write_metrics_json, write_trace_csv
from src.state_process import parse_two_queue_schedule

logger = logging.getLogger(__name__)

SWEEP_V_VALUES = [20, 50, 100, 150, 200, 300]
MISSED = "miss"


def scenario_stationary():
    """Two-queue preset with constant arrival rates p1=0.3, p2=0.6."""
    return ExperimentConfig(
        scenario="stationary",
        schedule="0:0.3:0.6",
        horizon=50000,
        controllers=["plc", "bp"],
        v_values=list(SWEEP_V_VALUES),
        e_w_values=[0.0, 0.04],
        out_dir=os.path.join("results", "stationary"),
    )


def scenario_change():
    """Rates (0.2, 0.4) switching to (0.3, 0.6) halfway through a 5000-slot run at V=100."""
    return ExperimentConfig(
        scenario="change",
        schedule="0:0.2:0.4,2500:0.3:0.6",
        horizon=5000,
        controllers=["plc", "bp"],
        v_values=[100],
        e_w_values=[0.0, 0.04],
        out_dir=os.path.join("results", "change"),
    )


SCENARIOS = {
    "stationary": scenario_stationary,
    "change": scenario_change,
}


class Cell(NamedTuple):
    controller: str
    V: float
    e_w: float
    seed: int


@dataclass
class SweepResult:
    metrics: list
    failures: list
    csv_path: str
    plot_path: str

    @property
    def ok(self):
        return not self.failures


def build_model(config):
    return PRESET_BUILDERS[config.preset]()


def build_schedule(config):
    return parse_two_queue_schedule(config.schedule, config.horizon)


def sweep_cells(config):
    """Every (controller, V, e_w, seed) combination, sorted; BP ignores e_w."""
    cells = []
    for kind in config.controllers:
        e_values = effective_e_w_values(config) if kind == "plc" else [0.0]
        for V in config.v_values:
            for e_w in e_values:
                for seed in config.seeds:
                    cells.append(Cell(kind, float(V), float(e_w), int(seed)))
    return sorted(set(cells))


def controller_config_for(config, cell: Cell):
    plc = None
    if cell.controller == "plc":
        plc = derive_params(cell.V, config.c, config.w, config.eps_d, cell.e_w, config.theta_mode, config.delta_sim)
    return ControllerConfig(kind=cell.controller, V=cell.V, plc=plc, dual_iters=config.dual_iters,
                            warm_iters=config.warm_iters, detection_norm=config.detection_norm)


def profile_for(config, e_w):
    if config.error_curve:
        return PredictionProfile(tuple(config.error_curve))
    return PredictionProfile.constant(e_w, config.w)


def reference_multiplier(model, schedule, V, dual_iters=10000):
    """gamma* of the law active at the end of the schedule, the target of the convergence time."""
    params = DualSolverParams(V=V, max_iters=dual_iters)
    return solve_multiplier(model, schedule.distributions[-1], params).multiplier


def _cell_name(cell: Cell):
    return f"{cell.controller}_V{format_number(cell.V)}_e{format_number(cell.e_w)}_s{cell.seed}"


def run_cell(config, cell: Cell, gamma_star=None):
    """Simulate one cell and write its metrics (and optionally its trace).

    Raises:
        CellFailure: wrapping whatever went wrong inside the cell
    """
    try:
        model = build_model(config)
        schedule = build_schedule(config)
        if gamma_star is None:
            gamma_star = reference_multiplier(model, schedule, cell.V, config.dual_iters)
        changes = schedule.change_points
        result = run_simulation(
            model, schedule, controller_config_for(config, cell), profile_for(config, cell.e_w), cell.seed,
            T=config.horizon, gamma_star=gamma_star, zeta=config.zeta,
            zeta_start=changes[-1] if changes else 0,
        )
        name = _cell_name(cell)
        write_metrics_json(result.metrics, os.path.join(config.out_dir, "runs", f"{name}.json"))
        if config.export_traces:
            write_trace_csv(result.trace, os.path.join(config.out_dir, "traces", f"{name}.csv"))
        return result.metrics
    except Exception as e:
        raise CellFailure(f"cell {cell} failed: {e}") from e


def _run_cell_job(config, cell, gamma_star):
    try:
        return cell, run_cell(config, cell, gamma_star), None
    except CellFailure as e:
        logger.exception(f"[ERROR] {e}")
        return cell, None, str(e)


def sweep_row(metrics):
    delays = VECTOR_SEPARATOR.join(MISSED if d is None else str(d) for d in metrics.detection_delays)
    return [
        metrics.controller, format_number(metrics.V), format_number(metrics.e_w), str(metrics.seed),
        format_number(metrics.avg_cost), format_number(metrics.avg_backlog),
        format_number(metrics.avg_delay), format_number(metrics.trimmed_delay),
        format_number(metrics.drop_rate), format_number(metrics.T_zeta), delays,
    ]


def plot_rows(metrics_list):
    """Per (controller, e_w, V) means and ranges for utility-vs-V and delay-vs-V curves."""
    groups = defaultdict(list)
    for m in metrics_list:
        groups[(m.controller, m.e_w, m.V)].append(m)
    rows = []
    for (controller, e_w, V), runs in sorted(groups.items()):
        cost = np.array([m.avg_cost for m in runs])
        trimmed = np.array([m.trimmed_delay for m in runs])
        rows.append([
            controller, format_number(e_w), format_number(V),
            format_number(cost.mean()), format_number(cost.min()), format_number(cost.max()),
            format_number(np.mean([m.avg_backlog for m in runs])),
            format_number(trimmed.mean()), format_number(trimmed.min()), format_number(trimmed.max()),
            format_number(np.mean([m.avg_delay for m in runs])),
            format_number(np.mean([m.drop_rate for m in runs])),
            str(len(runs)),
        ])
    return rows


def _write_csv(path, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def run_sweep(config, shutdown_event=None, monitor_interval=30):
    """Run every cell of the config, in parallel when workers > 1.

    A failing cell is logged and reported in the result; the rest still run.

    Returns:
        SweepResult with metrics sorted by (controller, V, e_w, seed)
    """
    validate_config(config)
    cells = sweep_cells(config)
    model = build_model(config)
    schedule = build_schedule(config)
    gamma_stars = {V: reference_multiplier(model, schedule, V, config.dual_iters) for V in {c.V for c in cells}}
    logger.info(f"[SWEEP] {len(cells)} cells for scenario {config.scenario} with {config.workers} worker(s)")

    done, failures = [], []
    with ResourceMonitor(check_interval=monitor_interval, shutdown_event=shutdown_event):
        if config.workers == 1:
            for cell in cells:
                if shutdown_event is not None and shutdown_event.is_set():
                    failures.append((cell, "interrupted"))
                    continue
                _, metrics, error = _run_cell_job(config, cell, gamma_stars[cell.V])
                if error is None:
                    done.append(metrics)
                else:
                    failures.append((cell, error))
        else:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                futures = [pool.submit(_run_cell_job, config, cell, gamma_stars[cell.V]) for cell in cells]
                for future in as_completed(futures):
                    cell, metrics, error = future.result()
                    if error is None:
                        done.append(metrics)
                        logger.debug(f"[SWEEP] Finished {cell}")
                    else:
                        failures.append((cell, error))

    done.sort(key=lambda m: (m.controller, m.V, m.e_w, m.seed))
    failures.sort()
    csv_path = os.path.join(config.out_dir, "sweep.csv")
    plot_path = os.path.join(config.out_dir, "plot_data.csv")
    _write_csv(csv_path, SWEEP_COLUMNS, [sweep_row(m) for m in done])
    _write_csv(plot_path, PLOT_COLUMNS, plot_rows(done))
    if failures:
        logger.error(f"[ERROR] {len(failures)} of {len(cells)} cells failed")
    else:
        logger.info(f"[OK] Sweep finished: {len(done)} cells written to {csv_path}")
    return SweepResult(metrics=done, failures=failures, csv_path=csv_path, plot_path=plot_path)


@dataclass(frozen=True)
class DetectBenchResult:
    trials: int
    d: int
    window_m: int
    detection_rate: float
    false_positive_rate: float
    norm: str


def detect_bench(pi_before, pi_after, d, w, eps_d, trials=2000, seed=0, norm=DEFAULT_DETECTION_NORM, window_m=None):
    """Monte Carlo of the window comparison behind change detection.

    W_m holds window_m (default d) samples of pi_before. For the detection
    trials W_d holds d-w-1 samples of pi_after plus w+1 exact predictions
    of pi_after; for the false-positive trials everything is pi_before.
    """
    pi_before = np.asarray(pi_before, dtype=float)
    pi_after = np.asarray(pi_after, dtype=float)
    window_m = d if window_m is None else int(window_m)
    observed = d - w - 1
    if observed < 0:
        raise ParameterError(f"d={d} leaves no room for w+1={w + 1} predictions")
    rng = np.random.default_rng(seed)

    def statistic(pi_m_law, pi_d_law):
        pi_m = rng.multinomial(window_m, pi_m_law, size=trials) / window_m
        counts = rng.multinomial(observed, pi_d_law, size=trials)
        pi_d = (counts + (w + 1) * pi_d_law) / d
        return change_statistic(pi_d, pi_m, norm)

    detected = float(np.mean(statistic(pi_before, pi_after) > eps_d))
    false_alarm = float(np.mean(statistic(pi_before, pi_before) > eps_d))
    logger.info(f"[ADE] Detection bench d={d}: detection {detected:.4f}, false positives {false_alarm:.4f}")
    return DetectBenchResult(trials, d, window_m, detected, false_alarm, norm)


def detect_bench_from_config(config, trials=2000, seed=0):
    """Benchmark the config's detector on the (0.2, 0.4) -> (0.3, 0.6) two-queue laws."""
    params = derive_params(max(config.v_values), config.c, config.w, config.eps_d, 0.0, config.theta_mode,
                           config.delta_sim)
    return detect_bench(two_queue_distribution(0.2, 0.4), two_queue_distribution(0.3, 0.6), params.d, config.w,
                        config.eps_d, trials=trials, seed=seed, norm=config.detection_norm)


@dataclass(frozen=True)
class OracleRow:
    V: float
    solver_gamma: tuple
    grid_gamma: tuple
    lp_gamma: Optional[tuple]
    linf_gap: float
    capped: bool
    plateau_points: int
    g_star: float
    g_star_over_v: float
    lp_cost: float
    optimal_cost_is: str


ORACLE_COLUMNS = ("V", "solver_gamma", "grid_gamma", "lp_gamma", "linf_gap", "capped", "plateau_points",
                  "g_star", "g_star_over_v", "lp_cost", "optimal_cost_is")


def oracle_report(config, v_values=None, grid_step=0.25, write=True):
    """Compare the subgradient solver with the grid oracle and the LP for each V.

    Uses the law active at the end of the config's schedule. The grid spans
    [0, 2V], widened to 1.25 times the LP multiplier when that lies beyond 2V.
    """
    model = build_model(config)
    schedule = build_schedule(config)
    pi = schedule.distributions[-1]
    rows = []
    for V in (v_values or config.v_values):
        params = DualSolverParams(V=float(V), max_iters=config.dual_iters)
        solved = solve_multiplier(model, pi, params)
        lp = deterministic_optimum(model, pi, float(V))
        grid = grid_oracle(model, pi, float(V), oracle_grid_max(V, lp.multiplier), grid_step)
        check = optimality_check(model, pi, params)
        gap = float(np.max(np.abs(solved.multiplier.as_array() - grid.multiplier.as_array())))
        rows.append(OracleRow(
            V=float(V), solver_gamma=solved.multiplier.gamma, grid_gamma=grid.multiplier.gamma,
            lp_gamma=lp.multiplier.gamma if lp.multiplier is not None else None,
            linf_gap=gap, capped=solved.capped, plateau_points=grid.plateau_points,
            g_star=check.g_star, g_star_over_v=check.g_star_over_v, lp_cost=check.lp_cost,
            optimal_cost_is=check.matches,
        ))
        logger.info(f"[DUAL] V={V}: solver {solved.multiplier.gamma}, grid {grid.multiplier.gamma}, gap {gap:.4f}")
    if write:
        _write_csv(os.path.join(config.out_dir, "oracle.csv"), ORACLE_COLUMNS, [
            [format_number(r.V), format_vector(r.solver_gamma), format_vector(r.grid_gamma),
             "" if r.lp_gamma is None else format_vector(r.lp_gamma), format_number(r.linf_gap),
             format_number(r.capped), str(r.plateau_points), format_number(r.g_star),
             format_number(r.g_star_over_v), format_number(r.lp_cost), r.optimal_cost_is]
            for r in rows
        ])
    return rows


def cell_for(controller, V, e_w, seed):
    return Cell(controller, float(V), float(e_w) if controller == "plc" else 0.0, int(seed))