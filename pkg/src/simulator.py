"""Discrete-time simulation of a controller on a piecewise-stationary system."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from src.ade import AverageDistributionEstimator
from src.controller import ControllerConfig, ade_params_for, build_controller
from src.errors import DimensionError, ParameterError
from src.ledger import FluidLedger, measure_delay
from src.model import SystemModel
from src.output_format import TRACE_COLUMNS, format_events, format_number, format_vector
from src.prediction import PredictionProfile, synthesize_prediction
from src.state_process import DistributionSchedule

logger = logging.getLogger(__name__)

EVENT_DETECTION = "detection"
EVENT_RESET = "reset"
EVENT_DROP = "drop"
EVENT_CAP = "cap"
RESTART_EVENTS = (EVENT_DETECTION, EVENT_RESET)


class TraceRecord(NamedTuple):
    """One slot. backlog is q(t+1); augmented is the Q(t) the action was chosen with."""

    slot: int
    state: int
    action: int
    cost: float
    arrivals: tuple
    services: tuple
    dropped: tuple
    backlog: tuple
    augmented: tuple
    gamma: tuple
    branch: str
    events: tuple


@dataclass(frozen=True)
class ChangeDetection:
    change_slot: int
    detected_slot: Optional[int]
    delay: Optional[int]

    @property
    def missed(self):
        return self.detected_slot is None


@dataclass(frozen=True)
class DetectionStats:
    changes: tuple
    false_positives: int


@dataclass
class Metrics:
    controller: str
    V: float
    e_w: float
    seed: int
    horizon: int
    avg_cost: float
    avg_backlog: float
    avg_delay: float
    trimmed_delay: float
    drop_rate: float
    arrived_mass: float
    served_mass: float
    dropped_mass: float
    drop_events: int
    T_zeta: Optional[float] = None
    detection_delays: tuple = ()
    missed_changes: int = 0
    false_positives: int = 0
    solves: int = 0
    capped_solves: int = 0
    delay_histogram: tuple = field(default=(), repr=False)


@dataclass
class SimulationResult:
    trace: list
    metrics: Metrics
    ledger: FluidLedger


def _rng_streams(seed):
    """Independent generators for the state process and the predictor."""
    states_seq, prediction_seq = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.default_rng(states_seq), np.random.default_rng(prediction_seq)


def _check_inputs(model, schedule, config, profile, T):
    if schedule.num_states != model.num_states:
        raise DimensionError(
            f"schedule covers {schedule.num_states} states but the model has {model.num_states}")
    if schedule.horizon < T:
        raise ParameterError(f"schedule horizon {schedule.horizon} is shorter than the run length {T}")
    if T < 1:
        raise ParameterError("run length must be positive")
    if config.kind == "plc" and config.plc.w != profile.w:
        raise ParameterError(f"PLC horizon w={config.plc.w} differs from the prediction profile's w={profile.w}")


def run_simulation(model: SystemModel, schedule: DistributionSchedule, config: ControllerConfig,
                   profile: PredictionProfile, seed, T=None, gamma_star=None, zeta=None, zeta_start=0):
    """Run one controller for T slots.

    Args:
        model: SystemModel
        schedule: DistributionSchedule with horizon >= T
        config: ControllerConfig (plc or bp)
        profile: PredictionProfile used by PLC's predictor
        seed: Integer seed; state draws and prediction noise use separate streams
        T: Number of slots, defaults to the schedule horizon
        gamma_star: Optional reference multiplier for the convergence time
        zeta: Radius for the convergence time
        zeta_start: Slot the convergence time is measured from

    Returns:
        SimulationResult with one TraceRecord per slot

    Raises:
        LedgerError: the ledger's mass leaves the queue recurrence
    """
    T = schedule.horizon if T is None else int(T)
    _check_inputs(model, schedule, config, profile, T)

    state_rng, prediction_rng = _rng_streams(seed)
    states = schedule.sample_states(state_rng, T)
    controller = build_controller(model, config)
    estimator = None
    if controller.uses_estimator:
        estimator = AverageDistributionEstimator(
            ade_params_for(config.plc, model.num_states, profile.error_curve, config.detection_norm))

    r = model.num_queues
    cost_table, arrival_table, service_table = model.cost_table, model.arrival_table, model.service_table
    ledger = FluidLedger(r, controller.service_order)
    q = np.zeros(r)
    no_drop = (0.0,) * r
    trace = []
    total_cost = 0.0
    total_backlog = 0.0
    drop_events = 0
    capped_solves = 0

    logger.debug(f"[SIM] Starting {config.label} run: V={config.V}, seed={seed}, T={T}")
    for t in range(T):
        s = int(states[t])
        events = []
        pi_a = ade_events = None
        branch = ""
        if estimator is not None:
            prediction = synthesize_prediction(schedule, t, profile, prediction_rng)
            ade_events = estimator.update(t, s, prediction)
            pi_a = estimator.estimate(t, prediction)
            branch = estimator.branch
            if ade_events.change_detected_step1:
                events.append(EVENT_DETECTION)
            if ade_events.reset_point_marked:
                events.append(EVENT_RESET)

        decision = controller.step(t, s, q, pi_a, ade_events)
        dropped = no_drop
        if decision.drop:
            dropped = tuple(ledger.drop_all(t))
            q = np.zeros(r)
            drop_events += 1
            events.append(EVENT_DROP)
        if decision.resolved and decision.capped:
            capped_solves += 1
            events.append(EVENT_CAP)

        k = decision.action
        arrivals = arrival_table[s, k]
        services = service_table[s, k]
        cost = float(cost_table[s, k])
        total_cost += cost
        total_backlog += float(q.sum())

        ledger.apply(t, arrivals, services)
        q = np.maximum(q - services + arrivals, 0.0)
        ledger.check(q, t)

        trace.append(TraceRecord(
            slot=t, state=s, action=k, cost=cost,
            arrivals=tuple(arrivals.tolist()), services=tuple(services.tolist()),
            dropped=dropped, backlog=tuple(q.tolist()),
            augmented=tuple(np.asarray(decision.augmented, dtype=float).tolist()),
            gamma=tuple(decision.gamma), branch=branch, events=tuple(events),
        ))

    ledger.check(q, T - 1, exact=True)

    delay = measure_delay(ledger, config.V)
    detection = detection_stats(trace, schedule, config.plc.w if config.plc is not None else 0)
    T_zeta = None
    if gamma_star is not None and zeta is not None:
        T_zeta = convergence_time(trace, gamma_star, zeta, start=zeta_start)

    metrics = Metrics(
        controller=config.kind,
        V=float(config.V),
        e_w=float(config.plc.e_w) if config.plc is not None else 0.0,
        seed=int(seed),
        horizon=T,
        avg_cost=total_cost / T,
        avg_backlog=total_backlog / T,
        avg_delay=delay.average,
        trimmed_delay=delay.trimmed,
        drop_rate=delay.dropped_mass / delay.arrived_mass if delay.arrived_mass > 0 else 0.0,
        arrived_mass=delay.arrived_mass,
        served_mass=delay.served_mass,
        dropped_mass=delay.dropped_mass,
        drop_events=drop_events,
        T_zeta=T_zeta,
        detection_delays=tuple(c.delay for c in detection.changes),
        missed_changes=sum(1 for c in detection.changes if c.missed),
        false_positives=detection.false_positives,
        solves=getattr(getattr(controller, "state", None), "solves", 0),
        capped_solves=capped_solves,
        delay_histogram=delay.histogram,
    )
    logger.debug(f"[SIM] Finished {config.label} run: cost={metrics.avg_cost:.4f}, backlog={metrics.avg_backlog:.2f}")
    return SimulationResult(trace=trace, metrics=metrics, ledger=ledger)


def convergence_time(trace, gamma_star, zeta, start=0):
    """Slots from start until ||Q(t) - gamma*||_2 <= zeta, or math.inf if it never happens."""
    g = gamma_star.as_array() if hasattr(gamma_star, "as_array") else np.asarray(gamma_star, dtype=float)
    records = [rec for rec in trace if rec.slot >= start]
    if not records:
        return math.inf
    Q = np.array([rec.augmented for rec in records], dtype=float)
    if Q.shape[1] != g.shape[0]:
        raise DimensionError("multiplier and queue vector differ in length")
    inside = np.flatnonzero(np.linalg.norm(Q - g, axis=1) <= zeta)
    if inside.size == 0:
        return math.inf
    return records[inside[0]].slot - start


def detection_stats(trace, schedule: DistributionSchedule, w):
    """Match restart events to schedule change points.

    An event at slot >= t_k - w and before t_{k+1} - w counts for change t_k
    (its offset from t_k may be negative by up to w, since the window
    restart lands w+1 slots after the event). The first such event is the
    detection; every other event is a false positive.
    """
    events = [rec.slot for rec in trace if any(e in RESTART_EVENTS for e in rec.events)]
    changes = schedule.change_points
    bounds = [c - w for c in changes] + [math.inf]
    matched = []
    used = set()
    for k, change in enumerate(changes):
        hits = [e for e in events if bounds[k] <= e < bounds[k + 1]]
        if hits:
            used.add(hits[0])
            matched.append(ChangeDetection(change, hits[0], hits[0] - change))
        else:
            matched.append(ChangeDetection(change, None, None))
    return DetectionStats(changes=tuple(matched), false_positives=len(events) - len(used))


def trace_row(rec: TraceRecord):
    return [
        str(rec.slot), str(rec.state), str(rec.action), format_number(rec.cost),
        format_vector(rec.arrivals), format_vector(rec.services), format_vector(rec.dropped),
        format_vector(rec.backlog), format_vector(rec.augmented), format_vector(rec.gamma),
        rec.branch, format_events(rec.events),
    ]


def write_trace_csv(trace, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for rec in trace:
            writer.writerow(trace_row(rec))


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return format_number(value)
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def metrics_to_dict(metrics: Metrics):
    """Flat JSON-ready dict; infinities become the string "inf"."""
    data = asdict(metrics)
    data["delay_histogram"] = [[d, m] for d, m in metrics.delay_histogram]
    return {k: _json_safe(v) for k, v in data.items()}


def write_metrics_json(metrics: Metrics, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    try:
        with open(path, "w") as f:
            json.dump(metrics_to_dict(metrics), f, indent=4, sort_keys=True)
    except OSError:
        logger.exception(f"[ERROR] Could not write metrics to {path}")
        raise
