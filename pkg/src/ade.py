"""Average distribution estimate (ADE) with two sample windows.

W_m(t) holds the samples of the current stationary stretch, capped at the
first T_l of them. T_l may be shorter than d: step (i) waits until the
stretch itself spans d slots ahead of W_d, then compares against the
capped W_m estimate. W_d(t) holds the most recent d slots: observed samples
for slots before t followed by the w+1 predicted laws for t..t+w.
Comparing the two detects a distribution change; comparing individual
predictions with the frozen W_m estimate detects a stretch that has ended.

Slot ranges:
    W_m(t) = [b_m, min(b_d_start, b_m + T_l))          (half-open)
    W_d(t) = [b_d_start, b_d_end]                      (closed, d slots)
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from src.errors import DimensionError, ParameterError
from src.model import total_variation

logger = logging.getLogger(__name__)

DETECTION_NORMS = {"l1": 1.0, "half_l1": 0.5}
DEFAULT_DETECTION_NORM = "half_l1"
BRANCH_HISTORY = "history"
BRANCH_PREDICTION = "prediction"


@dataclass(frozen=True)
class AdeParams:
    """Window lengths and thresholds.

    T_l may be math.inf, in which case the estimate never switches to history.
    It may also be shorter than d.
    """

    T_l: float
    d: int
    eps_d: float
    w: int
    M: int
    error_curve: tuple = ()
    detection_norm: str = DEFAULT_DETECTION_NORM

    def __post_init__(self):
        if self.w < 0:
            raise ParameterError("prediction horizon w must be nonnegative")
        if self.d < self.w + 1:
            raise ParameterError(f"detection window d={self.d} must be at least w+1={self.w + 1}")
        if not self.T_l >= 1:
            raise ParameterError(f"confidence length T_l={self.T_l} must be at least one slot")
        if math.isfinite(self.T_l) and self.T_l != int(self.T_l):
            raise ParameterError("confidence length T_l must be an integer number of slots")
        if not self.eps_d > 0:
            raise ParameterError("detection threshold eps_d must be positive")
        if self.M < 1:
            raise ParameterError("state count M must be positive")
        if self.detection_norm not in DETECTION_NORMS:
            raise ParameterError(f"detection_norm must be one of {sorted(DETECTION_NORMS)}")
        curve = tuple(float(e) for e in self.error_curve) or (0.0,) * (self.w + 1)
        if len(curve) != self.w + 1:
            raise DimensionError(f"error curve has {len(curve)} entries, expected w+1={self.w + 1}")
        object.__setattr__(self, "error_curve", curve)

    @property
    def finite_T_l(self):
        return math.isfinite(self.T_l)

    @property
    def consistency_margin(self):
        """2 M log(T_l) / sqrt(T_l), the slack step (ii) allows for sampling noise."""
        if not self.finite_T_l:
            return 0.0
        return 2.0 * self.M * math.log(self.T_l) / math.sqrt(self.T_l)

    @property
    def history_capacity(self):
        extra = int(self.T_l) if self.finite_T_l else 0
        return extra + self.d + self.w + 2


@dataclass
class AdeEvents:
    slot: int
    change_detected_step1: bool = False
    reset_point_marked: bool = False
    frozen: bool = False
    restart_slot: Optional[int] = None
    window_m_prev: int = 0
    window_m: int = 0

    @property
    def reset(self):
        return self.change_detected_step1 or self.reset_point_marked


@dataclass
class AdeState:
    """Markers, recent samples and running counts of one estimator."""

    M: int
    capacity: int
    b_m: int = 0
    b_d_start: int = 0
    b_d_end: int = 0
    next_slot: int = 0
    history: np.ndarray = None
    m_counts: np.ndarray = None
    m_end: int = 0
    frozen_pi_m: Optional[np.ndarray] = None
    reset_points: List[int] = field(default_factory=list)
    detections: List[int] = field(default_factory=list)
    _obs_counts: np.ndarray = None
    _obs_lo: int = 0
    _obs_hi: int = 0

    def __post_init__(self):
        if self.history is None:
            self.history = np.full(self.capacity, -1, dtype=np.int64)
        if self.m_counts is None:
            self.m_counts = np.zeros(self.M, dtype=np.int64)
        if self._obs_counts is None:
            self._obs_counts = np.zeros(self.M, dtype=np.int64)

    @classmethod
    def initial(cls, params: AdeParams):
        return cls(M=params.M, capacity=params.history_capacity, b_d_end=params.w)

    def window_m_end(self, T_l):
        if math.isfinite(T_l):
            return min(self.b_d_start, self.b_m + int(T_l))
        return self.b_d_start

    def window_m_size(self, T_l):
        return max(0, self.window_m_end(T_l) - self.b_m)

    def stretch_size(self):
        """Observed slots of the current stretch that precede W_d."""
        return max(0, self.b_d_start - self.b_m)

    @property
    def window_d_size(self):
        return self.b_d_end - self.b_d_start + 1

    def sample_at(self, slot):
        if not (self.next_slot - self.capacity <= slot < self.next_slot):
            raise ParameterError(f"slot {slot} is no longer (or not yet) in the ADE history")
        return int(self.history[slot % self.capacity])


def change_statistic(pi_d, pi_m, norm="l1"):
    """Distance between the two window estimates; works row-wise on arrays."""
    diff = np.abs(np.asarray(pi_d, dtype=float) - np.asarray(pi_m, dtype=float))
    return DETECTION_NORMS[norm] * diff.sum(axis=-1)


def _range_counts(state: AdeState, lo, hi):
    counts = np.zeros(state.M, dtype=np.int64)
    if hi > lo:
        idx = np.arange(lo, hi) % state.capacity
        counts += np.bincount(state.history[idx], minlength=state.M)
    return counts


def _observed_counts(state: AdeState, lo, hi):
    """Counts of recorded samples in [lo, hi), reusing the previous window."""
    if state._obs_lo <= lo <= state._obs_hi <= hi and hi - state._obs_hi <= 4 and lo - state._obs_lo <= 4:
        for s in range(state._obs_lo, lo):
            state._obs_counts[state.history[s % state.capacity]] -= 1
        for s in range(state._obs_hi, hi):
            state._obs_counts[state.history[s % state.capacity]] += 1
    else:
        state._obs_counts = _range_counts(state, lo, hi)
    state._obs_lo, state._obs_hi = lo, hi
    return state._obs_counts


def _sync_window_m(state: AdeState, params: AdeParams):
    """Pull samples that have entered W_m into its counts; freeze at T_l."""
    target = state.window_m_end(params.T_l)
    if target > state.m_end:
        start = max(state.m_end, state.b_m)
        for s in range(start, target):
            state.m_counts[state.history[s % state.capacity]] += 1
        state.m_end = target
    if state.frozen_pi_m is None and params.finite_T_l and state.window_m_size(params.T_l) >= params.T_l:
        state.frozen_pi_m = state.m_counts / float(params.T_l)
        state.frozen_pi_m.setflags(write=False)
        logger.info(f"[ADE] W_m reached T_l={int(params.T_l)} at b_m={state.b_m}; estimate frozen")


def empirical_m(state: AdeState, t, params: AdeParams = None):
    """Empirical law of W_m(t), or None when the window is empty."""
    T_l = math.inf if params is None else params.T_l
    if state.frozen_pi_m is not None:
        return state.frozen_pi_m
    size = state.window_m_size(T_l)
    if size == 0:
        return None
    return state.m_counts / float(size)


def empirical_d(state: AdeState, t, prediction, params: AdeParams):
    """Average of observed samples in [(t+w+1-d)_+, t-1] and the w+1 predictions.

    Normalised by the number of terms actually included.
    """
    predicted = prediction.predicted
    if predicted.shape != (params.w + 1, params.M):
        raise DimensionError(
            f"prediction window has shape {predicted.shape}, expected {(params.w + 1, params.M)}")
    lo = max(t + params.w + 1 - params.d, 0)
    counts = _observed_counts(state, lo, t)
    terms = (t - lo) + predicted.shape[0]
    return (counts + predicted.sum(axis=0)) / float(terms)


def _restart(state: AdeState, t, params: AdeParams):
    restart = t + params.w + 1
    state.b_m = state.b_d_start = state.b_d_end = restart
    state.m_counts = np.zeros(params.M, dtype=np.int64)
    state.m_end = restart
    state.frozen_pi_m = None
    return restart


def _check_spans(state: AdeState, params: AdeParams):
    size_m = state.window_m_size(params.T_l)
    if params.finite_T_l and size_m > params.T_l:
        return False
    if state.m_counts.sum() != size_m and state.frozen_pi_m is None:
        return False
    return state.window_d_size <= params.d


def ade_update(state: AdeState, t, sample, prediction, params: AdeParams):
    """Advance the estimator by one slot.

    Steps are tried in priority order: (i) W_d/W_m mismatch, (ii) a
    prediction inconsistent with the frozen history (marks a reset point),
    (iii) freeze for w+1 slots after a restart, (iv) slide W_d forward.
    The sample S(t) is recorded last; it first counts at slot t+1.

    Args:
        state: Estimator state, mutated in place
        t: Current slot; must equal the previous slot + 1
        sample: Index of the observed state S(t)
        prediction: PredictionWindow for slots t..t+w
        params: AdeParams

    Returns:
        AdeEvents for the slot
    """
    if t != state.next_slot:
        raise ParameterError(f"ADE expected slot {state.next_slot}, got {t}")
    if not 0 <= sample < params.M:
        raise ParameterError(f"sample index {sample} is outside 0..{params.M - 1}")

    events = AdeEvents(slot=t, window_m_prev=state.window_m_size(params.T_l))

    if t > 0 and t <= state.b_d_start:
        events.frozen = True
    else:
        state.b_d_start = max(t + params.w + 1 - params.d, 0)
        state.b_d_end = t + params.w
    _sync_window_m(state, params)

    size_m = state.window_m_size(params.T_l)
    fired = None
    if size_m > 0 and state.stretch_size() >= params.d and state.window_d_size == params.d:
        pi_m = empirical_m(state, t, params)
        pi_d = empirical_d(state, t, prediction, params)
        distance = float(change_statistic(pi_d, pi_m, params.detection_norm))
        if distance > params.eps_d:
            fired = "step1"
            logger.info(f"[ADE] Change detected at slot {t}: distance {distance:.4f} > eps_d {params.eps_d}")

    if fired is None and params.finite_T_l and size_m == params.T_l:
        pi_m = empirical_m(state, t, params)
        margin = params.consistency_margin
        for k, e_k in enumerate(params.error_curve):
            if total_variation(prediction.predicted[k], pi_m) > e_k + margin:
                fired = "step2"
                logger.info(f"[ADE] Prediction for slot {t + k} disagrees with history at slot {t}")
                break

    if fired is not None:
        restart = _restart(state, t, params)
        events.restart_slot = restart
        if fired == "step1":
            events.change_detected_step1 = True
            state.detections.append(t)
        else:
            events.reset_point_marked = True
            state.reset_points.append(restart)

    state.history[t % state.capacity] = int(sample)
    state.next_slot = t + 1
    events.window_m = state.window_m_size(params.T_l)
    assert _check_spans(state, params), "ADE window spans violated"
    return events


def estimate_output(state: AdeState, t, prediction, params: AdeParams):
    """pi_a(t): frozen W_m estimate once W_m >= T_l, else the mean prediction."""
    if state.frozen_pi_m is not None and state.window_m_size(params.T_l) >= params.T_l:
        return state.frozen_pi_m
    return prediction.mean


def output_branch(state: AdeState, params: AdeParams):
    if state.frozen_pi_m is not None and state.window_m_size(params.T_l) >= params.T_l:
        return BRANCH_HISTORY
    return BRANCH_PREDICTION


class AverageDistributionEstimator:
    """Convenience wrapper bundling parameters and state for a simulation run."""

    def __init__(self, params: AdeParams):
        self.params = params
        self.state = AdeState.initial(params)

    def update(self, t, sample, prediction):
        return ade_update(self.state, t, sample, prediction, self.params)

    def estimate(self, t, prediction):
        return estimate_output(self.state, t, prediction, self.params)

    @property
    def branch(self):
        return output_branch(self.state, self.params)

    @property
    def window_m(self):
        return self.state.window_m_size(self.params.T_l)
