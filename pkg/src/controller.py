"""Per-slot control: Backpressure and predictive learning-aided control.

Both controllers pick, in the observed state, the action maximising
-V f + sum_j Q_j (mu_j - A_j). Backpressure uses the physical backlog
Q = q; PLC adds the learned multiplier offset, Q_j = q_j + (gamma_j - theta)^+,
and zeroes the queues w+1 slots after a long stationary stretch ends.
Backpressure serves its queues first-in first-out; PLC serves last-in
first-out.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.ade import DEFAULT_DETECTION_NORM, AdeParams
from src.dual import DualSolverParams, Multiplier, solve_multiplier, track_multiplier
from src.errors import ParameterError
from src.model import SystemModel, total_variation

logger = logging.getLogger(__name__)

THETA_MODES = ("simulation", "analytic")
CONTROLLER_KINDS = ("plc", "bp")
PI_CHANGE_TOL = 1e-12
# pi_a moves further than this from the last fully solved law: solve again instead of tracking
RETRACK_TV = 0.1
SERVICE_ORDERS = ("lifo", "fifo")
DEFAULT_SERVICE_ORDER = {"bp": "fifo", "plc": "lifo"}
DEFAULT_DELTA_SIM = 0.005


def _ceil(x):
    # 0.04 ** -2 evaluates a hair above 625
    return int(math.ceil(x - 1e-9))


@dataclass(frozen=True)
class PlcParams:
    """PLC tuning. T_l is the confidence length formula value; it may be math.inf."""

    V: float
    c: float
    w: int
    eps_d: float
    delta: float
    d: int
    T_l: float
    theta: float
    theta_mode: str = "simulation"
    e_w: float = 0.0

    def __post_init__(self):
        if self.theta < 0:
            raise ParameterError("theta must be nonnegative")
        if self.d < self.w + 1:
            raise ParameterError(f"d={self.d} must be at least w+1={self.w + 1}")
        if self.theta_mode not in THETA_MODES:
            raise ParameterError(f"theta_mode must be one of {THETA_MODES}")


def derive_params(V, c=0.5, w=4, eps_d=0.1, e_w=0.0, theta_mode="simulation", delta_sim=DEFAULT_DELTA_SIM):
    """Derive d, T_l, theta and the detection error probability from V.

    Args:
        V: Utility/backlog tradeoff, at least 2
        c: Exponent of V in T_l, in (0, 1)
        w: Prediction horizon (w+1 predicted slots)
        eps_d: Detection threshold
        e_w: Average prediction error; 0 makes T_l infinite
        theta_mode: "simulation" (theta = log^2 V) or "analytic" (theta = 2 log^2 V (1 + V / sqrt(T_l)))
        delta_sim: Detection error probability used by the simulation recipe for d

    Returns:
        PlcParams
    """
    if not V >= 2:
        raise ParameterError(f"V must be at least 2, got {V}")
    if not eps_d > 0:
        raise ParameterError(f"eps_d must be positive, got {eps_d}")
    if not 0 < c < 1:
        raise ParameterError(f"c must lie in (0, 1), got {c}")
    if w < 0:
        raise ParameterError(f"w must be nonnegative, got {w}")
    if e_w < 0:
        raise ParameterError(f"e_w must be nonnegative, got {e_w}")
    if theta_mode not in THETA_MODES:
        raise ParameterError(f"theta_mode must be one of {THETA_MODES}, got {theta_mode!r}")
    if not 0 < delta_sim < 1:
        raise ParameterError(f"delta_sim must lie in (0, 1), got {delta_sim}")

    log_v = math.log(V)
    delta = V ** (-log_v)
    T_l = math.inf if e_w == 0 else float(_ceil(max(V ** c, e_w ** -2)))

    if theta_mode == "analytic":
        d = _ceil(4 * log_v ** 2 / eps_d ** 2 + w + 1)
        theta = 2 * log_v ** 2 * (1 + (0.0 if math.isinf(T_l) else V / math.sqrt(T_l)))
    else:
        d = _ceil(2 * math.log(4 / delta_sim) / eps_d ** 2 + w + 1)
        theta = log_v ** 2

    params = PlcParams(V=float(V), c=float(c), w=int(w), eps_d=float(eps_d), delta=delta, d=d,
                       T_l=T_l, theta=theta, theta_mode=theta_mode, e_w=float(e_w))
    logger.debug(f"[CONTROL] Derived params for V={V}: d={d}, T_l={T_l}, theta={theta:.4f}")
    return params


def ade_params_for(params: PlcParams, num_states, error_curve=None, detection_norm=DEFAULT_DETECTION_NORM):
    curve = error_curve if error_curve is not None else (params.e_w,) * (params.w + 1)
    return AdeParams(T_l=params.T_l, d=params.d, eps_d=params.eps_d, w=params.w,
                     M=num_states, error_curve=tuple(curve), detection_norm=detection_norm)


def augmented_queue(q, gamma, theta):
    """Q_j = q_j + (gamma_j - theta)^+."""
    g = gamma.as_array() if isinstance(gamma, Multiplier) else np.asarray(gamma, dtype=float)
    return np.asarray(q, dtype=float) + np.maximum(g - theta, 0.0)


def choose_action_index(model: SystemModel, state_idx, Q, V):
    """Index of the action maximising -V f + Q . (mu - A); ties to the lowest index."""
    Q = np.asarray(Q, dtype=float)
    if np.any(Q < 0):
        raise ParameterError("augmented queue weights must be nonnegative")
    # maximising -V f - Q.(A - mu) is minimising the Lagrangian row
    row = V * model.cost_table[state_idx] + model.drift_table[state_idx] @ Q
    return int(np.argmin(row))


def choose_action(model: SystemModel, state, Q, V):
    """Max-weight action identifier for a state identifier."""
    i = model.state_index(state)
    return model.actions(i)[choose_action_index(model, i, Q, V)]


@dataclass(frozen=True)
class ControllerConfig:
    """Which controller to run and how its multiplier solves are budgeted."""

    kind: str
    V: float
    plc: Optional[PlcParams] = None
    dual_iters: int = 10000
    warm_iters: int = 100
    detection_norm: str = DEFAULT_DETECTION_NORM
    service_order: Optional[str] = None

    def __post_init__(self):
        if self.kind not in CONTROLLER_KINDS:
            raise ParameterError(f"controller must be one of {CONTROLLER_KINDS}, got {self.kind!r}")
        if self.service_order is not None and self.service_order not in SERVICE_ORDERS:
            raise ParameterError(f"service_order must be one of {SERVICE_ORDERS}, got {self.service_order!r}")
        if self.kind == "plc" and self.plc is None:
            raise ParameterError("plc controller needs PlcParams")
        if not self.V > 0:
            raise ParameterError("V must be positive")

    @property
    def order(self):
        return self.service_order or DEFAULT_SERVICE_ORDER[self.kind]

    @property
    def label(self):
        if self.kind == "bp":
            return "bp"
        return f"plc(e_w={self.plc.e_w:g})"


@dataclass
class SlotDecision:
    action: int
    augmented: np.ndarray
    gamma: tuple
    drop: bool = False
    drop_scheduled: Optional[int] = None
    resolved: bool = False
    capped: bool = False


@dataclass
class ControllerState:
    gamma: Multiplier
    pending_drop: Optional[int] = None
    last_pi_a: Optional[np.ndarray] = None
    solved_pi: Optional[np.ndarray] = None
    anchor_pi: Optional[np.ndarray] = None
    settled: bool = False
    capped: bool = False
    solves: int = 0
    drops: list = field(default_factory=list)


class BackpressureController:
    """Plain max-weight control on the physical backlog."""

    uses_estimator = False

    def __init__(self, model: SystemModel, config: ControllerConfig):
        self.model = model
        self.config = config
        self._zeros = tuple([0.0] * model.num_queues)
        self.service_order = config.order

    def step(self, t, state_idx, q, pi_a=None, events=None):
        Q = np.asarray(q, dtype=float)
        action = choose_action_index(self.model, state_idx, Q, self.config.V)
        return SlotDecision(action=action, augmented=Q, gamma=self._zeros)


class PlcController:
    """Learning and control steps of PLC for one run.

    Args:
        model: SystemModel
        config: ControllerConfig with kind "plc"
    """

    uses_estimator = True

    def __init__(self, model: SystemModel, config: ControllerConfig):
        self.model = model
        self.config = config
        self.params = config.plc
        self.solver_params = DualSolverParams(V=config.V, max_iters=config.dual_iters, warm_iters=config.warm_iters)
        self.state = ControllerState(gamma=Multiplier.zeros(model.num_queues))
        self.history_length = self.params.T_l
        self.service_order = config.order

    def _learn(self, pi_a, full):
        """Full solve (warm after the first) or a short tracking run from the current multiplier."""
        st = self.state
        if st.solved_pi is None:
            result = solve_multiplier(self.model, pi_a, self.solver_params)
        elif full:
            result = solve_multiplier(self.model, pi_a, self.solver_params, warm_start=st.gamma)
        else:
            result = track_multiplier(self.model, pi_a, self.solver_params, st.gamma)
        st.gamma = result.multiplier
        st.solved_pi = np.array(pi_a, copy=True)
        st.settled = full
        if full:
            st.anchor_pi = st.solved_pi
        st.capped = result.capped
        st.solves += 1
        if result.capped:
            logger.info(f"[CONTROL] Multiplier capped at V log V for V={self.config.V}")
        return result

    def step(self, t, state_idx, q, pi_a, events):
        """One PLC slot: learning step, any due drop, then the control step.

        Args:
            t: Current slot
            state_idx: Observed state S(t)
            q: Physical backlog q(t)
            pi_a: ADE output pi_a(t)
            events: AdeEvents of slot t (window_m_prev is W_m(t-1))

        Returns:
            SlotDecision; when drop is set the caller zeroes q before acting
        """
        st = self.state
        resolved = True
        if st.solved_pi is None:
            self._learn(pi_a, full=True)
        elif total_variation(pi_a, st.solved_pi) > PI_CHANGE_TOL:
            self._learn(pi_a, full=total_variation(pi_a, st.anchor_pi) > RETRACK_TV)
        elif not st.settled:
            # pi_a held still after tracking steps
            self._learn(pi_a, full=True)
        else:
            resolved = False

        scheduled = None
        if (st.last_pi_a is not None and events is not None
                and events.window_m_prev >= self.history_length
                and total_variation(pi_a, st.last_pi_a) > PI_CHANGE_TOL):
            scheduled = t + self.params.w + 1
            st.pending_drop = scheduled
            logger.info(f"[CONTROL] Stationary stretch ended at slot {t}; queues will be dropped at slot {scheduled}")
        st.last_pi_a = np.array(pi_a, copy=True)

        drop = st.pending_drop == t
        if drop:
            st.pending_drop = None
            st.drops.append(t)
            q = np.zeros_like(np.asarray(q, dtype=float))

        Q = augmented_queue(q, st.gamma, self.params.theta)
        action = choose_action_index(self.model, state_idx, Q, self.config.V)
        return SlotDecision(action=action, augmented=Q, gamma=st.gamma.gamma, drop=drop,
                            drop_scheduled=scheduled, resolved=resolved, capped=st.capped)


def build_controller(model: SystemModel, config: ControllerConfig):
    if config.kind == "bp":
        return BackpressureController(model, config)
    return PlcController(model, config)
