"""Network model: states, actions, cost/traffic/service tables and queues.

States are indexed 0..M-1 and every probability vector in the package uses
that order. For the two-queue preset the order is lexicographic over
(A1, A2, CH1, CH2); actions are ordered target-major, (queue 1, P=0) first.
Queues are real-valued fluid backlogs.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Hashable, NamedTuple, Sequence

import numpy as np

from src.errors import DimensionError, DomainError, ParameterError

logger = logging.getLogger(__name__)

PROB_TOL = 1e-9
BOUND_TOL = 1e-12


def as_distribution(probs, size=None):
    """Validate a probability vector and return it as a float array.

    Args:
        probs: Sequence of M nonnegative reals summing to one
        size: Expected length, or None to accept any length

    Returns:
        1-D float64 numpy array
    """
    arr = np.asarray(probs, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"distribution must be a vector, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise DimensionError(f"distribution has {arr.shape[0]} entries, expected {size}")
    if np.any(arr < 0):
        raise ParameterError("distribution has negative entries")
    if abs(arr.sum() - 1.0) > PROB_TOL:
        raise ParameterError(f"distribution sums to {arr.sum():.12g}, not 1")
    return arr


def is_distribution(probs, tol=PROB_TOL):
    arr = np.asarray(probs, dtype=float)
    return arr.ndim == 1 and bool(np.all(arr >= 0)) and abs(arr.sum() - 1.0) <= tol


def total_variation(p, q):
    """Total variation distance sum_i |p_i - q_i|, in [0, 2]."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionError(f"cannot compare distributions of shapes {p.shape} and {q.shape}")
    return float(np.abs(p - q).sum())


def project_to_simplex(x):
    """Euclidean projection onto the probability simplex.

    Works on a single vector or row-wise on a 2-D array.
    """
    arr = np.asarray(x, dtype=float)
    rows = np.atleast_2d(arr)
    n = rows.shape[1]
    u = -np.sort(-rows, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    # last index where the condition holds; index 0 always qualifies
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(rows.shape[0]), rho] / (rho + 1)
    out = np.maximum(rows - tau[:, None], 0.0)
    return out[0] if arr.ndim == 1 else out


@dataclass(frozen=True)
class ActionOutcome:
    """Cost, arrivals and services produced by one action in one state."""

    cost: float
    arrivals: tuple
    services: tuple

    @property
    def drift(self):
        return tuple(a - m for a, m in zip(self.arrivals, self.services))


def queue_update(q, outcome):
    """Apply q_j <- max(q_j - mu_j + A_j, 0) to every queue."""
    q = np.asarray(q, dtype=float)
    services = np.asarray(outcome.services, dtype=float)
    arrivals = np.asarray(outcome.arrivals, dtype=float)
    if not (q.shape == services.shape == arrivals.shape):
        raise DimensionError("queue vector and action outcome disagree on the number of queues")
    return np.maximum(q - services + arrivals, 0.0)


class SystemModel:
    """Finite state/action network model with tabulated f, A and mu.

    The cost, traffic and service functions are evaluated once at
    construction; every later query reads the tables, so the model is
    immutable and safe to share between runs.
    """

    def __init__(self, states: Sequence[Hashable], actions_per_state: Sequence[Sequence[Hashable]],
                 num_queues: int, cost_fn: Callable, traffic_fn: Callable, service_fn: Callable,
                 delta_max: float):
        states = tuple(states)
        if not states:
            raise ParameterError("model needs at least one state")
        if len(set(states)) != len(states):
            raise ParameterError("state identifiers must be distinct")
        if len(actions_per_state) != len(states):
            raise DimensionError("actions_per_state must list one action set per state")
        if num_queues < 1:
            raise ParameterError("model needs at least one queue")
        if not delta_max > 0:
            raise ParameterError("delta_max must be positive")

        self.states = states
        self.actions_per_state = tuple(tuple(acts) for acts in actions_per_state)
        self.num_queues = int(num_queues)
        self.delta_max = float(delta_max)
        self._state_index = {s: i for i, s in enumerate(states)}
        self._action_index = []

        for i, acts in enumerate(self.actions_per_state):
            if not acts:
                raise ParameterError(f"state {states[i]!r} has an empty action set")
            if len(set(acts)) != len(acts):
                raise ParameterError(f"state {states[i]!r} lists duplicate actions")
            self._action_index.append({a: k for k, a in enumerate(acts)})

        M, K, r = len(states), max(len(a) for a in self.actions_per_state), self.num_queues
        self._cost = np.full((M, K), np.inf)
        self._arrivals = np.zeros((M, K, r))
        self._services = np.zeros((M, K, r))
        self._mask = np.zeros((M, K), dtype=bool)

        for i, s in enumerate(states):
            for k, a in enumerate(self.actions_per_state[i]):
                f = float(cost_fn(s, a))
                arr = [float(traffic_fn(s, a, j)) for j in range(r)]
                srv = [float(service_fn(s, a, j)) for j in range(r)]
                if abs(f) > self.delta_max + BOUND_TOL:
                    raise ParameterError(f"|f({s!r}, {a!r})| = {abs(f)} exceeds delta_max {self.delta_max}")
                for j in range(r):
                    if arr[j] < 0 or srv[j] < 0:
                        raise ParameterError(f"negative traffic or service for state {s!r}, action {a!r}")
                    if max(arr[j], srv[j]) > self.delta_max + BOUND_TOL:
                        raise ParameterError(
                            f"traffic/service of queue {j} for state {s!r}, action {a!r} exceeds delta_max")
                self._cost[i, k] = f
                self._arrivals[i, k] = arr
                self._services[i, k] = srv
                self._mask[i, k] = True

        self._drift = self._arrivals - self._services
        for table in (self._cost, self._arrivals, self._services, self._drift, self._mask):
            table.setflags(write=False)

    @property
    def num_states(self):
        return len(self.states)

    @property
    def max_actions(self):
        return self._cost.shape[1]

    # Read-only tables indexed [state, action(, queue)]
    @property
    def cost_table(self):
        return self._cost

    @property
    def arrival_table(self):
        return self._arrivals

    @property
    def service_table(self):
        return self._services

    @property
    def drift_table(self):
        return self._drift

    @property
    def action_mask(self):
        return self._mask

    def state_index(self, state):
        try:
            return self._state_index[state]
        except KeyError:
            raise DomainError(f"unknown state {state!r}") from None

    def action_index(self, state_idx, action):
        try:
            return self._action_index[state_idx][action]
        except KeyError:
            raise DomainError(f"action {action!r} is not available in state {self.states[state_idx]!r}") from None

    def actions(self, state_idx):
        return self.actions_per_state[state_idx]

    def outcome(self, state_idx, action_idx):
        """Outcome by indices, the hot path used by the simulator."""
        if not self._mask[state_idx, action_idx]:
            raise DomainError(f"action index {action_idx} is not available in state index {state_idx}")
        return ActionOutcome(
            cost=float(self._cost[state_idx, action_idx]),
            arrivals=tuple(float(x) for x in self._arrivals[state_idx, action_idx]),
            services=tuple(float(x) for x in self._services[state_idx, action_idx]),
        )

    def evaluate_action(self, state, action):
        """Tabulated (f, A, mu) of an action taken in a state.

        Args:
            state: State identifier of this model
            action: Action identifier available in that state

        Returns:
            ActionOutcome with r-tuples of arrivals and services
        """
        i = self.state_index(state)
        return self.outcome(i, self.action_index(i, action))


def evaluate_action(model: SystemModel, state, action):
    return model.evaluate_action(state, action)


class TwoQueueState(NamedTuple):
    a1: int
    a2: int
    ch1: int
    ch2: int


class TwoQueueAction(NamedTuple):
    target: int
    power: int


DEFAULT_CHANNELS = ((0, 1), (1, 2))
POWER_LEVELS = (0, 1, 2)


def service_rate(channel, power):
    """mu = ln(1 + CH * P)."""
    return math.log1p(channel * power)


def build_two_queue_preset(channel_values=DEFAULT_CHANNELS, power_levels=POWER_LEVELS):
    """Single-server two-queue downlink: serve one queue per slot with power P.

    Args:
        channel_values: Channel alphabets (CH1 values, CH2 values)
        power_levels: Allowed power levels

    Returns:
        SystemModel whose cost is the allocated power
    """
    ch1_values, ch2_values = (tuple(v) for v in channel_values)
    states = [TwoQueueState(a1, a2, c1, c2)
              for a1, a2, c1, c2 in itertools.product((0, 1), (0, 1), ch1_values, ch2_values)]
    actions = [TwoQueueAction(target, p) for target in (1, 2) for p in power_levels]

    def cost_fn(state, action):
        return float(action.power)

    def traffic_fn(state, action, j):
        return float((state.a1, state.a2)[j])

    def service_fn(state, action, j):
        if action.target != j + 1:
            return 0.0
        return service_rate((state.ch1, state.ch2)[j], action.power)

    max_rate = max(service_rate(c, p) for c in ch1_values + ch2_values for p in power_levels)
    delta_max = max(2.0, float(max(power_levels)), max_rate)
    model = SystemModel(states, [actions] * len(states), 2, cost_fn, traffic_fn, service_fn, delta_max)
    logger.debug(f"[MODEL] Built two-queue preset with {model.num_states} states")
    return model


def two_queue_distribution(p1, p2, ch1_probs=None, ch2_probs=None, channel_values=DEFAULT_CHANNELS):
    """Product law over the two-queue states in canonical order.

    Arrivals are Bernoulli(p1), Bernoulli(p2); channels default to uniform.
    """
    ch1_values, ch2_values = channel_values
    if not (0.0 <= p1 <= 1.0 and 0.0 <= p2 <= 1.0):
        raise ParameterError(f"arrival probabilities must lie in [0, 1], got ({p1}, {p2})")
    ch1_probs = np.full(len(ch1_values), 1.0 / len(ch1_values)) if ch1_probs is None else as_distribution(ch1_probs, len(ch1_values))
    ch2_probs = np.full(len(ch2_values), 1.0 / len(ch2_values)) if ch2_probs is None else as_distribution(ch2_probs, len(ch2_values))
    probs = []
    for a1, a2, c1, c2 in itertools.product((0, 1), (0, 1), range(len(ch1_values)), range(len(ch2_values))):
        pa1 = p1 if a1 else 1.0 - p1
        pa2 = p2 if a2 else 1.0 - p2
        probs.append(pa1 * pa2 * ch1_probs[c1] * ch2_probs[c2])
    return np.asarray(probs)
