"""Fluid delay accounting with last-in-first-out or first-in-first-out service.

Each queue keeps a sequence of [arrival slot, remaining mass] batches, oldest
first. LIFO service eats the most recent batch first, FIFO the oldest; either
may split a batch. A drop annihilates the whole queue. Delays are weighted by
the served mass.
"""
from __future__ import annotations

import logging
from collections import defaultdict, deque
from dataclasses import dataclass

import numpy as np

from src.errors import DimensionError, LedgerError, ParameterError

logger = logging.getLogger(__name__)

SERVICE_ORDERS = ("lifo", "fifo")
MASS_TOL = 1e-9


@dataclass(frozen=True)
class DelayStats:
    average: float
    trimmed: float
    histogram: tuple
    served_mass: float
    dropped_mass: float
    arrived_mass: float


class FluidLedger:
    """Per-queue sequences of fluid arrival batches.

    Args:
        num_queues: Number of queues r
        order: "lifo" or "fifo"
    """

    def __init__(self, num_queues, order="lifo"):
        if num_queues < 1:
            raise ParameterError("ledger needs at least one queue")
        if order not in SERVICE_ORDERS:
            raise ParameterError(f"service order must be one of {SERVICE_ORDERS}, got {order!r}")
        self.num_queues = int(num_queues)
        self.order = order
        self._lifo = order == "lifo"
        self._stacks = [deque() for _ in range(self.num_queues)]
        self.arrived = np.zeros(self.num_queues)
        self.served = np.zeros(self.num_queues)
        self.dropped = np.zeros(self.num_queues)
        self._delays = defaultdict(float)

    def _check_queue(self, j):
        if not 0 <= j < self.num_queues:
            raise DimensionError(f"queue {j} is outside 0..{self.num_queues - 1}")

    def push(self, j, slot, mass):
        self._check_queue(j)
        if mass < 0:
            raise ParameterError("arrival mass must be nonnegative")
        if mass == 0:
            return
        stack = self._stacks[j]
        if stack and stack[-1][0] == slot:
            stack[-1][1] += mass
        else:
            stack.append([slot, float(mass)])
        self.arrived[j] += mass

    def serve(self, j, slot, amount):
        """Serve up to amount from queue j in the ledger's order; returns the mass actually served."""
        self._check_queue(j)
        if amount < 0:
            raise ParameterError("service amount must be nonnegative")
        stack = self._stacks[j]
        left = float(amount)
        served = 0.0
        while left > 0 and stack:
            batch = stack[-1] if self._lifo else stack[0]
            arrival, mass = batch
            take = mass if mass <= left else left
            self._delays[slot - arrival] += take
            served += take
            left -= take
            if take < mass:
                batch[1] = mass - take
            elif self._lifo:
                stack.pop()
            else:
                stack.popleft()
        self.served[j] += served
        return served

    def apply(self, slot, arrivals, services):
        """Push one slot's arrivals, then serve; same-slot arrivals may leave with delay 0."""
        if len(arrivals) != self.num_queues or len(services) != self.num_queues:
            raise DimensionError("arrival/service vectors do not match the number of queues")
        for j in range(self.num_queues):
            self.push(j, slot, arrivals[j])
            self.serve(j, slot, services[j])

    def drop_all(self, slot):
        """Annihilate every stacked batch; returns the dropped mass per queue."""
        dropped = np.array([sum(m for _, m in stack) for stack in self._stacks])
        for stack in self._stacks:
            stack.clear()
        self.dropped += dropped
        if dropped.sum() > 0:
            logger.debug(f"[SIM] Dropped {dropped.sum():.4f} mass at slot {slot}")
        return dropped

    def backlog(self, j=None):
        if j is None:
            return np.array([sum(m for _, m in stack) for stack in self._stacks])
        self._check_queue(j)
        return sum(m for _, m in self._stacks[j])

    def batches(self, j):
        """Snapshot of queue j's batches, oldest first."""
        self._check_queue(j)
        return [tuple(b) for b in self._stacks[j]]

    def check(self, q, slot=None, exact=False):
        """Raise LedgerError unless the ledger's mass matches the backlog q.

        The running totals arrived - served - dropped are compared by default;
        exact sums the stored batches as well.
        """
        q = np.asarray(q, dtype=float)
        tol = MASS_TOL * max(1.0, float(self.arrived.sum()))
        drift = float(np.max(np.abs(self.arrived - self.served - self.dropped - q)))
        if exact:
            drift = max(drift, float(np.max(np.abs(self.backlog() - q))))
        if drift > tol:
            where = "" if slot is None else f" at slot {slot}"
            raise LedgerError(f"ledger mass drifted from the queue backlog by {drift:.3g}{where}")

    @property
    def delay_histogram(self):
        return dict(self._delays)


class LifoLedger(FluidLedger):
    """FluidLedger that always serves the most recent batch first."""

    def __init__(self, num_queues):
        super().__init__(num_queues, "lifo")


def measure_delay(ledger: FluidLedger, V):
    """Mass-weighted delay, and the same with the largest-delay 1/V of served mass removed.

    Args:
        ledger: Ledger of a completed run
        V: Tradeoff parameter; the trimmed fraction is 1/V

    Returns:
        DelayStats; averages are 0.0 when nothing was served
    """
    if not V >= 1:
        raise ParameterError("trim needs V >= 1")
    items = sorted(ledger.delay_histogram.items())
    served = float(ledger.served.sum())
    dropped = float(ledger.dropped.sum())
    arrived = float(ledger.arrived.sum())
    if not items or served <= 0:
        return DelayStats(0.0, 0.0, tuple(items), served, dropped, arrived)

    delays = np.array([d for d, _ in items], dtype=float)
    masses = np.array([m for _, m in items], dtype=float)
    total = masses.sum()
    average = float(delays @ masses / total)

    keep = total * (1.0 - 1.0 / V)
    if keep <= 0:
        trimmed = 0.0
    else:
        before = np.concatenate(([0.0], np.cumsum(masses)[:-1]))
        kept = np.clip(keep - before, 0.0, masses)
        trimmed = float(delays @ kept / kept.sum())
    return DelayStats(average, min(trimmed, average), tuple(items), served, dropped, arrived)
