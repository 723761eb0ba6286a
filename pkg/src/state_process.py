"""Piecewise-stationary state process.

A schedule is a list of (start slot, distribution) segments; the state of
every slot is drawn independently from the segment covering it.
"""
from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass

import numpy as np

from src.errors import ConfigError, ParameterError
from src.model import as_distribution, two_queue_distribution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistributionSchedule:
    """Segments (t_k, pi_k) over the horizon [0, horizon).

    Slots at or beyond the horizon keep the last segment's law, so
    prediction windows near the end of a run stay defined.
    """

    starts: tuple
    distributions: tuple
    horizon: int

    def __post_init__(self):
        if not self.starts:
            raise ParameterError("schedule needs at least one segment")
        if len(self.starts) != len(self.distributions):
            raise ParameterError("schedule starts and distributions differ in length")
        if self.starts[0] != 0:
            raise ParameterError("first schedule segment must start at slot 0")
        if any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise ParameterError("schedule segment starts must be strictly increasing")
        if self.horizon < 1:
            raise ParameterError("schedule horizon must be positive")
        size = len(self.distributions[0])
        frozen = []
        for pi in self.distributions:
            arr = np.array(as_distribution(pi, size))
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "distributions", tuple(frozen))

    @classmethod
    def stationary(cls, pi, horizon):
        return cls((0,), (np.asarray(pi, dtype=float),), int(horizon))

    @classmethod
    def from_segments(cls, segments, horizon):
        starts, dists = zip(*segments)
        return cls(tuple(int(s) for s in starts), tuple(dists), int(horizon))

    @property
    def num_states(self):
        return len(self.distributions[0])

    @property
    def change_points(self):
        """Start slots of every segment after the first that fall inside the horizon."""
        return tuple(s for s in self.starts[1:] if s < self.horizon)

    def segment_index(self, t):
        return bisect.bisect_right(self.starts, t) - 1

    def distribution_at(self, t):
        if t < 0:
            raise ParameterError(f"slot {t} is before the start of the schedule")
        return self.distributions[self.segment_index(t)]

    def sample_states(self, rng, horizon=None):
        """Draw S(0..horizon-1), one independent draw per slot."""
        horizon = self.horizon if horizon is None else int(horizon)
        out = np.empty(horizon, dtype=np.int64)
        bounds = list(self.starts) + [horizon]
        for k, pi in enumerate(self.distributions):
            lo, hi = bounds[k], min(bounds[k + 1], horizon)
            if lo >= horizon:
                break
            if hi > lo:
                out[lo:hi] = rng.choice(len(pi), size=hi - lo, p=pi)
        return out


def parse_two_queue_schedule(text, horizon):
    """Parse "start:p1:p2,start:p1:p2" into a two-queue schedule.

    Channels are uniform in every segment.
    """
    segments = []
    try:
        for chunk in text.split(","):
            start, p1, p2 = chunk.strip().split(":")
            segments.append((int(start), two_queue_distribution(float(p1), float(p2))))
    except ValueError as e:
        raise ConfigError(f"schedule must look like 'start:p1:p2,...', got {text!r}: {e}") from e
    try:
        return DistributionSchedule.from_segments(segments, horizon)
    except ParameterError as e:
        raise ConfigError(f"invalid schedule {text!r}: {e}") from e


def format_two_queue_schedule(segments):
    """Inverse of parse_two_queue_schedule for (start, p1, p2) triples."""
    return ",".join(f"{int(s)}:{p1!r}:{p2!r}" for s, p1, p2 in segments)
