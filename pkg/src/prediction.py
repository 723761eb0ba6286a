"""Imperfect distribution prediction with a per-offset accuracy curve.

The predictor reads the schedule's true future law pi(t+k) and perturbs it
so that the total variation error is at most e(k), for every k in 0..w.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from src.errors import DimensionError, ParameterError
from src.model import project_to_simplex

logger = logging.getLogger(__name__)

# keeps the rescaled error strictly inside the bound under rounding
_SHRINK = 1.0 - 1e-12


@dataclass(frozen=True)
class PredictionProfile:
    """Distribution-accuracy curve e(0..w) in total-variation units."""

    error_curve: tuple

    def __post_init__(self):
        curve = tuple(float(e) for e in self.error_curve)
        if not curve:
            raise ParameterError("error curve needs at least one entry (w >= 0)")
        for e in curve:
            if not 0.0 <= e <= 2.0:
                raise ParameterError(f"prediction error {e} is outside the total-variation range [0, 2]")
        object.__setattr__(self, "error_curve", curve)

    @classmethod
    def constant(cls, e_w, w):
        return cls((float(e_w),) * (int(w) + 1))

    @classmethod
    def indicator(cls, w):
        """Look-ahead window of realised states: the error bound is vacuous."""
        return cls((2.0,) * (int(w) + 1))

    @property
    def window(self):
        """Number of predicted slots, w + 1."""
        return len(self.error_curve)

    @property
    def w(self):
        return len(self.error_curve) - 1


@dataclass(frozen=True)
class PredictionWindow:
    """Predicted laws for slots base_time .. base_time + w (one row per slot)."""

    base_time: int
    predicted: np.ndarray

    @property
    def mean(self):
        return self.predicted.mean(axis=0)

    def __len__(self):
        return self.predicted.shape[0]


def average_error(profile: PredictionProfile):
    """e_w, the arithmetic mean of the accuracy curve."""
    return float(np.mean(profile.error_curve))


def _perturb(true_rows, errors, rng):
    """Perturb each row within its TV budget, staying on the simplex."""
    n, M = true_rows.shape
    direction = rng.uniform(-1.0, 1.0, size=(n, M))
    direction -= direction.mean(axis=1, keepdims=True)
    norms = np.abs(direction).sum(axis=1)
    radius = rng.uniform(0.0, 1.0, size=n) * errors
    safe = norms > 0
    step = np.zeros_like(direction)
    step[safe] = direction[safe] * (radius[safe] / norms[safe])[:, None]
    candidate = project_to_simplex(true_rows + step)
    tv = np.abs(candidate - true_rows).sum(axis=1)
    # projection can only move the point; pull it back along the segment
    scale = np.ones(n)
    over = tv > errors * _SHRINK
    scale[over] = errors[over] * _SHRINK / tv[over]
    return true_rows + (candidate - true_rows) * scale[:, None]


def synthesize_prediction(schedule, t, profile: PredictionProfile, rng):
    """Build the prediction window W_w(t) from the schedule's true laws.

    Args:
        schedule: DistributionSchedule providing pi(t + k)
        t: Base slot of the window
        profile: Accuracy curve e(0..w)
        rng: numpy Generator; consumed only when some e(k) > 0

    Returns:
        PredictionWindow whose row k is within TV e(k) of pi(t + k)
    """
    truth = np.stack([schedule.distribution_at(t + k) for k in range(profile.window)])
    errors = np.asarray(profile.error_curve)
    if not np.any(errors > 0):
        return PredictionWindow(t, truth.copy())
    predicted = truth.copy()
    noisy = errors > 0
    predicted[noisy] = _perturb(truth[noisy], errors[noisy], rng)
    return PredictionWindow(t, predicted)


def indicator_window(t, future_states, num_states):
    """Point-mass predictions for realised future states S(t..t+w)."""
    future_states = np.asarray(future_states, dtype=np.int64)
    if future_states.ndim != 1:
        raise DimensionError("future states must be a 1-D sequence")
    predicted = np.zeros((future_states.shape[0], num_states))
    predicted[np.arange(future_states.shape[0]), future_states] = 1.0
    return PredictionWindow(t, predicted)
