import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.errors import DimensionError, ParameterError
from src.model import is_distribution, total_variation, two_queue_distribution
from src.prediction import (PredictionProfile, PredictionWindow, average_error, indicator_window,
                            synthesize_prediction)
from src.state_process import DistributionSchedule


@pytest.fixture
def change_schedule():
    return DistributionSchedule.from_segments(
        [(0, two_queue_distribution(0.2, 0.4)), (50, two_queue_distribution(0.3, 0.6))], 100)


def test_profile_validation():
    with pytest.raises(ParameterError):
        PredictionProfile((0.1, 2.5))
    with pytest.raises(ParameterError):
        PredictionProfile(())
    profile = PredictionProfile.constant(0.04, 4)
    assert profile.window == 5
    assert profile.w == 4
    assert average_error(profile) == pytest.approx(0.04)


def test_average_error_of_curve():
    assert average_error(PredictionProfile((0.0, 0.02, 0.04))) == pytest.approx(0.02)


def test_perfect_prediction_is_the_truth(change_schedule, rng):
    window = synthesize_prediction(change_schedule, 47, PredictionProfile.constant(0.0, 4), rng)
    assert window.base_time == 47
    assert len(window) == 5
    for k in range(5):
        np.testing.assert_array_equal(window.predicted[k], change_schedule.distribution_at(47 + k))


def test_window_straddles_change_point(change_schedule, rng):
    window = synthesize_prediction(change_schedule, 48, PredictionProfile.constant(0.0, 4), rng)
    np.testing.assert_array_equal(window.predicted[1], two_queue_distribution(0.2, 0.4))
    np.testing.assert_array_equal(window.predicted[2], two_queue_distribution(0.3, 0.6))


def test_window_past_horizon_keeps_last_law(change_schedule, rng):
    window = synthesize_prediction(change_schedule, 98, PredictionProfile.constant(0.0, 4), rng)
    np.testing.assert_array_equal(window.predicted[4], two_queue_distribution(0.3, 0.6))


@pytest.mark.parametrize("error", [0.0, 0.01, 0.04, 0.1])
def test_prediction_error_bound(change_schedule, error):
    rng = np.random.default_rng(7)
    profile = PredictionProfile.constant(error, 4)
    for t in range(0, 100, 4):
        for _ in range(25):
            window = synthesize_prediction(change_schedule, t, profile, rng)
            for k in range(5):
                row = window.predicted[k]
                assert is_distribution(row)
                assert total_variation(row, change_schedule.distribution_at(t + k)) <= error + 1e-12


@pytest.mark.slow
def test_prediction_error_bound_many_windows(change_schedule):
    rng = np.random.default_rng(11)
    profile = PredictionProfile((0.0, 0.01, 0.04, 0.1, 0.04))
    for i in range(10000):
        t = i % 100
        window = synthesize_prediction(change_schedule, t, profile, rng)
        for k, e in enumerate(profile.error_curve):
            assert total_variation(window.predicted[k], change_schedule.distribution_at(t + k)) <= e + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 2.0), min_size=1, max_size=6), st.integers(0, 2**32 - 1))
def test_prediction_bound_for_any_curve(curve, seed):
    schedule = DistributionSchedule.stationary(two_queue_distribution(0.3, 0.6), 10)
    window = synthesize_prediction(schedule, 0, PredictionProfile(tuple(curve)), np.random.default_rng(seed))
    truth = schedule.distribution_at(0)
    for row, e in zip(window.predicted, curve):
        assert is_distribution(row)
        assert total_variation(row, truth) <= e + 1e-12


def test_noise_is_seeded(change_schedule):
    profile = PredictionProfile.constant(0.04, 4)
    a = synthesize_prediction(change_schedule, 3, profile, np.random.default_rng(5))
    b = synthesize_prediction(change_schedule, 3, profile, np.random.default_rng(5))
    np.testing.assert_array_equal(a.predicted, b.predicted)


def test_window_mean():
    window = PredictionWindow(0, np.array([[1.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_allclose(window.mean, [0.5, 0.5])


def test_indicator_window():
    window = indicator_window(3, [0, 2, 2], 3)
    np.testing.assert_array_equal(window.predicted, [[1, 0, 0], [0, 0, 1], [0, 0, 1]])
    assert PredictionProfile.indicator(2).error_curve == (2.0, 2.0, 2.0)
    with pytest.raises(DimensionError):
        indicator_window(0, [[0, 1]], 2)
