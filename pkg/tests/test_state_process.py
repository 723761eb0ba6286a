import numpy as np
import pytest

from src.errors import ConfigError, ParameterError
from src.model import two_queue_distribution
from src.state_process import DistributionSchedule, format_two_queue_schedule, parse_two_queue_schedule


def test_parse_change_schedule():
    schedule = parse_two_queue_schedule("0:0.2:0.4, 2500:0.3:0.6", 5000)
    assert schedule.change_points == (2500,)
    assert schedule.num_states == 16
    np.testing.assert_allclose(schedule.distribution_at(2499), two_queue_distribution(0.2, 0.4))
    np.testing.assert_allclose(schedule.distribution_at(2500), two_queue_distribution(0.3, 0.6))


def test_schedule_string_round_trip():
    segments = [(0, 0.2, 0.4), (2500, 0.3, 0.6)]
    text = format_two_queue_schedule(segments)
    assert text == "0:0.2:0.4,2500:0.3:0.6"
    assert parse_two_queue_schedule(text, 5000).starts == (0, 2500)


@pytest.mark.parametrize("text", ["", "0:0.3", "a:0.1:0.1", "0:0.3:1.2", "10:0.3:0.6", "0:0.1:0.1,0:0.2:0.2"])
def test_bad_schedules(text):
    with pytest.raises(ConfigError):
        parse_two_queue_schedule(text, 100)


def test_schedule_validation():
    pi = two_queue_distribution(0.3, 0.6)
    with pytest.raises(ParameterError):
        DistributionSchedule((0, 5), (pi,), 10)
    with pytest.raises(ParameterError):
        DistributionSchedule.stationary(pi, 0)
    with pytest.raises(ParameterError):
        DistributionSchedule.stationary(pi, 10).distribution_at(-1)


def test_change_points_beyond_horizon_are_ignored():
    pi = two_queue_distribution(0.3, 0.6)
    schedule = DistributionSchedule.from_segments([(0, pi), (50, pi), (200, pi)], 100)
    assert schedule.change_points == (50,)


def test_slots_past_horizon_keep_last_law():
    schedule = parse_two_queue_schedule("0:0.2:0.4,50:0.3:0.6", 100)
    np.testing.assert_array_equal(schedule.distribution_at(10_000), schedule.distributions[-1])


def test_sampling_follows_segments(rng):
    left = np.zeros(4)
    left[0] = 1.0
    right = np.zeros(4)
    right[3] = 1.0
    schedule = DistributionSchedule.from_segments([(0, left), (5, right)], 10)
    states = schedule.sample_states(rng)
    assert states.tolist() == [0] * 5 + [3] * 5
    assert schedule.sample_states(rng, 3).tolist() == [0, 0, 0]


def test_caller_arrays_are_not_frozen():
    pi = two_queue_distribution(0.3, 0.6)
    DistributionSchedule.stationary(pi, 10)
    pi[0] = pi[0]
