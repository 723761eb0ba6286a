import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.errors import DimensionError, DomainError, ParameterError
from src.model import (ActionOutcome, SystemModel, TwoQueueAction, TwoQueueState, as_distribution,
                       build_two_queue_preset, evaluate_action, is_distribution, project_to_simplex,
                       queue_update, total_variation, two_queue_distribution)


def _distribution(size):
    return st.lists(st.floats(0.0, 1.0), min_size=size, max_size=size).filter(lambda xs: sum(xs) > 1e-6).map(
        lambda xs: np.asarray(xs) / sum(xs))


@given(_distribution(5), _distribution(5), _distribution(5))
def test_total_variation_is_a_metric(p, q, r):
    assert total_variation(p, q) == pytest.approx(total_variation(q, p))
    assert 0.0 <= total_variation(p, q) <= 2.0 + 1e-12
    assert total_variation(p, p) == 0.0
    assert total_variation(p, r) <= total_variation(p, q) + total_variation(q, r) + 1e-12


def test_total_variation_examples():
    assert total_variation([1, 0], [0, 1]) == 2.0
    assert total_variation([0.5, 0.5], [0.3, 0.7]) == pytest.approx(0.4)


def test_total_variation_shape_mismatch():
    with pytest.raises(DimensionError):
        total_variation([0.5, 0.5], [1.0, 0.0, 0.0])


@given(st.lists(st.floats(-5.0, 5.0), min_size=1, max_size=20))
def test_simplex_projection_lands_on_simplex(values):
    out = project_to_simplex(np.asarray(values))
    assert is_distribution(out)


def test_simplex_projection_keeps_distributions():
    p = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(project_to_simplex(p), p)


def test_simplex_projection_row_wise():
    rows = np.array([[2.0, 0.0], [0.5, 0.5]])
    np.testing.assert_allclose(project_to_simplex(rows), [[1.0, 0.0], [0.5, 0.5]])


def test_as_distribution_rejects_bad_vectors():
    with pytest.raises(ParameterError):
        as_distribution([0.5, 0.6])
    with pytest.raises(ParameterError):
        as_distribution([1.5, -0.5])
    with pytest.raises(DimensionError):
        as_distribution([0.5, 0.5], size=3)


@given(st.lists(st.floats(0.0, 50.0), min_size=2, max_size=2),
       st.lists(st.floats(0.0, 2.0), min_size=2, max_size=2),
       st.lists(st.floats(0.0, 2.0), min_size=2, max_size=2))
def test_queue_update_stays_nonnegative(q, arrivals, services):
    out = queue_update(q, ActionOutcome(0.0, tuple(arrivals), tuple(services)))
    assert np.all(out >= 0)
    np.testing.assert_allclose(out, np.maximum(np.asarray(q) - services + np.asarray(arrivals), 0.0))


def test_queue_update_examples():
    np.testing.assert_allclose(queue_update([3, 0], ActionOutcome(1.0, (1, 0), (2, 1))), [2, 0])


def test_two_queue_preset_layout(two_queue):
    assert two_queue.num_states == 16
    assert two_queue.max_actions == 6
    assert two_queue.states[0] == TwoQueueState(0, 0, 0, 1)
    assert two_queue.states[15] == TwoQueueState(1, 1, 1, 2)
    assert two_queue.actions(0)[0] == TwoQueueAction(1, 0)
    assert two_queue.actions(0)[5] == TwoQueueAction(2, 2)


def test_two_queue_evaluate_action(two_queue):
    out = evaluate_action(two_queue, TwoQueueState(1, 1, 1, 2), TwoQueueAction(1, 2))
    assert out.cost == 2.0
    assert out.arrivals == (1.0, 1.0)
    assert out.services == pytest.approx((math.log(3.0), 0.0))
    out = two_queue.evaluate_action(TwoQueueState(0, 1, 0, 2), TwoQueueAction(2, 2))
    assert out.services == pytest.approx((0.0, math.log(5.0)))
    assert out.drift == pytest.approx((0.0, 1.0 - math.log(5.0)))


def test_zero_channel_gives_no_service(two_queue):
    out = two_queue.evaluate_action(TwoQueueState(0, 0, 0, 1), TwoQueueAction(1, 2))
    assert out.services == (0.0, 0.0)
    assert out.cost == 2.0


def test_unknown_state_and_action(two_queue):
    with pytest.raises(DomainError):
        two_queue.state_index(TwoQueueState(2, 0, 0, 1))
    with pytest.raises(DomainError):
        two_queue.evaluate_action(TwoQueueState(0, 0, 0, 1), TwoQueueAction(3, 0))


def test_tables_are_read_only(two_queue):
    with pytest.raises(ValueError):
        two_queue.cost_table[0, 0] = 5.0


def test_model_rejects_values_beyond_delta_max():
    with pytest.raises(ParameterError):
        SystemModel(["s"], [["a"]], 1, lambda s, a: 3.0, lambda s, a, j: 0.0, lambda s, a, j: 0.0, 2.0)


def test_model_pads_uneven_action_sets():
    model = SystemModel(["s0", "s1"], [["a"], ["a", "b"]], 1,
                        lambda s, a: 1.0, lambda s, a, j: 0.5, lambda s, a, j: 1.0 if a == "b" else 0.0, 1.0)
    assert model.max_actions == 2
    assert not model.action_mask[0, 1]
    assert math.isinf(model.cost_table[0, 1])
    with pytest.raises(DomainError):
        model.outcome(0, 1)


def test_two_queue_distribution_product_law():
    pi = two_queue_distribution(0.2, 0.4)
    assert pi.sum() == pytest.approx(1.0)
    assert pi[15] == pytest.approx(0.2 * 0.4 * 0.25)
    assert pi[0] == pytest.approx(0.8 * 0.6 * 0.25)


@settings(max_examples=30)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_two_queue_distribution_is_valid(p1, p2):
    assert is_distribution(two_queue_distribution(p1, p2))


def test_two_queue_distribution_rejects_bad_rates():
    with pytest.raises(ParameterError):
        two_queue_distribution(1.2, 0.1)


def test_alternative_channel_alphabet():
    model = build_two_queue_preset(channel_values=((0,), (0,)))
    assert model.num_states == 4
    assert not np.any(model.service_table)
    pi = two_queue_distribution(0.3, 0.6, channel_values=((0,), (0,)))
    assert pi.shape == (4,)
