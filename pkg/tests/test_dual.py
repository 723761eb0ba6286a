import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.dual import (DualSolverParams, Multiplier, deterministic_optimum, dual_value, expected_drift,
                      grid_oracle, multiplier_cap, optimality_check, oracle_grid_max, per_state_dual,
                      solve_multiplier, track_multiplier, verify_slack)
from src.errors import DimensionError, ParameterError
from src.model import SystemModel, TwoQueueState, build_two_queue_preset, two_queue_distribution

DEAD_CHANNELS = ((0,), (0,))


@pytest.fixture(scope="module")
def dead_channel_model():
    return build_two_queue_preset(channel_values=DEAD_CHANNELS)


def test_multiplier_must_be_nonnegative():
    with pytest.raises(ParameterError):
        Multiplier((1.0, -0.5))
    assert Multiplier.zeros(3).gamma == (0.0, 0.0, 0.0)


def test_solver_params_validation():
    with pytest.raises(ParameterError):
        DualSolverParams(V=0.5)
    with pytest.raises(ParameterError):
        DualSolverParams(V=10, warm_iters=0)
    assert DualSolverParams(V=20).cap == pytest.approx(20 * math.log(20))


def test_per_state_dual_picks_max_weight_action(two_queue):
    value, k = per_state_dual(two_queue, TwoQueueState(1, 1, 1, 2), Multiplier((100.0, 0.0)), 20)
    assert k == 2  # serve queue 1 with P=2
    assert value == pytest.approx(40 + 100 * (1 - math.log(3)))


def test_per_state_dual_accepts_indices(two_queue):
    by_state = per_state_dual(two_queue, TwoQueueState(0, 1, 0, 2), (3.0, 40.0), 10)
    by_index = per_state_dual(two_queue, two_queue.state_index(TwoQueueState(0, 1, 0, 2)), (3.0, 40.0), 10)
    assert by_state == by_index
    with pytest.raises(ParameterError):
        per_state_dual(two_queue, 99, (0.0, 0.0), 10)


def test_zero_multiplier_dual_is_zero(two_queue, stationary_pi):
    # with gamma = 0 the cheapest action costs nothing
    assert dual_value(two_queue, (0.0, 0.0), stationary_pi, 50) == 0.0


def test_dual_value_checks_lengths(two_queue, stationary_pi):
    with pytest.raises(DimensionError):
        dual_value(two_queue, (1.0, 2.0, 3.0), stationary_pi, 10)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 200.0), min_size=2, max_size=2),
       st.lists(st.floats(0.0, 200.0), min_size=2, max_size=2),
       st.floats(0.0, 1.0), st.floats(1.0, 300.0))
def test_dual_is_concave(a, b, lam, V):
    model = build_two_queue_preset()
    pi = two_queue_distribution(0.3, 0.6)
    a, b = np.asarray(a), np.asarray(b)
    mid = dual_value(model, lam * a + (1 - lam) * b, pi, V)
    chord = lam * dual_value(model, a, pi, V) + (1 - lam) * dual_value(model, b, pi, V)
    assert mid >= chord - 1e-7 * (1 + abs(chord))


def test_expected_drift_is_a_supergradient(two_queue, stationary_pi):
    gamma = np.array([30.0, 12.0])
    sub = expected_drift(two_queue, gamma, stationary_pi, 20)
    g0 = dual_value(two_queue, gamma, stationary_pi, 20)
    rng = np.random.default_rng(0)
    for other in rng.uniform(0, 60, size=(50, 2)):
        assert dual_value(two_queue, other, stationary_pi, 20) <= g0 + sub @ (other - gamma) + 1e-9


def test_solver_matches_grid_oracle(two_queue, stationary_pi):
    V = 20.0
    solved = solve_multiplier(two_queue, stationary_pi, DualSolverParams(V=V))
    lp = deterministic_optimum(two_queue, stationary_pi, V)
    grid = grid_oracle(two_queue, stationary_pi, V, oracle_grid_max(V, lp.multiplier), 0.25)
    assert not solved.capped
    # the optimum sits beyond 2V on the first queue
    assert max(lp.multiplier.gamma) > 2 * V
    assert np.max(np.abs(solved.multiplier.as_array() - grid.multiplier.as_array())) <= 0.5
    assert solved.value >= grid.value - 0.05 * abs(grid.value)
    assert grid.plateau_points >= 1


@pytest.mark.slow
def test_solver_matches_grid_oracle_large_v(two_queue, stationary_pi):
    V = 100.0
    solved = solve_multiplier(two_queue, stationary_pi, DualSolverParams(V=V))
    lp = deterministic_optimum(two_queue, stationary_pi, V)
    grid = grid_oracle(two_queue, stationary_pi, V, oracle_grid_max(V, lp.multiplier), 0.25)
    assert np.max(np.abs(solved.multiplier.as_array() - grid.multiplier.as_array())) <= 0.5


def test_oracle_grid_max():
    assert oracle_grid_max(20.0) == 40.0
    assert oracle_grid_max(20.0, (10.0, 30.0)) == 40.0
    assert oracle_grid_max(20.0, Multiplier((49.0, 31.0))) == pytest.approx(61.25)


@pytest.mark.parametrize("V", [20.0, 100.0])
def test_warm_start_reaches_new_optimum(two_queue, V):
    before, after = two_queue_distribution(0.2, 0.4), two_queue_distribution(0.3, 0.6)
    params = DualSolverParams(V=V)
    old = solve_multiplier(two_queue, before, params)
    cold = solve_multiplier(two_queue, after, params)
    warm = solve_multiplier(two_queue, after, params, warm_start=old.multiplier)
    assert np.max(np.abs(old.multiplier.as_array() - cold.multiplier.as_array())) > 10
    assert np.max(np.abs(warm.multiplier.as_array() - cold.multiplier.as_array())) <= 1.0
    assert warm.value >= cold.value - 1e-4 * abs(cold.value)


def test_tracking_takes_small_steps(two_queue, stationary_pi):
    params = DualSolverParams(V=20.0, warm_iters=50)
    cold = solve_multiplier(two_queue, stationary_pi, params)
    tracked = track_multiplier(two_queue, stationary_pi, params, cold.multiplier)
    assert tracked.iterations <= 50
    assert tracked.value >= cold.value - 1e-6 * abs(cold.value) - 1e-9


def test_unbounded_dual_is_capped(dead_channel_model):
    pi = two_queue_distribution(0.3, 0.6, channel_values=DEAD_CHANNELS)
    result = solve_multiplier(dead_channel_model, pi, DualSolverParams(V=20.0))
    assert result.capped
    assert result.multiplier.gamma == pytest.approx((multiplier_cap(20.0),) * 2)


def test_grid_oracle_is_lexicographic_on_plateau():
    # zero cost and zero drift: every lattice point is a maximiser
    model = SystemModel(["s"], [["a"]], 2, lambda s, a: 0.0, lambda s, a, j: 0.0, lambda s, a, j: 0.0, 1.0)
    result = grid_oracle(model, [1.0], 10.0, 1.0, 0.5)
    assert result.multiplier.gamma == (0.0, 0.0)
    assert result.plateau_points == 9


def test_grid_oracle_refuses_many_queues():
    model = SystemModel(["s"], [["a"]], 4, lambda s, a: 0.0, lambda s, a, j: 0.0, lambda s, a, j: 0.0, 1.0)
    with pytest.raises(ParameterError):
        grid_oracle(model, [1.0], 10.0, 1.0, 0.5)


def test_verify_slack(two_queue, stationary_pi, dead_channel_model):
    feasible = verify_slack(two_queue, stationary_pi, samples=2000, rng=np.random.default_rng(1))
    assert feasible.feasible
    assert feasible.slack < 0
    pi = two_queue_distribution(0.3, 0.6, channel_values=DEAD_CHANNELS)
    infeasible = verify_slack(dead_channel_model, pi, samples=500, rng=np.random.default_rng(1))
    assert not infeasible.feasible
    assert infeasible.slack == pytest.approx(0.6)


def test_deterministic_optimum(two_queue, stationary_pi, dead_channel_model):
    lp = deterministic_optimum(two_queue, stationary_pi, 20.0)
    assert lp.feasible
    assert lp.cost > 0
    assert all(g >= 0 for g in lp.multiplier.gamma)
    pi = two_queue_distribution(0.3, 0.6, channel_values=DEAD_CHANNELS)
    assert not deterministic_optimum(dead_channel_model, pi, 20.0).feasible


def test_optimal_cost_is_dual_value_over_v(two_queue, stationary_pi):
    check = optimality_check(two_queue, stationary_pi, DualSolverParams(V=20.0))
    assert check.matches == "g*/V"
    assert check.g_star_over_v == pytest.approx(check.lp_cost, rel=1e-5, abs=1e-7)
