import numpy as np
import pytest

from src.config import ExperimentConfig
from src.model import build_two_queue_preset, two_queue_distribution
from src.state_process import DistributionSchedule


@pytest.fixture(scope="session")
def two_queue():
    return build_two_queue_preset()


@pytest.fixture(scope="session")
def stationary_pi():
    return two_queue_distribution(0.3, 0.6)


@pytest.fixture
def stationary_schedule(stationary_pi):
    return DistributionSchedule.stationary(stationary_pi, 400)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config(tmp_path):
    """A sweep small enough to run inside the unit tests."""
    return ExperimentConfig(
        scenario="tiny",
        schedule="0:0.3:0.6",
        horizon=200,
        controllers=["plc", "bp"],
        v_values=[20],
        e_w_values=[0.0],
        seeds=[0, 1],
        dual_iters=300,
        warm_iters=20,
        out_dir=str(tmp_path / "out"),
    )
