import numpy as np
import pytest

from colift.cli_config import default_scenario_path, load_config
from colift.robot_model import RobotModel


@pytest.fixture(scope="session")
def default_cfg():
    return load_config(default_scenario_path())


@pytest.fixture(scope="session")
def model(default_cfg):
    return RobotModel(default_cfg.robot)


@pytest.fixture()
def rng():
    return np.random.default_rng(7)
