"""Shared-load carrying for a mobile manipulator.

The package covers the full pipeline for carrying a long object together
with a human partner: online estimation of the payload's effective inertial
parameters from wrist wrench measurements, excitation trajectories that
perturb the object about the partner's grasp, a task-priority whole-body
controller for a nonholonomic mobile base with a 7-DoF arm, and an
impedance law whose apparent inertia accounts for the carried object.
"""

from .errors import (
    ColiftError,
    ConfigError,
    FrameError,
    IntegrationDiverged,
    NumericalError,
    SchemaError,
    SolverError,
)

__version__ = "0.1.0"

from .estimator import EkfTuning, InertialParamEkf, run_estimation_benchmark  # noqa: E402
from .object_dynamics import (  # noqa: E402
    InertialParams,
    from_point_masses,
    newton_euler_wrench,
    regressor,
)
from .robot_model import RobotDescription, RobotModel  # noqa: E402
from .simulator import (  # noqa: E402
    ObjectSpec,
    ScenarioConfig,
    SimLog,
    run_scenario,
    summarize,
)

__all__ = [
    "ColiftError",
    "ConfigError",
    "EkfTuning",
    "FrameError",
    "InertialParamEkf",
    "InertialParams",
    "IntegrationDiverged",
    "NumericalError",
    "ObjectSpec",
    "RobotDescription",
    "RobotModel",
    "ScenarioConfig",
    "SchemaError",
    "SimLog",
    "SolverError",
    "from_point_masses",
    "newton_euler_wrench",
    "regressor",
    "run_estimation_benchmark",
    "run_scenario",
    "summarize",
    "__version__",
]
