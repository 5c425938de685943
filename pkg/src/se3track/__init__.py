"""UAV-borne OFDM MIMO radar target tracking on the rigid-body motion group,
with a recursive estimation-error bound and bound-driven control design."""

__version__ = "0.1.0"

from .se3 import Pose, adjoint, exp_map, log_map, right_jacobian, right_minus, right_plus
from .waveform import PhysicalParams, ReGrid, UpaConfig
from .ekf import FilterState, RadarModel, predict, predict_params, update
from .cpcrb import FimState, cpcrb_params, cpcrb_pose, fim_step, process_noise_prime
from .control import ConstraintSet, optimize_control
from .scenario import ScenarioConfig, monte_carlo, run_episode

__all__ = [
    "__version__",
    "Pose", "adjoint", "exp_map", "log_map", "right_jacobian", "right_minus",
    "right_plus", "PhysicalParams", "ReGrid", "UpaConfig", "FilterState",
    "RadarModel", "predict", "predict_params", "update", "FimState",
    "cpcrb_params", "cpcrb_pose", "fim_step", "process_noise_prime",
    "ConstraintSet", "optimize_control", "ScenarioConfig", "monte_carlo",
    "run_episode",
]
