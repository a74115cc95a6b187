"""Concurrent-learning output-feedback parameter and state estimation.

Identifies the matrices of a second-order linear system and reconstructs its
velocity from position measurements alone, by double-integrating the dynamics
into a derivative-free linear error system, recording informative windows in
a minimum-eigenvalue-maximizing history stack, and running a least-squares
concurrent-learning update that converges after finite excitation.
"""

from .estimator import Estimator, EstimatorConfig, NumericalError
from .harness import (
    ControllerConfig,
    PRESET_NAMES,
    RunConfig,
    RunResult,
    RunSummary,
    preset,
    run,
)
from .history import HistoryStack
from .linalg import kron_row_block, min_eigenvalue_symmetric, theta_split, vectorize
from .observer import Observer, ObserverConfig
from .plant import (
    NoiseModel,
    PlantParams,
    PlantState,
    desired_trajectory,
    euler_step,
    measure,
    reference_plant,
    tracking_control,
    true_theta,
)
from .windows import Regressor, SampleBuffer, WindowConfig, build_regressor

__version__ = "0.1.0"

__all__ = [
    "ControllerConfig",
    "Estimator",
    "EstimatorConfig",
    "HistoryStack",
    "NoiseModel",
    "NumericalError",
    "Observer",
    "ObserverConfig",
    "PRESET_NAMES",
    "PlantParams",
    "PlantState",
    "Regressor",
    "RunConfig",
    "RunResult",
    "RunSummary",
    "SampleBuffer",
    "WindowConfig",
    "build_regressor",
    "desired_trajectory",
    "euler_step",
    "kron_row_block",
    "measure",
    "min_eigenvalue_symmetric",
    "preset",
    "reference_plant",
    "run",
    "theta_split",
    "tracking_control",
    "true_theta",
    "vectorize",
]
