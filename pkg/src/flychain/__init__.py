"""State-estimation workbench for planar free-flying open kinematic chains.

Simulates the multibody ground truth with noisy IMU/encoder sensing, runs
five estimator architectures (full-dynamics EKF/UKF, decoupled-estimator
cascades, and the ballistic multibody estimator), and benchmarks accuracy
under bounded parameter uncertainty along with per-step compute cost.
"""

from .chain import (
    ChainParameters,
    ControlInput,
    DynamicsError,
    FullState,
    PostureState,
)
from .config import ConfigError, RunConfig, default_config, load_config
from .estimators import KINDS, EstimatorConfig, FullEstimate
from .filters import FilterError, GaussianBelief, SigmaScaling
from .simulation import (
    NoiseSpec,
    ParameterUncertainty,
    SensorSample,
    SimulationError,
    TrajectorySpec,
    TruthRecord,
    WorldConfig,
)

__version__ = "0.1.0"

__all__ = [
    "ChainParameters",
    "ConfigError",
    "ControlInput",
    "DynamicsError",
    "EstimatorConfig",
    "FilterError",
    "FullEstimate",
    "FullState",
    "GaussianBelief",
    "KINDS",
    "NoiseSpec",
    "ParameterUncertainty",
    "PostureState",
    "RunConfig",
    "SensorSample",
    "SigmaScaling",
    "SimulationError",
    "TrajectorySpec",
    "TruthRecord",
    "WorldConfig",
    "default_config",
    "load_config",
    "__version__",
]
