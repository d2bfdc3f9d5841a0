"""Extended-target tracking on 2D LiDAR scans.

Particle-based multi-object filtering of rectangular targets, with
per-measurement soft association to the visible structure of each target
(four edges and the interior), a Poisson multi-Bernoulli mixture over the
target set, a matching scan simulator, and GOSPA scoring.
"""

from .dynamics import MotionNoise, RateState
from .errors import (
    ConfigError,
    DegenerateEdgeError,
    DegeneratePoseError,
    EttrackError,
    InvalidExtentError,
    InvalidInputError,
    InvalidParameterError,
    NumericUnderflowError,
    UnsupportedParameterError,
)
from .geometry import ExtentDecomposition, Rect, extent_decompose, rect_from_state
from .measurement import RegionPriors, SensorModel
from .metrics import GospaBreakdown, gospa
from .particles import BirthConfig, ParticleSet, TargetDensity
from .pmbm import (
    BernoulliComponent,
    BirthZone,
    FilterConfig,
    GlobalHypothesis,
    PmbmDensity,
    PoissonComponent,
    extract_estimates,
    predict,
    prune,
    update,
)
from .simulator import ScenarioConfig, VehicleConfig, load_scenario, simulate_sequence

__version__ = "0.1.0"

__all__ = [
    "BernoulliComponent",
    "BirthConfig",
    "BirthZone",
    "ConfigError",
    "DegenerateEdgeError",
    "DegeneratePoseError",
    "EttrackError",
    "ExtentDecomposition",
    "FilterConfig",
    "GlobalHypothesis",
    "GospaBreakdown",
    "InvalidExtentError",
    "InvalidInputError",
    "InvalidParameterError",
    "MotionNoise",
    "NumericUnderflowError",
    "ParticleSet",
    "PmbmDensity",
    "PoissonComponent",
    "RateState",
    "Rect",
    "RegionPriors",
    "ScenarioConfig",
    "SensorModel",
    "TargetDensity",
    "UnsupportedParameterError",
    "VehicleConfig",
    "extent_decompose",
    "extract_estimates",
    "gospa",
    "load_scenario",
    "predict",
    "prune",
    "rect_from_state",
    "simulate_sequence",
    "update",
]
