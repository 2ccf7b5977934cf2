"""Secure rate-splitting multiple access aided by a STAR-RIS.

Joint transmit beamforming and surface optimization under max-min fairness
with internal and external eavesdroppers, plus baselines and sweep tooling.
"""
from .baselines import SchemeId, run_scheme, solve_scheme
from .channel import ChannelSet, generate
from .config import SystemConfig
from .errors import ConfigurationError, NumericError
from .model import BeamSolution, RateReport, StarState, check_feasibility, rates
from .optimizer import OptimizerSettings, optimize

__all__ = [
    "BeamSolution",
    "ChannelSet",
    "ConfigurationError",
    "NumericError",
    "OptimizerSettings",
    "RateReport",
    "SchemeId",
    "StarState",
    "SystemConfig",
    "check_feasibility",
    "generate",
    "optimize",
    "rates",
    "run_scheme",
    "solve_scheme",
]
__version__ = "0.1.0"
