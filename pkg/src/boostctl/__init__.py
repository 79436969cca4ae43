"""Averaged boost-converter simulation with PI, ANN and PPO controllers."""
from .converter import (BoostConverterEnv, ConverterParams, ConverterState, EpisodeSpec,
                        InputProfile, equilibrium, get_params, integrate_step, reward_step)
from .errors import ConfigurationError, DimensionError, NumericalBlowupError, UsageError
from .kernels import BACKEND
from .metrics import StepMetrics, Trajectory, mae, step_metrics
from .nn import MLP
from .pi import PIController, PIGains
from .simulate import ScenarioConfig, run_closed_loop

__version__ = "0.1.0"

__all__ = ["BACKEND", "BoostConverterEnv", "ConfigurationError", "ConverterParams",
           "ConverterState", "DimensionError", "EpisodeSpec", "InputProfile", "MLP",
           "NumericalBlowupError", "PIController", "PIGains", "ScenarioConfig", "StepMetrics",
           "Trajectory", "UsageError", "equilibrium", "get_params", "integrate_step", "mae",
           "reward_step", "run_closed_loop", "step_metrics"]
