"""Renewable capacity installation under jump-driven capacity factors and demand."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("renewcap")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.0.0"

from .bsde import BsdeProblem, BsdeSolution, BsdeTrainConfig, solve_bsde
from .config import ConfigError, ExperimentConfig, load_config
from .control import ControlResult, ControlTrainConfig, rollout_loss, train_policy
from .model import (FeedbackPolicy, ModelParams, SystemState, ThresholdPolicy, TimeGrid,
                    discounted_mean_demand, mean_demand, no_jump_solution)
from .rng import RngStream
from .selector import SelectorResult, build_grid, select_threshold
from .simulate import McEstimate, PathBundle, mc_cost, simulate_exact_latent, simulate_paths

__all__ = [
    "BsdeProblem", "BsdeSolution", "BsdeTrainConfig", "ConfigError", "ControlResult",
    "ControlTrainConfig", "ExperimentConfig", "FeedbackPolicy", "McEstimate", "ModelParams",
    "PathBundle", "RngStream", "SelectorResult", "SystemState", "ThresholdPolicy", "TimeGrid",
    "build_grid", "discounted_mean_demand", "load_config", "mc_cost", "mean_demand",
    "no_jump_solution", "rollout_loss", "select_threshold", "simulate_exact_latent",
    "simulate_paths", "solve_bsde", "train_policy",
]
