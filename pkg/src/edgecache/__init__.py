"""Cooperative edge caching simulator with actor-critic learners and classic baselines."""
from .caching import Policy
from .config import ExperimentConfig, desk_config, load_config, paper_config
from .experiments import run_beta_sweep, run_cache_ratio_sweep, run_drift_experiment, run_single
from .marl import Hyperparams, MarlTrainer, train
from .sim import Environment

__all__ = [
    "Environment", "ExperimentConfig", "Hyperparams", "MarlTrainer", "Policy", "desk_config",
    "load_config", "paper_config", "run_beta_sweep", "run_cache_ratio_sweep", "run_drift_experiment",
    "run_single", "train",
]
__version__ = "0.1.0"
