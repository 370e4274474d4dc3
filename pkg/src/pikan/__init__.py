"""Physics-informed KAN and MLP solvers with dynamically bounded adaptive loss weights."""

from pikan._accel import backend
from pikan.approximator import (KanNetwork, MlpNetwork, build_network, init_params,
                                load_params, param_count, save_params)
from pikan.config import ConfigError, ExperimentConfig, load_config
from pikan.dbaw import DbawState, adaptive_total_loss, adaptive_weights, gamma_bound
from pikan.pde import Burgers, Helmholtz, KleinGordon, get_problem
from pikan.trainer import AdamState, adam_step, relative_l2, train

__version__ = "0.1.0"

__all__ = [
    "AdamState", "Burgers", "ConfigError", "DbawState", "ExperimentConfig", "Helmholtz",
    "KanNetwork", "KleinGordon", "MlpNetwork", "adam_step", "adaptive_total_loss",
    "adaptive_weights", "backend", "build_network", "gamma_bound", "get_problem",
    "init_params", "load_config", "load_params", "param_count", "relative_l2", "save_params",
    "train",
]
