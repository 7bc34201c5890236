"""Experiment orchestration: configs, seed sweeps, trace/summary output and the CLI."""

from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .runner import RunSummary, build_mdp, execute_seed, run_experiment, summarize, write_trace

__all__ = [
    "ConfigError", "ExperimentConfig", "RunSummary", "build_mdp", "config_from_dict", "execute_seed",
    "load_config", "run_experiment", "summarize", "write_trace",
]
