"""Experiment orchestration: metrics, configs, the CSV runner and plots."""
from .config import (METHODS, ExperimentConfig, FileData, desk_scale, from_dict,
                     load_config)
from .metrics import classification_error, estimation_errors, normalized_mse
from .plots import emit_plots
from .runner import (HEADER, MetricRow, prepare_trial, run_experiment, run_trial,
                     worker_shard)

__all__ = [
    "METHODS", "ExperimentConfig", "FileData", "desk_scale", "from_dict", "load_config",
    "classification_error", "estimation_errors", "normalized_mse", "emit_plots",
    "HEADER", "MetricRow", "prepare_trial", "run_experiment", "run_trial", "worker_shard",
]
