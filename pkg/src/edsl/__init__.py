"""Distributed sparse learning with one gradient exchange per round.

A master machine repeatedly solves an l1-regularized problem on its own
shard, shifted by the difference between the globally averaged gradient
and its local gradient. Workers only ever send gradients.
"""
from .baselines import avg_debias, centralize, local, prox_gd_distributed
from .datagen import SynthConfig, generate, load_text, partition
from .errors import (ConfigError, DataError, DimensionError, EdslError, NumericFailure,
                     ParseError, RoundFailure, TransportError, UndefinedMetricError)
from .kernels import BACKEND
from .model import Dataset, GroundTruth, LossSpec, Shard
from .protocol import LambdaSchedule, run_edsl
from .solver import ShiftedProblem, SolverConfig, SolverReport, solve

__version__ = "0.1.0"

__all__ = [
    "avg_debias", "centralize", "local", "prox_gd_distributed",
    "SynthConfig", "generate", "load_text", "partition",
    "ConfigError", "DataError", "DimensionError", "EdslError", "NumericFailure",
    "ParseError", "RoundFailure", "TransportError", "UndefinedMetricError",
    "BACKEND", "Dataset", "GroundTruth", "LossSpec", "Shard",
    "LambdaSchedule", "run_edsl", "ShiftedProblem", "SolverConfig", "SolverReport", "solve",
]
