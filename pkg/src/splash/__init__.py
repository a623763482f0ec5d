"""Weighted-sample parallel execution of sequential stochastic algorithms."""

from .engine import (
    ParamDataset,
    Partition,
    SyncReport,
    WeightedSample,
    checkpoint,
    create_dataset,
    map_reduce,
    mean_loss,
    restore,
    run_iteration,
    run_workers,
)
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    FormatError,
    MissingKeyError,
    NumericError,
    ShapeError,
    SplashError,
    UsageError,
)
from .transform import CombineReport, ThreadTransform, combine, identity
from .varset import LocalVarSet, SharedVarSet

__version__ = "0.1.0"

__all__ = [
    "CombineReport",
    "ConfigError",
    "DataError",
    "DomainError",
    "FormatError",
    "LocalVarSet",
    "MissingKeyError",
    "NumericError",
    "ParamDataset",
    "Partition",
    "ShapeError",
    "SharedVarSet",
    "SplashError",
    "SyncReport",
    "ThreadTransform",
    "UsageError",
    "WeightedSample",
    "checkpoint",
    "combine",
    "create_dataset",
    "identity",
    "map_reduce",
    "mean_loss",
    "restore",
    "run_iteration",
    "run_workers",
]
