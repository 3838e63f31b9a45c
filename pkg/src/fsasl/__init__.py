"""Unsupervised feature selection with adaptive global and local structure learning."""

from .data import DataMatrix, Preprocessing, load_dataset, preprocess
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    FsaslError,
    SingularSystemError,
    SolverError,
)
from .evaluation import EvalReport, accuracy, evaluate_ranking, kmeans, maxvar_baseline, nmi
from .solver import FeatureRanking, FsaslConfig, FsaslState, objective, rank_features, run

__version__ = "0.1.0"

__all__ = [
    "DataMatrix",
    "Preprocessing",
    "load_dataset",
    "preprocess",
    "FsaslError",
    "DataError",
    "ConfigError",
    "SolverError",
    "ConvergenceError",
    "SingularSystemError",
    "FsaslConfig",
    "FsaslState",
    "FeatureRanking",
    "run",
    "objective",
    "rank_features",
    "kmeans",
    "accuracy",
    "nmi",
    "evaluate_ranking",
    "maxvar_baseline",
    "EvalReport",
]
