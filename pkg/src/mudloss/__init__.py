"""Probabilistic mud-loss prediction: exact GP regression with uncertainty
bands, L-BFGS hyperparameter fitting, and LIME-based feature importance."""

__version__ = "0.1.0"

from .data import ColumnSchema, Dataset, ScalingParams, SplitSpec
from .gp import KernelHyperparams, LogParams, Prediction, TrainedGP
from .lime import GlobalImportanceReport, LimeConfig, LocalExplanation

__all__ = [
    "__version__",
    "ColumnSchema",
    "Dataset",
    "ScalingParams",
    "SplitSpec",
    "KernelHyperparams",
    "LogParams",
    "Prediction",
    "TrainedGP",
    "GlobalImportanceReport",
    "LimeConfig",
    "LocalExplanation",
]
