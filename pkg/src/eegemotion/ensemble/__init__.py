"""Tree ensembles grown from scratch, their metrics and on-disk container."""

from .forest import (
    MODES,
    ContractError,
    DecisionTree,
    EnsembleSpec,
    TrainingError,
    TreeEnsemble,
    fit,
    gini_importances,
    predict,
)
from .metrics import MetricsReport, binary_metrics, confusion_matrix, evaluate, evaluate_labels
from .modelset import VadModelSet
from .serialize import ModelFormatError
from .sweep import SweepResult, feature_count_sweep, rank_features

__all__ = [
    "MODES",
    "ContractError",
    "DecisionTree",
    "EnsembleSpec",
    "MetricsReport",
    "ModelFormatError",
    "SweepResult",
    "TrainingError",
    "TreeEnsemble",
    "VadModelSet",
    "binary_metrics",
    "confusion_matrix",
    "evaluate",
    "evaluate_labels",
    "feature_count_sweep",
    "fit",
    "gini_importances",
    "predict",
    "rank_features",
]
