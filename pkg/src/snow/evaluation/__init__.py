"""Outcome-prediction harness used to compare feature sets."""

from .cv import (
    CvConfig,
    FoldResult,
    LeakageError,
    LeakageGuard,
    NestedCvResult,
    StratificationError,
    TextFeatures,
    nested_cv,
    stratified_folds,
)
from .logreg import LogRegFit, ModelConfig, default_lambda_grid, fit_logreg
from .metrics import UndefinedAucError, auc_roc
from .preprocess import MeanImputer, mean_impute_apply, mean_impute_fit, standardize_apply, standardize_fit
from .report import AucReport, SeedFailure, permuted_labels, repeat_seeds, write_reports

__all__ = [
    "AucReport",
    "CvConfig",
    "FoldResult",
    "LeakageError",
    "LeakageGuard",
    "LogRegFit",
    "MeanImputer",
    "ModelConfig",
    "NestedCvResult",
    "SeedFailure",
    "StratificationError",
    "TextFeatures",
    "UndefinedAucError",
    "auc_roc",
    "default_lambda_grid",
    "fit_logreg",
    "mean_impute_apply",
    "mean_impute_fit",
    "nested_cv",
    "permuted_labels",
    "repeat_seeds",
    "standardize_apply",
    "standardize_fit",
    "stratified_folds",
    "write_reports",
]
