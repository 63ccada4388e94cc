"""Stacked survival models with IPCW Brier-score weights."""

__version__ = "0.1.0"

from .aft_models import AftFit, fit_aft, predict_aft
from .censor_weights import build_weight_table, kaplan_meier, km_censoring
from .cox_model import CoxFit, fit_cox, predict_cox
from .exceptions import (CandidateFitError, ConfigError, ConvergenceError, DataError,
                         NoOobTreesError, SeparationError, SurvStackError)
from .stacker import (CandidateSpec, StackConfig, StackedModel, default_candidates, fit_stack,
                      predict_stack, select_by_cv)
from .surv_core import SurvivalDataset, TimeGrid
from .surv_forest import ForestConfig, SurvivalForest, fit_forest, predict_forest

__all__ = [
    "__version__",
    "AftFit", "fit_aft", "predict_aft",
    "CoxFit", "fit_cox", "predict_cox",
    "ForestConfig", "SurvivalForest", "fit_forest", "predict_forest",
    "CandidateSpec", "StackConfig", "StackedModel", "default_candidates", "fit_stack",
    "predict_stack", "select_by_cv",
    "SurvivalDataset", "TimeGrid", "kaplan_meier", "km_censoring", "build_weight_table",
    "SurvStackError", "DataError", "ConfigError", "ConvergenceError", "SeparationError",
    "NoOobTreesError", "CandidateFitError",
]
