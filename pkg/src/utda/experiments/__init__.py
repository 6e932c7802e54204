"""Training harness, diagnostics, baselines and named experiment recipes."""

from .baseline import DenseNet, dense_init, staged_retrain
from .diagnose import SplitReport, diagnose_beta_split
from .recipes import RECIPES, RecipeResult, rows_to_csv, run_recipe
from .training import (REGIMES, FreezeMask, History, TrainConfig, evaluate, fit, predict,
                       step_size_mask, train, train_sparsity_net)

__all__ = [
    "DenseNet", "dense_init", "staged_retrain", "SplitReport", "diagnose_beta_split",
    "RECIPES", "RecipeResult", "rows_to_csv", "run_recipe", "REGIMES", "FreezeMask", "History",
    "TrainConfig", "evaluate", "fit", "predict", "step_size_mask", "train", "train_sparsity_net",
]
