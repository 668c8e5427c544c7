"""Boruta feature selection with random-forest and noise-augmented neural importance."""

__version__ = "0.1.0"

from .boruta_classic import BorutaConfig, binomial_decision, binomial_tails, run_boruta
from .boruta_noise import NoiseBorutaConfig, run_noise_boruta
from .dataset import (DataError, Dataset, FeatureStats, SplitSpec, compute_stats, impute_mean,
                      load_csv, normalize, stratified_split, synthesize, write_csv)
from .forest import ForestModel, fit_forest, oob_importance, predict_forest, zscore_importance
from .neural import (MlpModel, MlpSpec, TrainingDiverged, f1_score, perturbation_importance,
                     predict, predict_proba, train_mlp)
from .selection import IMPORTANT, TENTATIVE, UNIMPORTANT, SelectionResult, selected_features
from .shadow import ShadowSet, noise_shadows, permuted_shadows
from .stats import (EntropyRecord, TestResult, mann_whitney_u, prediction_entropy, shapiro_wilk,
                    t_test_two_sample)

__all__ = [
    "BorutaConfig", "binomial_decision", "binomial_tails", "run_boruta",
    "NoiseBorutaConfig", "run_noise_boruta",
    "DataError", "Dataset", "FeatureStats", "SplitSpec", "compute_stats", "impute_mean",
    "load_csv", "normalize", "stratified_split", "synthesize", "write_csv",
    "ForestModel", "fit_forest", "oob_importance", "predict_forest", "zscore_importance",
    "MlpModel", "MlpSpec", "TrainingDiverged", "f1_score", "perturbation_importance",
    "predict", "predict_proba", "train_mlp",
    "IMPORTANT", "TENTATIVE", "UNIMPORTANT", "SelectionResult", "selected_features",
    "ShadowSet", "noise_shadows", "permuted_shadows",
    "EntropyRecord", "TestResult", "mann_whitney_u", "prediction_entropy", "shapiro_wilk",
    "t_test_two_sample",
]
