from .ais import AisConfig, AisResult, ais_log_partition, base_visible_bias
from .bias import BiasBenchConfig, BiasResult, bias_experiment, bootstrap_median_diff
from .classifier import LogisticHead, classifier_accuracy, classifier_head_train
from .metrics import (
    EvalReport,
    avg_log_prob,
    empirical_distribution,
    kl_divergence,
    model_visible_distribution,
    moving_average,
)
from .sweep import SweepPoint, SweepSpec, noise_sweep, grid_25, run_point
from ..training import ml_train

__all__ = [
    "AisConfig", "AisResult", "ais_log_partition", "base_visible_bias",
    "BiasBenchConfig", "BiasResult", "bias_experiment", "bootstrap_median_diff",
    "LogisticHead", "classifier_accuracy", "classifier_head_train",
    "EvalReport", "avg_log_prob", "empirical_distribution", "kl_divergence",
    "model_visible_distribution", "moving_average",
    "SweepPoint", "SweepSpec", "noise_sweep", "grid_25", "run_point", "ml_train",
]
