"""Decide between pretraining data recipes from small-scale experiments.

Pipeline: item records -> proxy metrics -> single-scale rankings or
scaling-law extrapolations -> pairwise decision accuracy against the
target-scale gold ranking, with compute budgets for every prediction.
"""

__version__ = "0.1.0"

from .budget import BudgetReport, budget_of_prediction, flops, percent_of_target
from .decision import (
    DecisionReport,
    GoldRanking,
    Prediction,
    decision_accuracy,
    fit_recipe,
    gold_targets,
    predict_multi_scale,
    prediction_error,
    rank_single_scale,
    seed_attempts,
)
from .ingest import (
    CheckpointKey,
    Choice,
    ItemScoreRecord,
    MetricPoint,
    ModelConfig,
    SuiteManifest,
    coverage_report,
    parse_item_records,
    parse_manifest,
    read_metric_points,
    write_metric_points,
)
from .metrics import ALL_METRICS, NormalizationMode, choice_prob, compute_all, compute_metric
from .scaling import (
    VARIANTS,
    FitChain,
    FitResult,
    fit_acc_curve,
    fit_chain,
    fit_loss_curve,
    fit_single_step,
    predict_at_target,
    size_subsets,
    smooth_final_loss,
)

__all__ = [
    "ALL_METRICS",
    "BudgetReport",
    "CheckpointKey",
    "Choice",
    "DecisionReport",
    "FitChain",
    "FitResult",
    "GoldRanking",
    "ItemScoreRecord",
    "MetricPoint",
    "ModelConfig",
    "NormalizationMode",
    "Prediction",
    "SuiteManifest",
    "VARIANTS",
    "budget_of_prediction",
    "choice_prob",
    "compute_all",
    "compute_metric",
    "coverage_report",
    "decision_accuracy",
    "fit_acc_curve",
    "fit_chain",
    "fit_loss_curve",
    "fit_recipe",
    "fit_single_step",
    "flops",
    "gold_targets",
    "parse_item_records",
    "parse_manifest",
    "percent_of_target",
    "predict_at_target",
    "predict_multi_scale",
    "prediction_error",
    "rank_single_scale",
    "read_metric_points",
    "seed_attempts",
    "size_subsets",
    "smooth_final_loss",
    "write_metric_points",
]
