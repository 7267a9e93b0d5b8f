"""Evaluation: subject-level folds, metrics, ROC/DeLong and group statistics."""

from .cv import EvalReport, FoldPlan, FoldResult, cross_validate, make_subject_folds, pooled_scores, report_from_dict, subject_scores
from .effects import EFFECT_COLUMNS, effect_table, effect_table_csv, write_effect_table
from .metrics import ConfusionMatrix, DelongResult, Metrics, delong_test, metrics, placements, roc_auc, roc_curve
from .stats import (
    betainc,
    cohens_d,
    normal_cdf,
    power_monte_carlo,
    power_two_sample,
    t_cdf,
    t_sf,
    welch_t,
)

__all__ = [
    "ConfusionMatrix", "DelongResult", "EFFECT_COLUMNS", "effect_table", "effect_table_csv",
    "write_effect_table", "EvalReport", "FoldPlan", "FoldResult", "Metrics",
    "betainc", "cohens_d", "cross_validate", "delong_test", "make_subject_folds", "metrics",
    "normal_cdf", "placements", "pooled_scores", "power_monte_carlo", "power_two_sample",
    "report_from_dict", "subject_scores", "roc_auc", "roc_curve", "t_cdf", "t_sf", "welch_t",
]
