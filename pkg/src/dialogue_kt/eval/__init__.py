"""Evaluation: metrics, baselines, experiment drivers, curves, reliability."""

from dialogue_kt.eval.curves import CurvePoint, CurveSeries, knowledge_curves, plot_curves
from dialogue_kt.eval.experiment import (
    FoldOutcome,
    RunArtifact,
    grid_search,
    run_experiment,
)
from dialogue_kt.eval.irr import RatingMatrix, irr_metrics, krippendorff_alpha
from dialogue_kt.eval.metrics import (
    MetricReport,
    accuracy,
    auc_pairwise,
    auc_rank,
    compute_metrics,
    f1_score,
    fold_summary,
    majority_baseline,
)

__all__ = [
    "CurvePoint",
    "CurveSeries",
    "FoldOutcome",
    "MetricReport",
    "RatingMatrix",
    "RunArtifact",
    "accuracy",
    "auc_pairwise",
    "auc_rank",
    "compute_metrics",
    "f1_score",
    "fold_summary",
    "grid_search",
    "irr_metrics",
    "knowledge_curves",
    "krippendorff_alpha",
    "majority_baseline",
    "plot_curves",
    "run_experiment",
]
