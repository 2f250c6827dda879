"""Evaluation protocols, reports and the command-line interface."""
from .protocols import (
    DEFAULT_RESOLUTIONS,
    FusionReport,
    ResolutionGrid,
    cross_dataset_eval,
    evaluate_model,
    fusion_eval,
    leave_one_person_out,
    resolution_study,
)
from .report import (
    BinResult,
    EvalReport,
    PredictionTable,
    build_report,
    error_by_bin,
    quadratic_fit,
)

__all__ = [
    "BinResult", "DEFAULT_RESOLUTIONS", "EvalReport", "FusionReport", "PredictionTable",
    "ResolutionGrid", "build_report", "cross_dataset_eval", "error_by_bin", "evaluate_model",
    "fusion_eval", "leave_one_person_out", "quadratic_fit", "resolution_study",
]  # fmt: skip
