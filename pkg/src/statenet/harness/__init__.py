"""Training, evaluation and reporting workflows."""

from .data import (
    PreparedDataset,
    build_model_arch,
    class_names,
    compute_threads,
    load_directory,
    prepare_dataset,
    to_arrays,
)
from .evaluator import (
    EvaluationReport,
    MisclassifiedEntry,
    Prediction,
    arch_from_checkpoint,
    build_evaluation_report,
    config_from_checkpoint,
    evaluate,
    predict,
    predict_proba,
)
from .history import EpochRecord, TrainingHistory
from .reports import (
    HISTORY_COLUMNS,
    export_filter_grid,
    export_history,
    filter_grid,
    format_misclassified,
    read_history_csv,
    report_misclassified,
    write_misclassified_csv,
)
from .trainer import TrainingRun, batch_seed, score_arrays, train, training_loss_and_grads

__all__ = [
    "EpochRecord",
    "EvaluationReport",
    "HISTORY_COLUMNS",
    "MisclassifiedEntry",
    "Prediction",
    "PreparedDataset",
    "TrainingHistory",
    "TrainingRun",
    "arch_from_checkpoint",
    "batch_seed",
    "build_evaluation_report",
    "build_model_arch",
    "class_names",
    "compute_threads",
    "config_from_checkpoint",
    "evaluate",
    "export_filter_grid",
    "export_history",
    "filter_grid",
    "format_misclassified",
    "load_directory",
    "predict",
    "predict_proba",
    "prepare_dataset",
    "read_history_csv",
    "report_misclassified",
    "score_arrays",
    "to_arrays",
    "train",
    "training_loss_and_grads",
    "write_misclassified_csv",
]
