"""Explanation-guided debugging for bag-of-embeddings text classifiers.

Train a small classifier, read token attributions for its predictions,
collect human feedback about which words should or should not matter,
and retrain with an attribution penalty so the model's reasons line up
with the feedback. Ships with a synthetic spurious-correlation benchmark,
simulated annotators, and an HTTP service for the interactive loop.
"""

from .attribution import (
    Attribution,
    NormalizedAttribution,
    TaskExplanation,
    TaskExplanationEntry,
    build_task_explanation,
    input_times_gradient,
    integrated_gradients,
    normalize,
    normalized_batch,
    save_attributions,
    save_task_explanation,
)
from .data import (
    Dataset,
    Example,
    Vocabulary,
    build_vocabulary,
    load_dataset,
    load_manifest,
    save_dataset,
    save_manifest,
    tokenize,
)
from .errors import (
    ConsistencyError,
    DivergenceError,
    ErloopError,
    FormatError,
    IngestionError,
    ValidationError,
)
from .ertrain import (
    DebugReport,
    ERConfig,
    debug_retrain,
    er_loss,
    export_model,
    load_model,
)
from .feedback import (
    FeedbackOp,
    RegularizationPolicy,
    TargetMap,
    append_feedback_op,
    apply_feedback,
    build_targets,
    build_targets_instance,
    build_targets_task,
    load_feedback_log,
    load_lexicon,
    merge_target_maps,
    save_feedback_log,
)
from .model import Prediction, TextClassifier, forward, predict_dataset
from .service import create_app
from .simulate import (
    DEFAULT_COSTS,
    BudgetPoint,
    RationaleAnnotation,
    SweepCell,
    SweepTable,
    SyntheticSpec,
    generate_synthetic,
    make_budget_pipeline,
    parallel_budget,
    run_policy_sweep,
    save_budget_csv,
    save_sweep_csv,
    signal_rationales,
    simulate_budget,
    simulate_instance_feedback,
    simulate_task_feedback,
    word_attribution_profile,
)
from .train import TrainConfig, evaluate, train_baseline

__all__ = [
    "DEFAULT_COSTS",
    "Attribution",
    "BudgetPoint",
    "ConsistencyError",
    "Dataset",
    "DebugReport",
    "DivergenceError",
    "ERConfig",
    "ErloopError",
    "Example",
    "FeedbackOp",
    "FormatError",
    "IngestionError",
    "NormalizedAttribution",
    "Prediction",
    "RationaleAnnotation",
    "RegularizationPolicy",
    "SweepCell",
    "SweepTable",
    "SyntheticSpec",
    "TargetMap",
    "TaskExplanation",
    "TaskExplanationEntry",
    "TextClassifier",
    "TrainConfig",
    "ValidationError",
    "Vocabulary",
    "append_feedback_op",
    "apply_feedback",
    "build_targets",
    "build_targets_instance",
    "build_targets_task",
    "build_task_explanation",
    "build_vocabulary",
    "create_app",
    "debug_retrain",
    "er_loss",
    "evaluate",
    "export_model",
    "forward",
    "generate_synthetic",
    "input_times_gradient",
    "integrated_gradients",
    "load_dataset",
    "load_feedback_log",
    "load_lexicon",
    "load_manifest",
    "load_model",
    "make_budget_pipeline",
    "merge_target_maps",
    "normalize",
    "normalized_batch",
    "parallel_budget",
    "predict_dataset",
    "run_policy_sweep",
    "save_attributions",
    "save_budget_csv",
    "save_dataset",
    "save_feedback_log",
    "save_manifest",
    "save_sweep_csv",
    "save_task_explanation",
    "signal_rationales",
    "simulate_budget",
    "simulate_instance_feedback",
    "simulate_task_feedback",
    "tokenize",
    "train_baseline",
    "word_attribution_profile",
]
