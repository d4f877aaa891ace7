"""Distill text-embedding knowledge anchors into lightweight time-series
models, with anchor-voting regression inference."""

from .anchors import (
    AnchorPoint,
    AnchorSet,
    AnchorSpec,
    PromptTemplate,
    assign_targets,
    expand_prompts,
    load_anchor_file,
    pseudo_embed,
    save_anchor_file,
)
from .datasets import (
    DatasetSplit,
    TimeSeriesRecord,
    Window,
    cmapss_ingest,
    har_ingest,
    sliding_window,
    synth_generate,
    zscore_apply,
    zscore_fit,
)
from .distill import (
    AlignmentModule,
    align_anchors,
    bidirectional_distributions,
    kp_loss,
    score,
    target_distribution,
)
from .estimators import KPClassifier, KPRegressor
from .training import (
    Checkpoint,
    EncoderSpec,
    MetricsReport,
    TrainConfig,
    count_params,
    estimate_macs,
    evaluate,
    nasa_score,
    predict_windows,
    train,
)
from .voting import Prediction, VotingSet, avs_oracle, avs_predict, classify

__version__ = "0.1.0"

__all__ = [
    "AnchorPoint",
    "AnchorSet",
    "AnchorSpec",
    "PromptTemplate",
    "assign_targets",
    "expand_prompts",
    "load_anchor_file",
    "pseudo_embed",
    "save_anchor_file",
    "DatasetSplit",
    "TimeSeriesRecord",
    "Window",
    "cmapss_ingest",
    "har_ingest",
    "sliding_window",
    "synth_generate",
    "zscore_apply",
    "zscore_fit",
    "AlignmentModule",
    "align_anchors",
    "bidirectional_distributions",
    "kp_loss",
    "score",
    "target_distribution",
    "KPClassifier",
    "KPRegressor",
    "Checkpoint",
    "EncoderSpec",
    "MetricsReport",
    "TrainConfig",
    "count_params",
    "estimate_macs",
    "evaluate",
    "nasa_score",
    "predict_windows",
    "train",
    "Prediction",
    "VotingSet",
    "avs_oracle",
    "avs_predict",
    "classify",
]
