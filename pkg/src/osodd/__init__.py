"""Evaluation toolkit for open-set object detection and discovery."""

from .core import (
    BACKGROUND_CLASS,
    UNKNOWN_CLASS,
    Box,
    ClassSplit,
    Detection,
    EvalConfig,
    GroundTruthObject,
    InputError,
    LabelKind,
    OsoddError,
    PartitionLabel,
    UndefinedMetricError,
    resolve_gt_kind,
)
from .decision import (
    MahalanobisModel,
    decide,
    decide_all,
    energy_id_score,
    fit_mahalanobis,
    mahalanobis_id_score,
    max_logit_id_score,
    msp_id_score,
    softmax,
)
from .metrics import (
    AospCurvePoint,
    AurocAxes,
    EvalFrame,
    EvalReport,
    aosp,
    auroc,
    auroc_axes,
    average_precision,
    ca_ar,
    evaluate,
    histograms,
    id_map,
    ood_recall_at_k,
)
from .partition import MatchResult, iou, match_and_partition

__version__ = "0.1.0"
