"""Post-hoc ID scoring of classifier logits and the final open-set decision.

Every ID score follows the same convention: larger means "more likely a
known class". A detection is called known when its score is strictly
greater than ``id_thresh``; otherwise it becomes unknown (class 0).
The fused confidence, objectness times max softmax, is the same in both
branches.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import UNKNOWN_CLASS, ClassSplit, Detection, EvalConfig, InputError


def _as_logits(logits) -> np.ndarray:
    arr = np.asarray(logits, dtype=np.float64)
    if arr.shape[-1] == 0:
        raise InputError("empty logit vector")
    if not np.all(np.isfinite(arr)):
        raise InputError("logits must be finite")
    return arr


def softmax(logits) -> np.ndarray:
    """Softmax over the last axis, shifted by the max for stability."""
    z = _as_logits(logits)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def energy_id_score(logits, temperature: float = 1.0):
    """Negative free energy ``T * log(sum(exp(logits / T)))``.

    Works on a single vector or row-wise on a 2-D array.
    """
    if not temperature > 0:
        raise InputError(f"temperature must be positive, got {temperature}")
    z = _as_logits(logits)
    m = z.max(axis=-1)
    s = np.exp((z - m[..., None]) / temperature).sum(axis=-1)
    out = temperature * np.log(s) + m
    return float(out) if out.ndim == 0 else out


def msp_id_score(logits):
    z = _as_logits(logits)
    out = softmax(z).max(axis=-1)
    return float(out) if out.ndim == 0 else out


def max_logit_id_score(logits):
    z = _as_logits(logits)
    out = z.max(axis=-1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MahalanobisModel:
    """Class means plus one shared (tied) precision matrix."""

    classes: tuple
    means: np.ndarray  # (n_classes, dim)
    precision: np.ndarray  # (dim, dim)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def __post_init__(self):
        self.means.setflags(write=False)
        self.precision.setflags(write=False)


def fit_mahalanobis(id_features: Mapping[int, Sequence[Sequence[float]]]) -> MahalanobisModel:
    """Fit per-class means and a pooled population covariance.

    The covariance is regularised with ``eps * I`` where
    ``eps = 1e-6 * trace / dim``.
    """
    classes, blocks = [], []
    for cls in sorted(id_features):
        x = np.asarray(id_features[cls], dtype=np.float64)
        if x.size == 0:
            continue
        if x.ndim != 2:
            raise InputError(f"features for class {cls} must be a 2-D array")
        classes.append(cls)
        blocks.append(x)
    if not blocks:
        raise InputError("no reference features given")
    dims = {b.shape[1] for b in blocks}
    if len(dims) != 1:
        raise InputError(f"inconsistent feature dimensions: {sorted(dims)}")
    dim = dims.pop()
    n = sum(len(b) for b in blocks)
    if n < 2:
        raise InputError("need at least 2 reference samples")
    means = np.stack([b.mean(axis=0) for b in blocks])
    centered = np.concatenate([b - mu for b, mu in zip(blocks, means)])
    cov = centered.T @ centered / n
    eps = 1e-6 * np.trace(cov) / dim
    cov = cov + eps * np.eye(dim)
    try:
        precision = np.linalg.inv(cov)
    except np.linalg.LinAlgError as exc:
        raise InputError("covariance is singular after regularisation") from exc
    if not np.all(np.isfinite(precision)) or eps <= 0:
        raise InputError("covariance is singular after regularisation")
    return MahalanobisModel(tuple(classes), means, precision)


def mahalanobis_id_score(model: MahalanobisModel, features):
    """Negative squared Mahalanobis distance to the closest class mean."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise InputError(f"feature dimension {x.shape[-1]} does not match model dimension {model.dim}")
    diff = x[..., None, :] - model.means  # (..., K, dim)
    d2 = np.einsum("...kd,de,...ke->...k", diff, model.precision, diff)
    out = -np.maximum(d2.min(axis=-1), 0.0)
    return float(out) if out.ndim == 0 else out


def id_scores(
    logits: np.ndarray,
    cfg: EvalConfig,
    features: Optional[np.ndarray] = None,
    model: Optional[MahalanobisModel] = None,
) -> np.ndarray:
    """Row-wise ID scores for the configured algorithm."""
    algo = cfg.ood_algorithm
    if algo == "energy":
        return np.asarray(energy_id_score(logits, cfg.temperature), dtype=np.float64)
    if algo == "msp":
        return np.asarray(msp_id_score(logits), dtype=np.float64)
    if algo == "max_logit":
        return np.asarray(max_logit_id_score(logits), dtype=np.float64)
    if model is None:
        raise InputError("mahalanobis scoring needs a fitted model (reference features)")
    if features is None:
        raise InputError("mahalanobis scoring needs per-detection features")
    return np.asarray(mahalanobis_id_score(model, features), dtype=np.float64)


def decide_arrays(logits: np.ndarray, objectness: np.ndarray, scores: np.ndarray, id_thresh: float):
    """Vectorised decision: returns ``(class_index, is_known, confidence)``.

    ``class_index`` is the logit argmax (first index on ties) and is
    meaningful only where ``is_known``.
    """
    probs = softmax(logits)
    cls_idx = np.argmax(np.asarray(logits, dtype=np.float64), axis=-1)
    confidence = objectness * probs.max(axis=-1)
    return cls_idx, scores > id_thresh, confidence


def decide(
    det: Detection,
    split: ClassSplit,
    cfg: EvalConfig,
    model: Optional[MahalanobisModel] = None,
) -> Detection:
    if len(det.logits) != split.num_classes:
        raise InputError(f"detection has {len(det.logits)} logits, split has {split.num_classes} classes")
    feats = None if det.features is None else np.asarray(det.features, dtype=np.float64)
    logits = np.asarray(det.logits, dtype=np.float64)
    score = float(id_scores(logits, cfg, feats, model))
    cls_idx, known, conf = decide_arrays(logits, np.float64(det.objectness), np.float64(score), cfg.id_thresh)
    decided = split.id_classes[int(cls_idx)] if known else UNKNOWN_CLASS
    return dataclasses.replace(det, decided_class=decided, confidence=float(conf), id_score=score)


def decide_all(
    dets: Sequence[Detection],
    split: ClassSplit,
    cfg: EvalConfig,
    model: Optional[MahalanobisModel] = None,
) -> list:
    """Decide a batch of detections; same result as mapping :func:`decide`."""
    if not dets:
        return []
    logits, objectness, feats = stack_detections(dets, split)
    scores = id_scores(logits, cfg, feats, model)
    cls_idx, known, conf = decide_arrays(logits, objectness, scores, cfg.id_thresh)
    ids = split.id_classes
    return [
        dataclasses.replace(
            d,
            decided_class=ids[c] if k else UNKNOWN_CLASS,
            confidence=float(p),
            id_score=float(s),
        )
        for d, c, k, p, s in zip(dets, cls_idx.tolist(), known.tolist(), conf, scores)
    ]


def stack_detections(dets: Sequence[Detection], split: ClassSplit):
    """Stack logits, objectness and (if every detection has them) features."""
    c = split.num_classes
    bad = next((i for i, d in enumerate(dets) if len(d.logits) != c), None)
    if bad is not None:
        raise InputError(f"detection {bad} has {len(dets[bad].logits)} logits, split has {c} classes")
    logits = np.array([d.logits for d in dets], dtype=np.float64).reshape(len(dets), c)
    objectness = np.array([d.objectness for d in dets], dtype=np.float64)
    feats = None
    if dets and all(d.features is not None for d in dets):
        feats = np.array([d.features for d in dets], dtype=np.float64)
    return logits, objectness, feats
