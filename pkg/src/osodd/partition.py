"""IoU, greedy matching and ID/OOD/background partitioning of predictions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    Box,
    ClassSplit,
    Detection,
    EvalConfig,
    GroundTruthObject,
    LabelKind,
    PartitionLabel,
    check_same_image,
    resolve_gt_kind,
)
from .decision import softmax


def iou(a: Box, b: Box) -> float:
    ax1, ay1, ax2, ay2 = a.xyxy()
    bx1, by1, bx2, by2 = b.xyxy()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def boxes_to_xyxy(boxes: Sequence[Box]) -> np.ndarray:
    if not boxes:
        return np.zeros((0, 4))
    return np.array([b.xyxy() for b in boxes], dtype=np.float64)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two ``(n, 4)`` xyxy arrays.

    Same arithmetic as :func:`iou`, so results agree bit for bit.
    """
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    overlap = (iw > 0) & (ih > 0)
    inter = np.where(overlap, iw * ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(overlap, inter / union, 0.0)


def confidence_order(scores: Sequence[float]) -> np.ndarray:
    """Indices sorted by score descending; ties keep input order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def greedy_match(ious: np.ndarray, order: Sequence[int], thresh: float) -> np.ndarray:
    """Greedy one-to-one assignment of detections (rows) to GT (columns).

    Detections are visited in ``order``; each takes the still-free GT with
    the highest IoU, provided that IoU is at least ``thresh``. IoU ties go
    to the lower GT index. Returns the matched GT per row, ``-1`` if none.
    """
    n_det, n_gt = ious.shape
    assigned = np.full(n_det, -1, dtype=np.int64)
    if n_gt == 0:
        return assigned
    # matrices are tiny (one image), so plain lists beat numpy call overhead
    rows = ious.tolist()
    free = [True] * n_gt
    left = n_gt
    for d in order:
        best_j, best_v = -1, thresh
        for j, v in enumerate(rows[d]):
            if free[j] and v >= best_v and (best_j < 0 or v > best_v):
                best_j, best_v = j, v
        if best_j >= 0:
            assigned[d] = best_j
            free[best_j] = False
            left -= 1
            if not left:
                break
    return assigned


@dataclass(frozen=True)
class MatchResult:
    labels: Tuple[PartitionLabel, ...]
    gt_matches: Tuple[Optional[int], ...]


def partition_arrays(
    det_xyxy: np.ndarray,
    scores: np.ndarray,
    gt_xyxy: np.ndarray,
    gt_is_id: np.ndarray,
    iou_match: float,
    iou_bg: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Array form of :func:`match_and_partition` for one image.

    Returns ``(kind_codes, gt_index)`` where codes are 0=ID_MATCH,
    1=OOD_MATCH, 2=BACKGROUND, 3=IGNORED.
    """
    n = len(det_xyxy)
    ious = iou_matrix(det_xyxy, gt_xyxy)
    assigned = greedy_match(ious, confidence_order(scores), iou_match)
    max_iou = ious.max(axis=1) if ious.shape[1] else np.zeros(n)
    codes = np.where(max_iou < iou_bg, 2, 3)
    hit = assigned >= 0
    codes[hit] = np.where(gt_is_id[assigned[hit]], 0, 1)
    return codes.astype(np.int8), assigned


def _fused(det: Detection) -> float:
    return det.objectness * float(softmax(det.logits).max())


_KINDS = (LabelKind.ID_MATCH, LabelKind.OOD_MATCH, LabelKind.BACKGROUND, LabelKind.IGNORED)


def match_and_partition(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    split: ClassSplit,
    cfg: EvalConfig,
) -> MatchResult:
    """Label every detection of one image as ID/OOD match, background or ignored.

    Detections are ranked by ``confidence``; undecided detections use
    objectness x max softmax, the value a decision would assign. A
    detection that overlaps some GT by at least ``cfg.iou_match`` but finds
    every such GT already claimed is ignored, not background.
    """
    check_same_image(dets, gts)
    scores = np.array([d.confidence if d.confidence is not None else _fused(d) for d in dets])
    gt_is_id = np.array([resolve_gt_kind(g, split) is not None for g in gts], dtype=bool)
    codes, assigned = partition_arrays(
        boxes_to_xyxy([d.box for d in dets]),
        scores,
        boxes_to_xyxy([g.box for g in gts]),
        gt_is_id,
        cfg.iou_match,
        cfg.iou_bg,
    )
    labels: List[PartitionLabel] = []
    for code, j in zip(codes, assigned):
        labels.append(PartitionLabel(_KINDS[code], int(j) if code < 2 else None))
    gt_matches: List[Optional[int]] = [None] * len(gts)
    for d, j in enumerate(assigned):
        if j >= 0:
            gt_matches[j] = d
    return MatchResult(tuple(labels), tuple(gt_matches))
