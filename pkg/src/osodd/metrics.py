"""Open-set detection metrics: ID-mAP, CA-AR, AUROC axes, OOD recall and AOSP.

All metrics are computed from an :class:`EvalFrame`, a columnar view of one
evaluation run. Building the frame does the per-image IoU work once; the
AOSP threshold sweep then only re-runs the greedy matchers on the few
detections that overlap a ground-truth box.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    UNKNOWN_CLASS,
    ClassSplit,
    Detection,
    EvalConfig,
    GroundTruthObject,
    InputError,
    LabelKind,
    PartitionLabel,
    UndefinedMetricError,
    resolve_gt_kind,
)
from .decision import MahalanobisModel, id_scores, softmax
from .partition import boxes_to_xyxy, greedy_match, iou_matrix, partition_arrays

AP_RECALL_GRID = np.array([i / 100 for i in range(101)])

# partition codes used in arrays
ID_MATCH, OOD_MATCH, BACKGROUND, IGNORED = 0, 1, 2, 3
_CODE_KIND = (LabelKind.ID_MATCH, LabelKind.OOD_MATCH, LabelKind.BACKGROUND, LabelKind.IGNORED)
_KIND_CODE = {k: i for i, k in enumerate(_CODE_KIND)}
_BIN_NAMES = ("id", "ood", "bg")


# ---------------------------------------------------------------------------
# scalar building blocks


def _ap_from_flags(tp: np.ndarray, num_gt: int) -> float:
    """101-point interpolated AP for TP flags already in rank order."""
    if len(tp) == 0 or num_gt == 0:
        return 0.0
    tp = np.asarray(tp, dtype=bool)
    tpc = np.cumsum(tp)
    fpc = np.cumsum(~tp)
    if tpc[-1] > num_gt:
        raise InputError(f"{tpc[-1]} true positives for {num_gt} ground-truth objects")
    recall = tpc / num_gt
    precision = tpc / (tpc + fpc)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, AP_RECALL_GRID, side="left")
    hit = idx < len(recall)
    vals = np.where(hit, envelope[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(vals.mean())


def average_precision(ranked: Sequence[Tuple[float, bool]], num_gt: int) -> float:
    """101-point interpolated average precision.

    ``ranked`` holds ``(confidence, is_true_positive)`` pairs; they are
    sorted by confidence, highest first, keeping input order on ties.
    """
    if num_gt < 0:
        raise InputError("num_gt must be non-negative")
    if not ranked:
        return 0.0
    conf = np.array([c for c, _ in ranked], dtype=np.float64)
    flags = np.array([bool(t) for _, t in ranked])
    order = np.argsort(-conf, kind="stable")
    return _ap_from_flags(flags[order], num_gt)


def auroc(pos_scores: Sequence[float], neg_scores: Sequence[float]) -> float:
    """Mann-Whitney estimate of P(pos > neg), ties counted as one half."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.sort(np.asarray(neg_scores, dtype=np.float64))
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("AUROC needs at least one positive and one negative score")
    below = np.searchsorted(neg, pos, side="left")
    not_above = np.searchsorted(neg, pos, side="right")
    # twice the U statistic, kept integral so the result is exact
    u2 = int(below.sum()) + int(not_above.sum())
    return u2 / (2 * pos.size * neg.size)


def _auroc_or_none(pos, neg) -> Optional[float]:
    try:
        return auroc(pos, neg)
    except UndefinedMetricError:
        return None


@dataclass(frozen=True)
class AurocAxes:
    id_vs_ood: Optional[float]
    id_vs_nonid: Optional[float]
    ood_vs_bg: Optional[float]
    fg_vs_bg: Optional[float]


def _auroc_axes_codes(codes: np.ndarray, id_score: np.ndarray, objectness: np.ndarray) -> AurocAxes:
    idm, oodm, bg = codes == ID_MATCH, codes == OOD_MATCH, codes == BACKGROUND
    return AurocAxes(
        id_vs_ood=_auroc_or_none(id_score[idm], id_score[oodm]),
        id_vs_nonid=_auroc_or_none(id_score[idm], id_score[oodm | bg]),
        ood_vs_bg=_auroc_or_none(objectness[oodm], objectness[bg]),
        fg_vs_bg=_auroc_or_none(objectness[idm | oodm], objectness[bg]),
    )


def auroc_axes(
    labels: Sequence[PartitionLabel],
    id_scores: Sequence[float],
    objectness: Sequence[float],
) -> AurocAxes:
    """The four separation AUROCs; an axis with an empty side is ``None``.

    Ignored detections take part in none of the axes.
    """
    codes = np.array([_KIND_CODE[lab.kind] for lab in labels], dtype=np.int8)
    return _auroc_axes_codes(
        codes, np.asarray(id_scores, dtype=np.float64), np.asarray(objectness, dtype=np.float64)
    )


@dataclass(frozen=True)
class Histogram:
    edges: Tuple[float, ...]
    counts: Dict[str, Tuple[int, ...]]


def _histogram(values: np.ndarray, codes: np.ndarray, bins: int) -> Histogram:
    inside = codes != IGNORED
    vals = values[inside]
    if vals.size == 0:
        return Histogram((), {name: () for name in _BIN_NAMES})
    lo, hi = float(vals.min()), float(vals.max())
    counts = {}
    if lo == hi:
        for code, name in enumerate(_BIN_NAMES):
            counts[name] = (int(np.count_nonzero(codes == code)),)
        return Histogram((lo, hi), counts)
    edges = np.linspace(lo, hi, bins + 1)
    for code, name in enumerate(_BIN_NAMES):
        c, _ = np.histogram(values[codes == code], bins=edges)
        counts[name] = tuple(int(x) for x in c)
    return Histogram(tuple(float(e) for e in edges), counts)


def histograms(
    labels: Sequence[PartitionLabel],
    id_scores: Sequence[float],
    objectness: Sequence[float],
    bins: int = 50,
) -> Dict[str, Histogram]:
    """Equal-width histograms of ID score and objectness per ID/OOD/BG bin.

    The bin range spans all non-ignored detections. If every value is the
    same the histogram collapses to a single bin.
    """
    if bins < 1:
        raise InputError("bins must be positive")
    codes = np.array([_KIND_CODE[lab.kind] for lab in labels], dtype=np.int8)
    return {
        "id_score": _histogram(np.asarray(id_scores, dtype=np.float64), codes, bins),
        "objectness": _histogram(np.asarray(objectness, dtype=np.float64), codes, bins),
    }


# ---------------------------------------------------------------------------
# per-image precomputation


@dataclass
class _Table:
    """IoU sub-matrix for the detections of one image that can match a GT.

    Rows are global detection indices in rank order.
    """

    rows: np.ndarray
    cols: np.ndarray
    ious: np.ndarray

    def match(self, active: np.ndarray, thresh: float) -> np.ndarray:
        """Greedy assignment restricted to rows where ``active`` is set."""
        order = np.flatnonzero(active[self.rows])
        return greedy_match(self.ious, order, thresh)


def _contested(ious: np.ndarray, rows: np.ndarray, cols: np.ndarray, thresh: float) -> Optional[_Table]:
    if ious.size == 0:
        return None
    keep = ious.max(axis=1) >= thresh
    if not keep.any():
        return None
    return _Table(rows[keep], cols, ious[keep])


@dataclass
class _ImageScan:
    det_idx: np.ndarray
    codes: np.ndarray
    id_table: Optional[_Table]
    ood_table: Optional[_Table]
    ar_table: Optional[_Table]


def _scan_image(
    det_idx: np.ndarray,
    det_xyxy: np.ndarray,
    rank: np.ndarray,
    topk: np.ndarray,
    cls_idx: np.ndarray,
    gt_idx: np.ndarray,
    gt_xyxy: np.ndarray,
    gt_cls: np.ndarray,
    cfg: EvalConfig,
) -> _ImageScan:
    """All IoU-dependent work for one image.

    ``det_idx`` / ``gt_idx`` are global indices; the other arrays are local
    to this image, detections already sorted by rank.
    """
    ious = iou_matrix(det_xyxy, gt_xyxy)
    # partition uses the rank order too: rank is confidence desc, input order on ties
    codes, _ = partition_arrays(
        det_xyxy, -rank.astype(np.float64), gt_xyxy, gt_cls >= 0, cfg.iou_match, cfg.iou_bg
    )
    if len(gt_idx) == 0:
        return _ImageScan(det_idx, codes, None, None, None)
    top_ious = ious[topk]
    top_rows = det_idx[topk]
    top_cls = cls_idx[topk]

    is_id = gt_cls >= 0
    id_ious = top_ious[:, is_id]
    same = top_cls[:, None] == gt_cls[is_id][None, :]
    id_table = _contested(np.where(same, id_ious, 0.0), top_rows, gt_idx[is_id], cfg.ap_iou)
    ood_table = _contested(top_ious[:, ~is_id], top_rows, gt_idx[~is_id], cfg.ap_iou)
    ar_table = _contested(top_ious, top_rows, gt_idx, min(cfg.ar_iou_thresholds))
    return _ImageScan(det_idx, codes, id_table, ood_table, ar_table)


def _scan_chunk(args):
    jobs, cfg = args
    return [_scan_image(*job, cfg) for job in jobs]


def _group(index: np.ndarray, n_groups: int) -> List[np.ndarray]:
    order = np.argsort(index, kind="stable")
    bounds = np.searchsorted(index[order], np.arange(n_groups + 1))
    return [order[bounds[i] : bounds[i + 1]] for i in range(n_groups)]


# ---------------------------------------------------------------------------
# evaluation frame


@dataclass(frozen=True)
class AospCurvePoint:
    target_recall: float
    threshold: float
    achieved_ood_recall: float
    id_map: float
    achievable: bool = True


class EvalFrame:
    """Columnar detections and ground truth with per-image matching tables.

    Parameters
    ----------
    det_image, gt_image:
        Image index (0..n_images-1) of each detection / GT object.
    det_xyxy, gt_xyxy:
        Boxes as ``(n, 4)`` corner arrays.
    confidence:
        Ranking score of each detection (fused objectness x max softmax).
    class_index:
        Logit index each detection claims, ``-1`` for unknown.
    gt_class_index:
        Logit index of each GT's ID class, ``-1`` for OOD.
    """

    def __init__(
        self,
        det_image: np.ndarray,
        det_xyxy: np.ndarray,
        confidence: np.ndarray,
        class_index: np.ndarray,
        gt_image: np.ndarray,
        gt_xyxy: np.ndarray,
        gt_class_index: np.ndarray,
        num_classes: int,
        n_images: int,
        cfg: EvalConfig,
        id_score: Optional[np.ndarray] = None,
        objectness: Optional[np.ndarray] = None,
        workers: int = 1,
    ):
        self.cfg = cfg
        self.num_classes = num_classes
        self.n_images = n_images
        self.confidence = np.asarray(confidence, dtype=np.float64)
        self.class_index = np.asarray(class_index, dtype=np.int64)
        self.gt_class_index = np.asarray(gt_class_index, dtype=np.int64)
        self.id_score = None if id_score is None else np.asarray(id_score, dtype=np.float64)
        self.objectness = None if objectness is None else np.asarray(objectness, dtype=np.float64)
        n = len(self.confidence)
        self.n_dets = n

        order = np.argsort(-self.confidence, kind="stable")
        self.rank = np.empty(n, dtype=np.int64)
        self.rank[order] = np.arange(n)

        det_groups = _group(np.asarray(det_image, dtype=np.int64), n_images)
        gt_groups = _group(np.asarray(gt_image, dtype=np.int64), n_images)
        self.topk = np.zeros(n, dtype=bool)
        jobs = []
        for dg, gg in zip(det_groups, gt_groups):
            dg = dg[np.argsort(self.rank[dg], kind="stable")]
            local_top = np.arange(len(dg)) < cfg.k_per_image
            self.topk[dg[local_top]] = True
            jobs.append(
                (dg, det_xyxy[dg], self.rank[dg], local_top, self.class_index[dg], gg, gt_xyxy[gg], self.gt_class_index[gg])
            )
        scans = _run_scans(jobs, cfg, workers)

        self.codes = np.full(n, BACKGROUND, dtype=np.int8)
        self.id_tables, self.ood_tables, self.ar_tables = [], [], []
        for s in scans:
            self.codes[s.det_idx] = s.codes
            if s.id_table is not None:
                self.id_tables.append(s.id_table)
            if s.ood_table is not None:
                self.ood_tables.append(s.ood_table)
            if s.ar_table is not None:
                self.ar_tables.append(s.ar_table)

        self.num_gt = len(self.gt_class_index)
        self.num_ood_gt = int(np.count_nonzero(self.gt_class_index < 0))
        self.gt_per_class = np.bincount(
            self.gt_class_index[self.gt_class_index >= 0], minlength=num_classes
        )[:num_classes]
        by_rank = np.argsort(self.rank)
        top_by_rank = by_rank[self.topk[by_rank]]
        cls_sorted = self.class_index[top_by_rank]
        self.class_pools = [top_by_rank[cls_sorted == c] for c in range(num_classes)]

    # -- ID-mAP ---------------------------------------------------------

    def id_map(self, known: Optional[np.ndarray] = None) -> float:
        """Mean AP over classes with GT; ``known`` masks which detections keep their class."""
        if not self.gt_per_class.any():
            raise UndefinedMetricError("no ID ground truth: ID-mAP is undefined")
        active = self.topk & (self.class_index >= 0)
        if known is not None:
            active &= known
        tp = np.zeros(self.n_dets, dtype=bool)
        thr = self.cfg.ap_iou
        for table in self.id_tables:
            assigned = table.match(active, thr)
            tp[table.rows[assigned >= 0]] = True
        aps = []
        for c in range(self.num_classes):
            if self.gt_per_class[c] == 0:
                continue
            pool = self.class_pools[c]
            pool = pool[active[pool]]
            aps.append(_ap_from_flags(tp[pool], int(self.gt_per_class[c])))
        return float(np.mean(aps))

    # -- recall ---------------------------------------------------------

    def ca_ar(self) -> float:
        if self.num_gt == 0:
            raise UndefinedMetricError("no ground truth: CA-AR is undefined")
        active = self.topk
        recalls = []
        for thr in self.cfg.ar_iou_thresholds:
            matched = sum(int(np.count_nonzero(t.match(active, thr) >= 0)) for t in self.ar_tables)
            recalls.append(matched / self.num_gt)
        return float(np.mean(recalls))

    def ood_matched(self, unknown: np.ndarray) -> int:
        active = self.topk & unknown
        thr = self.cfg.ap_iou
        return sum(int(np.count_nonzero(t.match(active, thr) >= 0)) for t in self.ood_tables)

    def ood_recall(self, unknown: np.ndarray) -> float:
        if self.num_ood_gt == 0:
            raise UndefinedMetricError("no OOD ground truth: OOD recall is undefined")
        return self.ood_matched(unknown) / self.num_ood_gt

    def ood_recall_steps(self) -> Tuple[np.ndarray, np.ndarray]:
        """Matched OOD GT count as a step function of the threshold.

        Returns ``(scores, matched)``: at threshold ``t`` the count is
        ``matched[i]`` for the largest ``i`` with ``scores[i] <= t`` (zero
        below ``scores[0]``). Adding a detection to the unknown set never
        lowers a greedy matching count, so ``matched`` is non-decreasing.
        """
        s = self.id_score
        table_of, members = {}, []
        for ti, t in enumerate(self.ood_tables):
            rows = t.rows[self.topk[t.rows]]
            members.append(rows)
            for r in rows:
                table_of[int(r)] = ti
        if not table_of:
            return np.zeros(0), np.zeros(0, dtype=np.int64)
        cand = np.array(sorted(table_of), dtype=np.int64)
        cand = cand[np.argsort(s[cand], kind="stable")]
        unknown = np.zeros(self.n_dets, dtype=bool)
        per_table = np.zeros(len(self.ood_tables), dtype=np.int64)
        total = 0
        scores, matched = [], []
        thr = self.cfg.ap_iou
        i = 0
        while i < len(cand):
            j = i
            touched = set()
            while j < len(cand) and s[cand[j]] == s[cand[i]]:
                unknown[cand[j]] = True
                touched.add(table_of[int(cand[j])])
                j += 1
            for ti in sorted(touched):
                new = int(np.count_nonzero(self.ood_tables[ti].match(unknown, thr) >= 0))
                total += new - per_table[ti]
                per_table[ti] = new
            scores.append(s[cand[i]])
            matched.append(total)
            i = j
        return np.array(scores), np.array(matched, dtype=np.int64)

    # -- AOSP -----------------------------------------------------------

    def aosp(self) -> Tuple[float, List[AospCurvePoint]]:
        if self.id_score is None:
            raise InputError("AOSP needs ID scores")
        if self.num_ood_gt == 0:
            raise UndefinedMetricError("no OOD ground truth: AOSP is undefined")
        if not self.gt_per_class.any():
            raise UndefinedMetricError("no ID ground truth: AOSP is undefined")
        scores, matched = self.ood_recall_steps()
        recalls = matched / self.num_ood_gt
        max_recall = float(recalls[-1]) if len(recalls) else 0.0
        cache: Dict[float, float] = {}
        points = []
        for r in self.cfg.recall_grid:
            if r <= 0.0:
                thr, achieved = -math.inf, 0.0
            else:
                hit = np.flatnonzero(recalls >= r)
                if hit.size == 0:
                    points.append(AospCurvePoint(r, math.inf, max_recall, 0.0, achievable=False))
                    continue
                thr, achieved = float(scores[hit[0]]), float(recalls[hit[0]])
            if thr not in cache:
                cache[thr] = self.id_map(self.id_score > thr)
            points.append(AospCurvePoint(r, thr, achieved, cache[thr]))
        value = float(np.mean([p.id_map for p in points]))
        return value, points

    # -- partition-based ------------------------------------------------

    def auroc_axes(self) -> AurocAxes:
        return _auroc_axes_codes(self.codes, self.id_score, self.objectness)

    def histograms(self, bins: int) -> Dict[str, Histogram]:
        return {
            "id_score": _histogram(self.id_score, self.codes, bins),
            "objectness": _histogram(self.objectness, self.codes, bins),
        }


def _run_scans(jobs, cfg: EvalConfig, workers: int) -> List[_ImageScan]:
    if workers <= 1 or len(jobs) < 2:
        return [_scan_image(*job, cfg) for job in jobs]
    size = max(1, math.ceil(len(jobs) / (workers * 4)))
    chunks = [(jobs[i : i + size], cfg) for i in range(0, len(jobs), size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves chunk order, so results merge deterministically
        return [scan for part in pool.map(_scan_chunk, chunks) for scan in part]


# ---------------------------------------------------------------------------
# building frames from domain objects


def _image_index(dets, gts, images=None) -> Dict[object, int]:
    index: Dict[object, int] = {}
    for img in images or ():
        index.setdefault(img, len(index))
    for rec in list(gts) + list(dets):
        index.setdefault(rec.image_id, len(index))
    return index


def frame_from_records(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    split: ClassSplit,
    cfg: EvalConfig,
    use_decided: bool,
    need_scores: bool = False,
    images=None,
    workers: int = 1,
    id_score: Optional[np.ndarray] = None,
) -> EvalFrame:
    """Build an :class:`EvalFrame` from detection / GT records.

    With ``use_decided`` the claimed class is each detection's
    ``decided_class`` (unknowns drop out); otherwise it is the logit argmax.
    Detections without a ``confidence`` are ranked by objectness x max
    softmax.
    """
    c = split.num_classes
    index = _image_index(dets, gts, images)
    n = len(dets)
    det_image = np.array([index[d.image_id] for d in dets], dtype=np.int64)
    xyxy = boxes_to_xyxy([d.box for d in dets])
    if any(len(d.logits) != c for d in dets):
        raise InputError(f"every detection needs {c} logits")
    logits = np.array([d.logits for d in dets], dtype=np.float64).reshape(n, c)
    objectness = np.array([d.objectness for d in dets], dtype=np.float64)
    probs = softmax(logits) if n else np.zeros((0, c))
    confidence = np.array(
        [d.confidence if d.confidence is not None else o * p for d, o, p in zip(dets, objectness, probs.max(axis=-1))],
        dtype=np.float64,
    )
    if use_decided:
        if any(d.decided_class is None for d in dets):
            raise InputError("detections must be decided first")
        try:
            cls = np.array(
                [-1 if d.decided_class == UNKNOWN_CLASS else split.index_of(d.decided_class) for d in dets],
                dtype=np.int64,
            )
        except KeyError as exc:
            raise InputError(f"decided class {exc.args[0]} is not a known class") from None
    else:
        cls = np.argmax(logits, axis=-1) if n else np.zeros(0, dtype=np.int64)
    if id_score is None and need_scores:
        if any(d.id_score is None for d in dets):
            raise InputError("every detection needs an id_score")
        id_score = np.array([d.id_score for d in dets], dtype=np.float64)
    if id_score is not None and not np.all(np.isfinite(id_score)):
        raise InputError("id_scores must be finite")
    gt_cls = []
    for g in gts:
        k = resolve_gt_kind(g, split)
        gt_cls.append(-1 if k is None else split.index_of(k))
    return EvalFrame(
        det_image,
        xyxy,
        confidence,
        cls,
        np.array([index[g.image_id] for g in gts], dtype=np.int64),
        boxes_to_xyxy([g.box for g in gts]),
        np.array(gt_cls, dtype=np.int64),
        c,
        len(index),
        cfg,
        id_score=id_score,
        objectness=objectness,
        workers=workers,
    )


def id_map(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    split: ClassSplit,
    cfg: EvalConfig,
    open_set: bool = False,
) -> float:
    """ID mean average precision at ``cfg.ap_iou``.

    Closed-set mode treats every detection as known with its argmax class.
    Open-set mode uses ``decided_class`` and leaves unknowns out of every
    class pool.
    """
    return frame_from_records(dets, gts, split, cfg, use_decided=open_set).id_map()


def ca_ar(proposals: Sequence[Detection], gts: Sequence[GroundTruthObject], cfg: EvalConfig) -> float:
    """Class-agnostic average recall of the top ``k`` proposals per image."""
    if not gts:
        raise UndefinedMetricError("no ground truth: CA-AR is undefined")
    c = len(proposals[0].logits) if proposals else 1
    split = ClassSplit(tuple(range(1, c + 1)))
    # every GT counts as foreground; class ids only matter for ID-mAP
    fg = [GroundTruthObject(g.image_id, g.box, 1) for g in gts]
    return frame_from_records(proposals, fg, split, cfg, use_decided=False).ca_ar()


def ood_recall_at_k(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    split: ClassSplit,
    cfg: EvalConfig,
) -> float:
    """Fraction of OOD GT recovered by unknown-labelled detections in the top ``k``."""
    frame = frame_from_records(dets, gts, split, cfg, use_decided=True)
    return frame.ood_recall(frame.class_index < 0)


def aosp(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    split: ClassSplit,
    cfg: EvalConfig,
) -> Tuple[float, List[AospCurvePoint]]:
    """Average open-set precision and its curve.

    For each target OOD recall the smallest threshold reaching it is
    applied (detections scoring at or below it become unknown) and the
    open-set ID-mAP is taken; unreachable targets score zero.
    """
    return frame_from_records(dets, gts, split, cfg, use_decided=False, need_scores=True).aosp()


# ---------------------------------------------------------------------------
# full report


@dataclass(frozen=True)
class EvalReport:
    aosp: Optional[float]
    id_map_closed: float
    id_map_open: float
    ood_recall: Optional[float]
    ca_ar: float
    auroc_id_ood: Optional[float]
    auroc_id_nonid: Optional[float]
    auroc_ood_bg: Optional[float]
    auroc_fg_bg: Optional[float]
    curve: Tuple[AospCurvePoint, ...]
    histograms: Dict[str, Histogram]
    partition_counts: Dict[str, int] = field(default_factory=dict)
    num_detections: int = 0
    num_id_gt: int = 0
    num_ood_gt: int = 0


def partition_counts(codes: np.ndarray) -> Dict[str, int]:
    return {k.value: int(np.count_nonzero(codes == i)) for i, k in enumerate(_CODE_KIND)}


def evaluate_frame(frame: EvalFrame) -> EvalReport:
    """Every metric on a frame whose class index is the logit argmax."""
    cfg = frame.cfg
    axes = frame.auroc_axes()
    known = frame.id_score > cfg.id_thresh
    if frame.num_ood_gt:
        aosp_value, curve = frame.aosp()
        ood = frame.ood_recall(~known)
    else:
        aosp_value, curve, ood = None, [], None
    return EvalReport(
        aosp=aosp_value,
        id_map_closed=frame.id_map(),
        id_map_open=frame.id_map(known),
        ood_recall=ood,
        ca_ar=frame.ca_ar(),
        auroc_id_ood=axes.id_vs_ood,
        auroc_id_nonid=axes.id_vs_nonid,
        auroc_ood_bg=axes.ood_vs_bg,
        auroc_fg_bg=axes.fg_vs_bg,
        curve=tuple(curve),
        histograms=frame.histograms(cfg.histogram_bins),
        partition_counts=partition_counts(frame.codes),
        num_detections=frame.n_dets,
        num_id_gt=int(frame.gt_per_class.sum()),
        num_ood_gt=frame.num_ood_gt,
    )


def evaluate(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    split: ClassSplit,
    cfg: EvalConfig,
    images=None,
    model: Optional[MahalanobisModel] = None,
    workers: int = 1,
) -> EvalReport:
    """Score raw detections with ``cfg.ood_algorithm`` and compute every metric."""
    c = split.num_classes
    if any(len(d.logits) != c for d in dets):
        raise InputError(f"every detection needs {c} logits")
    logits = np.array([d.logits for d in dets], dtype=np.float64).reshape(len(dets), c)
    feats = None
    if cfg.ood_algorithm == "mahalanobis":
        if any(d.features is None for d in dets):
            raise InputError("mahalanobis scoring needs features on every detection")
        feats = np.array([d.features for d in dets], dtype=np.float64)
    scores = id_scores(logits, cfg, feats, model) if dets else np.zeros(0)
    frame = frame_from_records(
        dets, gts, split, cfg, use_decided=False, images=images, workers=workers, id_score=scores
    )
    return evaluate_frame(frame)
