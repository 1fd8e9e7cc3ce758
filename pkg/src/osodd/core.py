"""Domain types shared across the toolkit.

Boxes are stored in center format ``(cx, cy, w, h)``; files on disk use
COCO corner format ``(x_min, y_min, w, h)`` and are converted on load.
Class id ``0`` is reserved for *unknown*; ``-1`` (background) is never
emitted.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple

UNKNOWN_CLASS = 0
BACKGROUND_CLASS = -1

ImageId = object  # int or str, whatever the annotation file uses


class OsoddError(Exception):
    """Base class for toolkit errors."""


class InputError(OsoddError, ValueError):
    """Invalid or inconsistent input data."""


class UndefinedMetricError(OsoddError):
    """A metric was requested that has no defined value on this data."""


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"box has non-finite coordinates: {vals}")
        if self.w <= 0 or self.h <= 0:
            raise InputError(f"degenerate box (w={self.w}, h={self.h})")

    @classmethod
    def from_corner(cls, x: float, y: float, w: float, h: float) -> "Box":
        return cls(x + w / 2.0, y + h / 2.0, w, h)

    def to_corner(self) -> Tuple[float, float, float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)

    def xyxy(self) -> Tuple[float, float, float, float]:
        hw, hh = self.w / 2.0, self.h / 2.0
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    @property
    def area(self) -> float:
        return self.w * self.h

    def scaled(self, s: float) -> "Box":
        return Box(self.cx * s, self.cy * s, self.w * s, self.h * s)


@dataclass(frozen=True)
class Detection:
    """One predicted region.

    ``decided_class``, ``confidence`` and ``id_score`` stay ``None`` until
    the detection has gone through :func:`osodd.decision.decide`.
    """

    image_id: ImageId
    box: Box
    logits: Tuple[float, ...]
    objectness: float
    features: Optional[Tuple[float, ...]] = None
    decided_class: Optional[int] = None
    confidence: Optional[float] = None
    id_score: Optional[float] = None

    def __post_init__(self):
        if not len(self.logits):
            raise InputError("detection has empty logits")
        if not (0.0 <= self.objectness <= 1.0):
            raise InputError(f"objectness {self.objectness} outside [0, 1]")
        if self.confidence is not None and not (0.0 <= self.confidence <= 1.0):
            raise InputError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def is_decided(self) -> bool:
        return self.decided_class is not None


@dataclass(frozen=True)
class GroundTruthObject:
    image_id: ImageId
    box: Box
    dataset_class: int
    annotation_id: Optional[int] = None

    def __post_init__(self):
        if self.dataset_class <= 0:
            raise InputError(f"dataset class must be positive, got {self.dataset_class}")


@dataclass(frozen=True)
class ClassSplit:
    """Known classes (in logit order) plus optional dataset-class aliases."""

    id_classes: Tuple[int, ...]
    alias_map: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "id_classes", tuple(int(c) for c in self.id_classes))
        object.__setattr__(self, "alias_map", {int(k): int(v) for k, v in self.alias_map.items()})
        if not self.id_classes:
            raise InputError("id_classes must be non-empty")
        if len(set(self.id_classes)) != len(self.id_classes):
            raise InputError("id_classes contains duplicates")
        if any(c <= 0 for c in self.id_classes):
            raise InputError("id_classes must be positive integers")
        known = set(self.id_classes)
        bad = sorted(v for v in self.alias_map.values() if v not in known)
        if bad:
            raise InputError(f"alias_map targets not in id_classes: {bad}")

    @property
    def num_classes(self) -> int:
        return len(self.id_classes)

    def resolve(self, dataset_class: int) -> Optional[int]:
        """ID class for ``dataset_class``, or ``None`` if it is OOD."""
        if dataset_class in self._index:
            return dataset_class
        return self.alias_map.get(dataset_class)

    def index_of(self, id_class: int) -> int:
        """Logit position of a known class."""
        return self._index[id_class]

    @property
    def _index(self) -> dict:
        # cached lazily on the frozen instance
        try:
            return self.__dict__["_index_cache"]
        except KeyError:
            idx = {c: i for i, c in enumerate(self.id_classes)}
            object.__setattr__(self, "_index_cache", idx)
            return idx


def resolve_gt_kind(gt: GroundTruthObject, split: ClassSplit) -> Optional[int]:
    """Return the ID class a ground-truth object maps to, or ``None`` for OOD."""
    return split.resolve(gt.dataset_class)


class LabelKind(enum.Enum):
    ID_MATCH = "id_match"
    OOD_MATCH = "ood_match"
    BACKGROUND = "background"
    IGNORED = "ignored"


@dataclass(frozen=True)
class PartitionLabel:
    kind: LabelKind
    gt_index: Optional[int] = None

    def __post_init__(self):
        matched = self.kind in (LabelKind.ID_MATCH, LabelKind.OOD_MATCH)
        if matched != (self.gt_index is not None):
            raise ValueError(f"{self.kind.name} label with gt_index={self.gt_index}")


OOD_ALGORITHMS = ("energy", "msp", "max_logit", "mahalanobis")


def default_recall_grid() -> Tuple[float, ...]:
    # i / 20 rather than i * 0.05 so grid points equal the matching fractions exactly
    return tuple(i / 20 for i in range(21))


def default_ar_thresholds() -> Tuple[float, ...]:
    return tuple((50 + 5 * i) / 100 for i in range(10))


@dataclass(frozen=True)
class EvalConfig:
    temperature: float = 1.0
    id_thresh: float = 0.0
    k_per_image: int = 100
    iou_match: float = 0.5
    iou_bg: float = 0.2
    ar_iou_thresholds: Tuple[float, ...] = field(default_factory=default_ar_thresholds)
    ap_iou: float = 0.5
    ood_algorithm: str = "energy"
    recall_grid: Tuple[float, ...] = field(default_factory=default_recall_grid)
    histogram_bins: int = 50

    def __post_init__(self):
        object.__setattr__(self, "ar_iou_thresholds", tuple(float(t) for t in self.ar_iou_thresholds))
        object.__setattr__(self, "recall_grid", tuple(float(r) for r in self.recall_grid))
        if not (self.temperature > 0 and math.isfinite(self.temperature)):
            raise InputError(f"temperature must be a positive finite number, got {self.temperature}")
        if math.isnan(self.id_thresh):
            raise InputError("id_thresh is NaN")
        if self.k_per_image < 1:
            raise InputError(f"k_per_image must be positive, got {self.k_per_image}")
        if not (0.0 <= self.iou_bg < self.iou_match <= 1.0):
            raise InputError(f"need 0 <= iou_bg < iou_match <= 1, got {self.iou_bg}, {self.iou_match}")
        if not (0.0 < self.ap_iou <= 1.0):
            raise InputError(f"ap_iou must be in (0, 1], got {self.ap_iou}")
        if not self.ar_iou_thresholds or not all(0.0 < t <= 1.0 for t in self.ar_iou_thresholds):
            raise InputError("ar_iou_thresholds must be non-empty and within (0, 1]")
        grid = self.recall_grid
        if not grid or list(grid) != sorted(grid) or not all(0.0 <= r <= 1.0 for r in grid):
            raise InputError("recall_grid must be sorted and within [0, 1]")
        if self.ood_algorithm not in OOD_ALGORITHMS:
            raise InputError(f"unknown OOD algorithm {self.ood_algorithm!r}; choose from {OOD_ALGORITHMS}")
        if self.histogram_bins < 1:
            raise InputError("histogram_bins must be positive")


def check_same_image(dets: Sequence[Detection], gts: Sequence[GroundTruthObject]):
    ids = {d.image_id for d in dets} | {g.image_id for g in gts}
    if len(ids) > 1:
        raise InputError(f"records span several images: {sorted(map(str, ids))}")
