"""Reading annotation / detection / split files and writing reports."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from .core import (
    Box,
    ClassSplit,
    Detection,
    EvalConfig,
    GroundTruthObject,
    InputError,
)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class ImageInfo:
    id: object
    width: float
    height: float


@dataclass(frozen=True)
class DatasetBundle:
    images: Tuple[ImageInfo, ...]
    gts: Tuple[GroundTruthObject, ...]
    dets: Tuple[Detection, ...]
    split: ClassSplit
    cfg: EvalConfig = EvalConfig()
    categories: Tuple[Tuple[int, str], ...] = ()

    def validate(self):
        known = {img.id for img in self.images}
        for kind, recs in (("ground truth", self.gts), ("detection", self.dets)):
            for i, rec in enumerate(recs):
                if rec.image_id not in known:
                    raise InputError(f"{kind} {i} refers to unknown image {rec.image_id!r}")
        c = self.split.num_classes
        for i, d in enumerate(self.dets):
            if len(d.logits) != c:
                raise InputError(f"detection {i} has {len(d.logits)} logits, expected {c}")


def _read_json(path: PathLike):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None


def _box_from_corner(bbox, where: str) -> Box:
    if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
        raise InputError(f"{where}: bbox must be a list of 4 numbers")
    try:
        x, y, w, h = (float(v) for v in bbox)
    except (TypeError, ValueError):
        raise InputError(f"{where}: bbox must be a list of 4 numbers") from None
    if not all(math.isfinite(v) for v in (x, y, w, h)):
        raise InputError(f"{where}: bbox has non-finite values")
    if w <= 0 or h <= 0:
        raise InputError(f"{where}: degenerate bbox (w={w}, h={h})")
    return Box.from_corner(x, y, w, h)


def load_ground_truth(path: PathLike) -> Tuple[List[ImageInfo], List[GroundTruthObject]]:
    """Load a COCO-style annotation file.

    Crowd annotations are rejected, as are boxes with non-positive size.
    """
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be an object")
    for key in ("images", "annotations", "categories"):
        if key not in doc:
            raise InputError(f"{path}: missing key {key!r}")
    images = []
    for i, img in enumerate(doc["images"]):
        try:
            images.append(ImageInfo(img["id"], float(img["width"]), float(img["height"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: images[{i}]: bad or missing field {exc}") from None
    image_ids = {img.id for img in images}
    if len(image_ids) != len(images):
        raise InputError(f"{path}: duplicate image ids")
    try:
        cat_ids = {int(c["id"]) for c in doc["categories"]}
    except (KeyError, TypeError, ValueError):
        raise InputError(f"{path}: every category needs an integer id") from None

    gts = []
    for i, ann in enumerate(doc["annotations"]):
        ann_id = ann.get("id", i) if isinstance(ann, dict) else i
        where = f"{path}: annotation id {ann_id}"
        if not isinstance(ann, dict):
            raise InputError(f"{where}: not an object")
        for key in ("image_id", "category_id", "bbox"):
            if key not in ann:
                raise InputError(f"{where}: missing key {key!r}")
        if ann.get("iscrowd", 0):
            raise InputError(f"{where}: crowd annotations are not supported")
        if ann["image_id"] not in image_ids:
            raise InputError(f"{where}: unknown image_id {ann['image_id']!r}")
        cat = ann["category_id"]
        if not isinstance(cat, int) or cat not in cat_ids:
            raise InputError(f"{where}: category_id {cat!r} not in categories")
        box = _box_from_corner(ann["bbox"], where)
        gts.append(GroundTruthObject(ann["image_id"], box, cat, annotation_id=ann.get("id")))
    return images, gts


def iter_detection_records(path: PathLike) -> Iterator[Tuple[int, dict]]:
    """Yield ``(line_number, record)`` for each non-blank line of a JSON Lines file."""
    try:
        fh = open(path)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise InputError(f"{path}:{lineno}: record must be an object")
            yield lineno, rec


def _float_vector(value, where: str, name: str) -> Tuple[float, ...]:
    if not isinstance(value, list) or not value:
        raise InputError(f"{where}: {name} must be a non-empty list of numbers")
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise InputError(f"{where}: {name} must be a non-empty list of numbers") from None
    if not all(math.isfinite(v) for v in out):
        raise InputError(f"{where}: {name} has non-finite values")
    return out


def detection_from_record(rec: dict, where: str) -> Detection:
    for key in ("image_id", "bbox", "logits", "objectness"):
        if key not in rec:
            raise InputError(f"{where}: missing key {key!r}")
    box = _box_from_corner(rec["bbox"], where)
    logits = _float_vector(rec["logits"], where, "logits")
    try:
        objectness = float(rec["objectness"])
    except (TypeError, ValueError):
        raise InputError(f"{where}: objectness must be a number") from None
    if not (0.0 <= objectness <= 1.0):
        raise InputError(f"{where}: objectness {objectness} outside [0, 1]")
    features = None
    if rec.get("features") is not None:
        features = _float_vector(rec["features"], where, "features")
    return Detection(rec["image_id"], box, logits, objectness, features)


def load_detections(path: PathLike) -> List[Detection]:
    """Load detections from JSON Lines, keeping file order.

    Loading is all-or-nothing: the first bad line raises and nothing is
    returned. Extra keys (such as those written by ``decide``) are ignored.
    """
    return [detection_from_record(rec, f"{path}:{lineno}") for lineno, rec in iter_detection_records(path)]


def load_split(path: PathLike) -> ClassSplit:
    doc = _read_json(path)
    if not isinstance(doc, dict) or "id_classes" not in doc:
        raise InputError(f"{path}: expected an object with 'id_classes'")
    alias = doc.get("alias_map") or {}
    try:
        return ClassSplit(tuple(int(c) for c in doc["id_classes"]), {int(k): int(v) for k, v in alias.items()})
    except (TypeError, ValueError, AttributeError) as exc:
        raise InputError(f"{path}: {exc}") from None


def load_reference_features(path: PathLike) -> Dict[int, List[Tuple[float, ...]]]:
    """Reference ID features for Mahalanobis fitting.

    JSON Lines with ``{"class": <id class>, "features": [...]}`` per line.
    """
    out: Dict[int, List[Tuple[float, ...]]] = {}
    for lineno, rec in iter_detection_records(path):
        where = f"{path}:{lineno}"
        if "class" not in rec or "features" not in rec:
            raise InputError(f"{where}: need 'class' and 'features'")
        out.setdefault(int(rec["class"]), []).append(_float_vector(rec["features"], where, "features"))
    return out


# ---------------------------------------------------------------------------
# writing


def _jsonable(value):
    """Convert report objects to plain JSON types; infinities become strings."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return None
        return value
    if hasattr(value, "item"):  # numpy scalar
        return _jsonable(value.item())
    return value


def dumps(doc) -> str:
    # repr-based float output: shortest round-trip, up to 17 significant digits
    return json.dumps(_jsonable(doc), indent=2, allow_nan=False) + "\n"


def report_document(report, cfg: EvalConfig, **extra) -> dict:
    doc = {"report": _jsonable(report), "config": _jsonable(cfg)}
    doc.update({k: _jsonable(v) for k, v in extra.items()})
    return doc


def write_report(report, cfg: EvalConfig, path: Optional[PathLike] = None, **extra) -> str:
    """Serialise a report (plus the config used) as one JSON document.

    Returns the text; also writes it when ``path`` is given.
    """
    text = dumps(report_document(report, cfg, **extra))
    if path is not None:
        Path(path).write_text(text)
    return text


def write_jsonl(records: Sequence[dict], path: PathLike):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, allow_nan=False))
            fh.write("\n")


def detection_record(det: Detection, bbox: Optional[Sequence[float]] = None) -> dict:
    rec = {
        "image_id": det.image_id,
        "bbox": list(bbox) if bbox is not None else list(det.box.to_corner()),
        "logits": list(det.logits),
        "objectness": det.objectness,
    }
    if det.features is not None:
        rec["features"] = list(det.features)
    return rec


def write_ground_truth(
    images: Sequence[ImageInfo],
    gts: Sequence[GroundTruthObject],
    categories: Sequence[Tuple[int, str]],
    path: PathLike,
    bboxes: Optional[Sequence[Sequence[float]]] = None,
):
    """Write COCO-style annotations; ``bboxes`` overrides the corner boxes."""
    anns = []
    for i, g in enumerate(gts):
        bbox = list(bboxes[i]) if bboxes is not None else list(g.box.to_corner())
        ann_id = g.annotation_id if g.annotation_id is not None else i + 1
        anns.append({"id": ann_id, "image_id": g.image_id, "category_id": g.dataset_class, "bbox": bbox, "iscrowd": 0})
    doc = {
        "images": [{"id": im.id, "width": im.width, "height": im.height} for im in images],
        "annotations": anns,
        "categories": [{"id": cid, "name": name} for cid, name in categories],
    }
    Path(path).write_text(json.dumps(doc, allow_nan=False) + "\n")


def write_split(split: ClassSplit, path: PathLike):
    doc = {"id_classes": list(split.id_classes), "alias_map": {str(k): v for k, v in split.alias_map.items()}}
    Path(path).write_text(json.dumps(doc) + "\n")
