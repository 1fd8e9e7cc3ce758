"""Deterministic synthetic detector outputs with tunable separability.

Randomness comes from counter-based Philox streams keyed by
``(seed, image, stream)``. Each quantity (layout, logits, scores, jitter,
features) has its own stream and every object consumes a fixed number of
draws, so turning one knob leaves the other quantities untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Dict, List, Optional, Tuple

import numpy as np

from .core import Box, ClassSplit, Detection, EvalConfig, GroundTruthObject, InputError
from .io import DatasetBundle, ImageInfo
from .partition import iou_matrix

_LAYOUT, _LOGITS, _SCORES, _JITTER, _FEATURES = range(5)
_MAX_TRIES = 200


class SynthError(InputError):
    """The requested layout could not be placed."""


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    num_images: int = 10
    id_classes: int = 5
    ood_classes: int = 3
    objects_per_image: Tuple[int, int] = (2, 6)
    ood_fraction: float = 0.3
    id_score_separation: float = 2.0
    objectness_separation: float = 2.0
    localization_noise: float = 0.0
    fp_rate: float = 0.0
    miss_rate: float = 0.0
    bg_per_image: int = 5
    image_size: Tuple[int, int] = (640, 480)
    logit_scale: float = 1.0
    feature_dim: int = 0

    def __post_init__(self):
        object.__setattr__(self, "objects_per_image", tuple(int(v) for v in self.objects_per_image))
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        lo, hi = self.objects_per_image
        if not 0 <= lo <= hi:
            raise InputError(f"objects_per_image must satisfy 0 <= min <= max, got {self.objects_per_image}")
        if self.num_images < 0 or self.bg_per_image < 0:
            raise InputError("num_images and bg_per_image must be non-negative")
        if self.id_classes < 1 or self.ood_classes < 0:
            raise InputError("need at least one ID class and a non-negative OOD class count")
        for name in ("ood_fraction", "fp_rate", "miss_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InputError(f"{name} must be in [0, 1]")
        if self.ood_classes == 0 and self.ood_fraction > 0:
            raise InputError("ood_fraction > 0 needs at least one OOD class")
        if self.localization_noise < 0 or self.logit_scale <= 0:
            raise InputError("localization_noise must be >= 0 and logit_scale > 0")
        if min(self.image_size) <= 0:
            raise InputError("image_size must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise InputError(f"unknown synth config keys: {unknown}")
        return cls(**doc)


def _stream(seed: int, image: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, image, stream])))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _place_objects(rng, n: int, width: int, height: int) -> np.ndarray:
    """Corner boxes ``(x, y, w, h)`` with pairwise IoU below 0.3."""
    placed = np.zeros((0, 4))
    for _ in range(n):
        for _ in range(_MAX_TRIES):
            w = rng.uniform(0.08, 0.3) * width
            h = rng.uniform(0.08, 0.3) * height
            x = rng.uniform(0, width - w)
            y = rng.uniform(0, height - h)
            cand = np.array([[x, y, w, h]])
            if not len(placed) or iou_matrix(_xyxy(cand), _xyxy(placed)).max() < 0.3:
                placed = np.vstack([placed, cand])
                break
        else:
            raise SynthError(f"could not place {n} non-overlapping objects in a {width}x{height} image")
    return placed


def _place_background(rng, n: int, width: int, height: int, objects: np.ndarray) -> np.ndarray:
    """Background proposal boxes overlapping every object by IoU < 0.2."""
    out = np.zeros((0, 4))
    for _ in range(_MAX_TRIES):
        if len(out) >= n:
            break
        m = 2 * n
        w = rng.uniform(0.03, 0.15, m) * width
        h = rng.uniform(0.03, 0.15, m) * height
        x = rng.uniform(0, 1, m) * (width - w)
        y = rng.uniform(0, 1, m) * (height - h)
        cand = np.stack([x, y, w, h], axis=1)
        if len(objects):
            ok = iou_matrix(_xyxy(cand), _xyxy(objects)).max(axis=1) < 0.2
            cand = cand[ok]
        out = np.vstack([out, cand])
    if len(out) < n:
        raise SynthError(f"could not place {n} background proposals")
    return out[:n]


def _xyxy(corner: np.ndarray) -> np.ndarray:
    return np.concatenate([corner[:, :2], corner[:, :2] + corner[:, 2:]], axis=1)


def _shape_logits(base: np.ndarray, cls: int, boost: float) -> np.ndarray:
    """Move the largest logit to ``cls`` and raise it by ``boost``.

    The swap is a permutation, so every permutation-invariant ID score
    keeps the distribution it had before; only ``boost`` separates.
    """
    z = base.copy()
    top = int(np.argmax(z))
    z[top], z[cls] = z[cls], z[top]
    z[cls] += boost
    return z


def _image(cfg: SynthConfig, i: int):
    width, height = cfg.image_size
    C = cfg.id_classes
    lo, hi = cfg.objects_per_image
    layout = _stream(cfg.seed, i, _LAYOUT)
    n = int(layout.integers(lo, hi + 1))
    is_ood = layout.random(hi)[:n] < cfg.ood_fraction
    id_cls = layout.integers(0, C, hi)[:n]
    ood_cls = layout.integers(0, max(cfg.ood_classes, 1), hi)[:n]
    objects = _place_objects(layout, n, width, height)
    bg = _place_background(layout, cfg.bg_per_image, width, height, objects)

    logit_rng = _stream(cfg.seed, i, _LOGITS)
    obj_base = logit_rng.normal(0.0, cfg.logit_scale, (hi, C))
    bg_base = logit_rng.normal(0.0, cfg.logit_scale, (cfg.bg_per_image, C))
    fp_cls = logit_rng.integers(0, C, cfg.bg_per_image)

    score_rng = _stream(cfg.seed, i, _SCORES)
    obj_noise = score_rng.normal(size=hi)
    miss_u = score_rng.random(hi)
    bg_noise = score_rng.normal(size=cfg.bg_per_image)
    fp_u = score_rng.random(cfg.bg_per_image)

    jitter = _stream(cfg.seed, i, _JITTER).normal(size=(hi, 4)) * cfg.localization_noise

    feats_obj = feats_bg = None
    if cfg.feature_dim:
        frng = _stream(cfg.seed, i, _FEATURES)
        feats_obj = frng.normal(size=(hi, cfg.feature_dim))
        feats_bg = frng.normal(size=(cfg.bg_per_image, cfg.feature_dim))

    half_fg = cfg.objectness_separation / 2.0
    gts, dets = [], []
    for j in range(n):
        dataset_class = C + 1 + int(ood_cls[j]) if is_ood[j] else 1 + int(id_cls[j])
        x, y, w, h = (float(v) for v in objects[j])
        gts.append((dataset_class, [x, y, w, h]))
        if miss_u[j] < cfg.miss_rate:
            continue
        if is_ood[j]:
            logits = obj_base[j]
        else:
            logits = _shape_logits(obj_base[j], int(id_cls[j]), cfg.id_score_separation)
        if cfg.localization_noise:
            dx, dy, dw, dh = jitter[j]
            bw, bh = max(w + dw, 1.0), max(h + dh, 1.0)
            bbox = [x + w / 2 + dx - bw / 2, y + h / 2 + dy - bh / 2, bw, bh]
        else:
            bbox = [x, y, w, h]
        feat = None
        if feats_obj is not None:
            feat = feats_obj[j] + (0.0 if is_ood[j] else _class_mean(int(id_cls[j]), cfg))
        dets.append((bbox, logits, float(_sigmoid(obj_noise[j] + half_fg)), feat))
    for b in range(cfg.bg_per_image):
        hard = fp_u[b] < cfg.fp_rate
        if hard:
            logits = _shape_logits(bg_base[b], int(fp_cls[b]), cfg.id_score_separation)
            objectness = float(_sigmoid(bg_noise[b] + half_fg))
        else:
            logits = bg_base[b]
            objectness = float(_sigmoid(bg_noise[b] - half_fg))
        feat = None if feats_bg is None else feats_bg[b]
        dets.append(([float(v) for v in bg[b]], logits, objectness, feat))
    return gts, dets


def _class_mean(cls: int, cfg: SynthConfig) -> np.ndarray:
    mu = np.zeros(cfg.feature_dim)
    mu[cls % cfg.feature_dim] = 3.0 + cfg.id_score_separation
    return mu


def generate_records(cfg: SynthConfig) -> Tuple[List[dict], List[dict], List[dict], ClassSplit]:
    """Plain-JSON form of a synthetic bundle: ``(images, annotations, detections, split)``.

    Boxes are corner format, exactly as they would appear in files.
    """
    width, height = cfg.image_size
    images, anns, det_recs = [], [], []
    for i in range(cfg.num_images):
        image_id = i + 1
        images.append({"id": image_id, "width": width, "height": height})
        gts, dets = _image(cfg, i)
        for cls, bbox in gts:
            anns.append(
                {"id": len(anns) + 1, "image_id": image_id, "category_id": cls, "bbox": bbox, "iscrowd": 0}
            )
        for bbox, logits, objectness, feat in dets:
            rec = {"image_id": image_id, "bbox": bbox, "logits": logits.tolist(), "objectness": objectness}
            if feat is not None:
                rec["features"] = feat.tolist()
            det_recs.append(rec)
    split = ClassSplit(tuple(range(1, cfg.id_classes + 1)))
    return images, anns, det_recs, split


def categories(cfg: SynthConfig) -> List[Tuple[int, str]]:
    cats = [(c, f"id_{c}") for c in range(1, cfg.id_classes + 1)]
    cats += [(cfg.id_classes + 1 + k, f"ood_{k + 1}") for k in range(cfg.ood_classes)]
    return cats


def generate(cfg: SynthConfig, eval_cfg: Optional[EvalConfig] = None) -> DatasetBundle:
    images, anns, det_recs, split = generate_records(cfg)
    gts = tuple(
        GroundTruthObject(a["image_id"], Box.from_corner(*a["bbox"]), a["category_id"], a["id"]) for a in anns
    )
    dets = tuple(
        Detection(
            r["image_id"],
            Box.from_corner(*r["bbox"]),
            tuple(r["logits"]),
            r["objectness"],
            tuple(r["features"]) if "features" in r else None,
        )
        for r in det_recs
    )
    return DatasetBundle(
        images=tuple(ImageInfo(im["id"], im["width"], im["height"]) for im in images),
        gts=gts,
        dets=dets,
        split=split,
        cfg=eval_cfg or EvalConfig(),
        categories=tuple(categories(cfg)),
    )


def reference_features(cfg: SynthConfig, per_class: int = 50) -> Dict[int, List[List[float]]]:
    """ID training features drawn from the same class-conditional model."""
    if not cfg.feature_dim:
        raise InputError("feature_dim is 0: no features to draw")
    rng = _stream(cfg.seed, -1 & 0xFFFFFFFF, _FEATURES)
    out = {}
    for c in range(cfg.id_classes):
        x = rng.normal(size=(per_class, cfg.feature_dim)) + _class_mean(c, cfg)
        out[c + 1] = x.tolist()
    return out
