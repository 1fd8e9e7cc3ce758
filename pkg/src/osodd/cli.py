"""Command-line entry point: ``osodd {evaluate,aosp,decide,partition,synth}``.

Exit codes: 0 success, 1 bad input, 2 the requested metric is undefined
for this data (for instance AOSP without any OOD ground truth).
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

import numpy as np

from . import synth as synth_mod
from .core import Box, EvalConfig, GroundTruthObject, InputError, OsoddError, UndefinedMetricError
from .decision import decide_all, fit_mahalanobis
from .io import (
    DatasetBundle,
    ImageInfo,
    dumps,
    iter_detection_records,
    load_detections,
    load_ground_truth,
    load_reference_features,
    load_split,
    write_ground_truth,
    write_jsonl,
    write_report,
    write_split,
)
from .metrics import frame_from_records, evaluate as evaluate_records
from .partition import match_and_partition


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _eval_options(p: argparse.ArgumentParser, with_gt: bool = True):
    if with_gt:
        p.add_argument("--gt", required=True, help="COCO-style ground-truth JSON")
    p.add_argument("--dets", required=True, help="detections, JSON Lines")
    p.add_argument("--split", required=True, help="ID class split JSON")
    p.add_argument("--ood-algo", default="energy", choices=["energy", "msp", "max_logit", "mahalanobis"])
    p.add_argument("--id-thresh", type=_float, default=0.0, help="ID score threshold (accepts inf/-inf)")
    p.add_argument("--temperature", type=_float, default=1.0)
    p.add_argument("--k", type=int, default=100, help="detections kept per image")
    p.add_argument("--ref-features", help="JSON Lines of ID reference features (mahalanobis only)")
    p.add_argument("--out", help="output file (default: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osodd", description="Open-set object detection evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="full metric report")
    _eval_options(p)
    p.add_argument("--workers", type=int, default=1, help="processes for per-image matching")
    p.add_argument("--bins", type=int, default=50, help="histogram bins")

    p = sub.add_parser("aosp", help="AOSP value and curve")
    _eval_options(p)

    p = sub.add_parser("decide", help="write decided detections")
    _eval_options(p, with_gt=False)

    p = sub.add_parser("partition", help="per-detection ID/OOD/background labels")
    _eval_options(p)

    p = sub.add_parser("synth", help="generate a synthetic bundle")
    p.add_argument("--config", required=True, help="synth config JSON")
    p.add_argument("--out-gt", required=True)
    p.add_argument("--out-dets", required=True)
    p.add_argument("--out-split", required=True)
    p.add_argument("--out-ref", help="also write reference ID features (needs feature_dim > 0)")
    return parser


def _config(args, **extra) -> EvalConfig:
    return EvalConfig(
        temperature=args.temperature,
        id_thresh=args.id_thresh,
        k_per_image=args.k,
        ood_algorithm=args.ood_algo,
        **extra,
    )


def _model(args):
    if args.ood_algo != "mahalanobis":
        return None
    if not args.ref_features:
        raise InputError("--ood-algo mahalanobis needs --ref-features")
    return fit_mahalanobis(load_reference_features(args.ref_features))


def _load_bundle(args, cfg: EvalConfig) -> DatasetBundle:
    images, gts = load_ground_truth(args.gt)
    split = load_split(args.split)
    dets = load_detections(args.dets)
    bundle = DatasetBundle(tuple(images), tuple(gts), tuple(dets), split, cfg)
    bundle.validate()
    return bundle


def _emit(text: str, out: Optional[str]):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_evaluate(args) -> int:
    cfg = _config(args, histogram_bins=args.bins)
    b = _load_bundle(args, cfg)
    report = evaluate_records(
        b.dets, b.gts, b.split, cfg, images=[im.id for im in b.images], model=_model(args), workers=args.workers
    )
    _emit(write_report(report, cfg), args.out)
    return 0


def cmd_aosp(args) -> int:
    cfg = _config(args)
    b = _load_bundle(args, cfg)
    decided = decide_all(b.dets, b.split, cfg, _model(args))
    value, curve = frame_from_records(
        decided, b.gts, b.split, cfg, use_decided=False, need_scores=True, images=[im.id for im in b.images]
    ).aosp()
    _emit(dumps({"aosp": value, "curve": curve, "config": cfg}), args.out)
    return 0


def cmd_decide(args) -> int:
    cfg = _config(args)
    split = load_split(args.split)
    records = [rec for _, rec in iter_detection_records(args.dets)]
    dets = load_detections(args.dets)
    decided = decide_all(dets, split, cfg, _model(args))
    out = []
    for rec, d in zip(records, decided):
        rec = dict(rec)
        rec["decided_class"] = d.decided_class
        rec["confidence"] = d.confidence
        rec["id_score"] = d.id_score
        out.append(rec)
    if args.out:
        write_jsonl(out, args.out)
    else:
        for rec in out:
            sys.stdout.write(json.dumps(rec) + "\n")
    return 0


def cmd_partition(args) -> int:
    cfg = _config(args)
    b = _load_bundle(args, cfg)
    dets_by_image, gts_by_image = {}, {}
    for i, d in enumerate(b.dets):
        dets_by_image.setdefault(d.image_id, []).append(i)
    for g in b.gts:
        gts_by_image.setdefault(g.image_id, []).append(g)
    labels = [None] * len(b.dets)
    for image_id, idx in dets_by_image.items():
        gts = gts_by_image.get(image_id, [])
        result = match_and_partition([b.dets[i] for i in idx], gts, b.split, cfg)
        for i, lab in zip(idx, result.labels):
            gt = gts[lab.gt_index] if lab.gt_index is not None else None
            labels[i] = {
                "index": i,
                "image_id": image_id,
                "label": lab.kind.value,
                "gt_annotation_id": None if gt is None else gt.annotation_id,
            }
    if args.out:
        write_jsonl(labels, args.out)
    else:
        for rec in labels:
            sys.stdout.write(json.dumps(rec) + "\n")
    return 0


def cmd_synth(args) -> int:
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{args.config}: {exc}") from None
    cfg = synth_mod.SynthConfig.from_dict(doc)
    images, anns, dets, split = synth_mod.generate_records(cfg)
    gts = [GroundTruthObject(a["image_id"], Box.from_corner(*a["bbox"]), a["category_id"], a["id"]) for a in anns]
    write_ground_truth(
        [ImageInfo(im["id"], im["width"], im["height"]) for im in images],
        gts,
        synth_mod.categories(cfg),
        args.out_gt,
        bboxes=[a["bbox"] for a in anns],
    )
    write_jsonl(dets, args.out_dets)
    write_split(split, args.out_split)
    if args.out_ref:
        ref = synth_mod.reference_features(cfg)
        write_jsonl([{"class": c, "features": f} for c, rows in ref.items() for f in rows], args.out_ref)
    return 0


COMMANDS = {
    "evaluate": cmd_evaluate,
    "aosp": cmd_aosp,
    "decide": cmd_decide,
    "partition": cmd_partition,
    "synth": cmd_synth,
}


def run_cli(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UndefinedMetricError as exc:
        print(f"osodd: undefined metric: {exc}", file=sys.stderr)
        return 2
    except (OsoddError, OSError, np.linalg.LinAlgError) as exc:
        print(f"osodd: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
