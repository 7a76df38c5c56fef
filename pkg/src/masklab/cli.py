"""Command-line interface.

Subcommands: ``label``, ``refine``, ``synth``, ``metrics``, ``check-grad``,
``bench``, and ``config init``. All outputs are files or JSON on stdout;
identical inputs, config, and seed produce byte-identical outputs (bench
timing figures excepted). The ``MAL_THREADS`` environment variable
overrides the configured worker count without affecting results.

Exit codes: 0 success, 1 any per-item failure, 2 config or argument error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import gradcheck
from .boxes import BBox
from .config import RunConfig
from .crf import build_kernel, mean_field, threshold
from .errors import ConfigError, MaskLabError
from .imaging import (
    BinaryMask,
    ProbMask,
    load_binary_mask,
    load_image,
    load_prob_mask,
    save_binary_mask,
    save_image,
    save_prob_mask,
)
from .metrics import assignment_from_mask, clustering_score, mask_dice, mask_iou, FeatureField
from .imaging import _read_malf  # feature fields ride the native container
from .rng import stream
from .roi import make_crop_geometry, mask_to_image_space
from .synth import SHAPES, SceneSpec, generate
from .training import optimize_logits


def _thread_count(config: RunConfig) -> int:
    env = os.environ.get("MAL_THREADS")
    if env is None:
        return config.parallelism
    try:
        value = int(env)
    except ValueError as exc:
        raise ConfigError(f"MAL_THREADS must be an integer, got {env!r}") from exc
    if value < 1:
        raise ConfigError(f"MAL_THREADS must be >= 1, got {value}")
    return value


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return RunConfig.load(path)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# label


def _label_one(task: dict, config: RunConfig, out_dir: Path) -> dict:
    entry = {"id": task["id"], "image_path": task["image_path"], "box": task["box"], "ok": False}
    try:
        img = load_image(task["image_path"])
        box = BBox.from_list(task["box"])
        rng = stream(config.seed, task["item_index"], task["box_index"])
        crop_img, geom = make_crop_geometry(
            box, img, config.expansion_params(), config.crop_size, config.crop_size, rng
        )
        result = optimize_logits(
            crop_img, geom, config.loss_weights(), config.crf_params(), config.logit_config(), rng
        )
        params = config.crf_params()
        pred_mask = threshold(result.mask, params)
        refined_mask = threshold(result.refined, params)

        stem = out_dir / str(task["id"])
        save_prob_mask(result.mask, f"{stem}_pred.malf")
        save_binary_mask(pred_mask, f"{stem}_pred_mask.pgm")
        save_prob_mask(result.refined, f"{stem}_refined.malf")
        save_binary_mask(refined_mask, f"{stem}_refined_mask.pgm")
        _write_json(Path(f"{stem}_geom.json"), geom.to_json())
        with open(f"{stem}_trace.csv", "w") as f:
            f.write("step,loss_mil,loss_crf,loss_total\n")
            for step, lm, lc, lt in result.trace:
                f.write(f"{step},{lm:.12g},{lc:.12g},{lt:.12g}\n")

        entry["outputs"] = {
            "pred": f"{stem}_pred.malf",
            "pred_mask": f"{stem}_pred_mask.pgm",
            "refined": f"{stem}_refined.malf",
            "refined_mask": f"{stem}_refined_mask.pgm",
            "geometry": f"{stem}_geom.json",
            "trace": f"{stem}_trace.csv",
        }
        if result.trace:
            _, lm, lc, lt = result.trace[-1]
            entry["final_loss"] = {"mil": lm, "crf": lc, "total": lt}
        if task.get("gt_mask_path"):
            gt = load_binary_mask(task["gt_mask_path"])
            pasted = mask_to_image_space(result.mask, geom, gt.width, gt.height)
            pred_full = threshold(pasted, params)
            entry["iou"] = mask_iou(pred_full, gt)
        entry["ok"] = True
    except (MaskLabError, OSError, ValueError) as exc:
        entry["error"] = f"{type(exc).__name__}: {exc}"
    return entry


def cmd_label(args) -> int:
    config = _load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        annotations = json.loads(Path(args.annotations).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read annotations: {exc}") from exc
    items = annotations.get("items")
    if not isinstance(items, list):
        raise ConfigError("annotations must contain an 'items' list")

    tasks = []
    for item_index, item in enumerate(items):
        boxes = item.get("boxes", [])
        ids = item.get("ids") or [f"item{item_index:04d}_box{k:03d}" for k in range(len(boxes))]
        if len(ids) != len(boxes):
            raise ConfigError(f"item {item_index}: ids and boxes lengths differ")
        gt_paths = item.get("gt_mask_paths") or [None] * len(boxes)
        if len(gt_paths) != len(boxes):
            raise ConfigError(f"item {item_index}: gt_mask_paths and boxes lengths differ")
        for box_index, (box, box_id, gt) in enumerate(zip(boxes, ids, gt_paths)):
            tasks.append(
                {
                    "item_index": item_index,
                    "box_index": box_index,
                    "id": box_id,
                    "image_path": item.get("image_path", ""),
                    "box": box,
                    "gt_mask_path": gt,
                }
            )

    workers = _thread_count(config)
    if tasks and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(lambda t: _label_one(t, config, out_dir), tasks))
    else:
        entries = [_label_one(t, config, out_dir) for t in tasks]

    failed = [e for e in entries if not e["ok"]]
    ious = [e["iou"] for e in entries if "iou" in e]
    summary = {
        "items": entries,
        "num_boxes": len(entries),
        "num_failed": len(failed),
        "config": config.to_json(),
    }
    if ious:
        summary["mean_iou"] = float(np.mean(ious))
    _write_json(out_dir / "summary.json", summary)
    print(f"labeled {len(entries) - len(failed)}/{len(entries)} boxes -> {out_dir}")
    if ious:
        print(f"mean IoU {summary['mean_iou']:.4f} over {len(ious)} boxes with ground truth")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# refine


def cmd_refine(args) -> int:
    config = _load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    img = load_image(args.image)
    mask = load_prob_mask(args.mask)
    params = config.crf_params()
    kernel = build_kernel(img, params)
    refined, iters = mean_field(mask, kernel, params)
    bits = threshold(refined, params)
    save_prob_mask(refined, out_dir / "refined.malf")
    save_binary_mask(bits, out_dir / "refined_mask.pgm")
    print(f"refined in {iters} iterations -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    shapes = args.shapes.split(",") if args.shapes else list(SHAPES)
    for s in shapes:
        if s not in SHAPES:
            raise ConfigError(f"unknown shape {s!r}; choose from {SHAPES}")
    items = []
    for i in range(args.count):
        spec = SceneSpec(
            width=args.size,
            height=args.size,
            shape=shapes[i % len(shapes)],
            noise_sigma=args.sigma,
            distractor_count=args.distractors,
            seed=args.seed + i,
        )
        img, gt, box = generate(spec)
        image_path = out_dir / f"scene{i:04d}.png"
        gt_path = out_dir / f"scene{i:04d}_gt.pgm"
        save_image(img, image_path)
        save_binary_mask(gt, gt_path)
        items.append(
            {
                "image_path": str(image_path),
                "boxes": [box.as_list()],
                "ids": [f"scene{i:04d}"],
                "gt_mask_paths": [str(gt_path)],
            }
        )
    _write_json(out_dir / "annotations.json", {"items": items})
    print(f"wrote {args.count} scenes -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# metrics


def cmd_metrics(args) -> int:
    pred = load_binary_mask(args.pred)
    gt = load_binary_mask(args.gt)
    report = {"iou": mask_iou(pred, gt), "dice": mask_dice(pred, gt)}
    if args.features:
        arr = _read_malf(Path(args.features))
        feats = FeatureField(arr)
        assign = assignment_from_mask(gt, feats.height, feats.width)
        report["clustering_score"] = clustering_score(feats, assign)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# check-grad


def cmd_check_grad(args) -> int:
    if args.count < 1:
        raise ConfigError(f"--count must be >= 1, got {args.count}")
    report = gradcheck.run_checks(args.seed, args.count, inject_error=args.inject_error)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if report["pass"] else 1


# ---------------------------------------------------------------------------
# bench


def _bench_case(config: RunConfig, size: int, index: int):
    rng = stream(config.seed, size, index)
    side = max(1, size)
    spec_seed = config.seed * 1000 + size + index
    spec = SceneSpec(
        width=max(8, side),
        height=max(8, side),
        shape=SHAPES[index % len(SHAPES)],
        seed=spec_seed,
    )
    img, _, _ = generate(spec)
    if side < 8:  # degenerate sizes are exercised directly
        img = type(img)(img.data[:side, :side, :])
    noisy = np.clip(0.5 + 0.3 * rng.standard_normal((side, side)), 0.0, 1.0)
    return img, ProbMask(noisy)


def cmd_bench(args) -> int:
    config = _load_config(args.config)
    sizes = [int(s) for s in args.sizes.split(",")]
    if any(s < 1 for s in sizes):
        raise ConfigError("bench sizes must be >= 1")
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    workers = _thread_count(config)
    # fixed iteration budget: tol=0 disables early stopping
    params_fields = config.crf_params().__dict__ | {"tol": 0.0}
    from .crf import CrfParams

    params = CrfParams(**params_fields)
    timings = []
    print(f"{'size':>6} {'mean_field px/s':>18} {'loss px/s':>14} {'iters':>6}")
    for size in sizes:
        cases = [_bench_case(config, size, i) for i in range(args.items)]

        def refine_one(case):
            img, mask = case
            kernel = build_kernel(img, params)
            refined, iters = mean_field(mask, kernel, params)
            return refined, iters

        t0 = time.perf_counter()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                refined = list(pool.map(refine_one, cases))
        else:
            refined = [refine_one(c) for c in cases]
        mf_elapsed = time.perf_counter() - t0
        iters = refined[0][1]
        mf_px = size * size * params.max_iters * len(cases) / max(mf_elapsed, 1e-9)

        img, mask = cases[0]
        gt_box = BBox(size * 0.25, size * 0.25, max(size * 0.75, size * 0.25 + 0.5), max(size * 0.75, size * 0.25 + 0.5))
        from .mil import bags_for_box, mil_loss
        from .training import crf_self_training_loss

        loss_px = float("nan")
        try:
            bags = bags_for_box(gt_box, size, size)
            t0 = time.perf_counter()
            reps = max(1, args.items)
            for _ in range(reps):
                mil_loss(mask, bags)
                crf_self_training_loss(mask, refined[0][0])
            loss_elapsed = time.perf_counter() - t0
            loss_px = size * size * reps / max(loss_elapsed, 1e-9)
        except MaskLabError:
            pass  # 1x1 grids have no negative bags; mean-field timing still reported
        print(f"{size:>6} {mf_px:>18.3e} {loss_px:>14.3e} {iters:>6}")
        timings.append({"size": size, "mean_field_px_per_s": mf_px, "loss_px_per_s": loss_px, "iters": iters})

        if out_dir:
            for i, (ref, _) in enumerate(refined):
                save_prob_mask(ref, out_dir / f"bench_{size}_{i:02d}.malf")
    if out_dir:
        _write_json(out_dir / "timings.json", {"threads": workers, "results": timings})
    return 0


# ---------------------------------------------------------------------------
# config


def cmd_config(args) -> int:
    if args.action != "init":
        raise ConfigError(f"unknown config action {args.action!r}")
    config = RunConfig()
    if args.out:
        config.save(args.out)
        print(f"wrote defaults -> {args.out}")
    else:
        print(json.dumps(config.to_json(), indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="masklab", description="Box-supervised mask auto-labeling tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("label", help="auto-label every annotated box")
    p.add_argument("--annotations", required=True, help="annotation JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default=None, help="run config JSON (defaults when omitted)")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("refine", help="mean-field refine a score map against an image")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True, help="score map (.malf/.png/.pgm)")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("synth", help="generate synthetic scenes with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--distractors", type=int, default=0)
    p.add_argument("--shapes", default=None, help="comma-separated subset of rect,ellipse,lshape")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("metrics", help="compare masks and score feature separability")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--features", default=None, help="HxWxD feature field (.malf)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("check-grad", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--inject-error", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check_grad)

    p = sub.add_parser("bench", help="throughput figures and determinism masks")
    p.add_argument("--sizes", default="128,256,512")
    p.add_argument("--items", type=int, default=4)
    p.add_argument("--out", default=None, help="directory for refined masks + timings")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("config", help="configuration helpers")
    p.add_argument("action", choices=["init"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MaskLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
