"""``rtdet`` command line: file-coupled stages of the detection pipeline."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from rtdet import io
from rtdet.anchors import center_heatmap, kmeans_anchors, small_subset
from rtdet.cleaning import CleanConfig, consensus_clean
from rtdet.config import BackendSpec, ConfigError, RunConfig, load_config, print_default_config
from rtdet.evaluation import EvalConfig, Level, evaluate, group_by_frame
from rtdet.geometry import CATEGORIES, area
from rtdet.pipeline import (
    STAGES,
    DetectorBackend,
    EnhancementConfig,
    EnsembleConfig,
    PassDiagnostics,
    ReplayBackend,
    SleepBackend,
    classwise_ensemble,
    detect_frames,
    run_frames,
    scale_enhanced_detect,
)
from rtdet.simulate import SyntheticBackend, generate_dataset
from rtdet.suppression import class_aware_nms

class CliError(Exception):
    pass


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.6f}"


def build_backend(spec: BackendSpec, gt_path: str | None = None) -> DetectorBackend:
    if spec.kind == "replay":
        enhanced = io.read_detections(spec.enhanced_path) if spec.enhanced_path else None
        return ReplayBackend(io.read_detections(spec.path), enhanced, name=spec.name)
    if spec.kind == "stub":
        return SleepBackend(spec.sleep_ms, name=spec.name)
    path = gt_path or spec.gt
    if path is None:
        raise CliError(f"synthetic backend {spec.name!r} needs ground truth: pass --gt or set backends.{spec.name}.gt")
    return SyntheticBackend(io.read_gt(path), spec.detector, name=spec.name)


def _backend(cfg: RunConfig, name: str, gt_path: str | None) -> DetectorBackend:
    if name not in cfg.backends:
        raise CliError(f"unknown backend {name!r}; configured: {', '.join(sorted(cfg.backends)) or 'none'}")
    return build_backend(cfg.backends[name], gt_path)


def _enhancement(cfg: RunConfig, identity: bool) -> EnhancementConfig:
    if identity:
        e = cfg.enhancement
        return EnhancementConfig.identity(small_area_max=e.small_area_max, nms=e.nms)
    return cfg.enhancement


def cmd_simulate(args, cfg: RunConfig) -> int:
    scene = cfg.scene
    if args.n_frames is not None:
        scene = replace(scene, n_frames=args.n_frames)
    gts, frames = generate_dataset(scene)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_gt(out / "gt.jsonl", gts, args.round_px)
    io.write_frames(out / "frames.jsonl", frames)
    small = sum(area(g.box) < scene.small_area_max for g in gts)
    print(f"frames: {len(frames)}\nboxes: {len(gts)}\nsmall_boxes: {small}")
    return 0


def cmd_enhance(args, cfg: RunConfig) -> int:
    frames = sorted(io.read_frames(args.frames), key=lambda f: f.key)
    backend = _backend(cfg, args.backend, args.gt)
    enh = _enhancement(cfg, args.identity)
    diag = PassDiagnostics()
    results = run_frames(lambda f: scale_enhanced_detect(backend, f, enh, diag), frames, args.jobs)
    io.write_detections(args.out, [d for r in results for d in r], args.round_px)
    print(f"frames: {len(frames)}\ndetections: {sum(map(len, results))}\npadding_boxes: {diag.padding_boxes}")
    return 0


def cmd_nms(args, cfg: RunConfig) -> int:
    by_frame = group_by_frame(io.read_detections(args.det))
    keys = sorted(by_frame)
    results = run_frames(lambda k: class_aware_nms(by_frame[k], cfg.nms), keys, args.jobs)
    io.write_detections(args.out, [d for r in results for d in r], args.round_px)
    return 0


def cmd_ensemble(args, cfg: RunConfig) -> int:
    per_backend = {}
    for item in args.input:
        name, sep, path = item.partition("=")
        if not sep:
            raise CliError(f"--input expects NAME=PATH, got {item!r}")
        per_backend[name] = io.read_detections(path)
    merged = classwise_ensemble(per_backend, cfg.ensemble)
    by_frame = group_by_frame(merged)
    io.write_detections(args.out, [d for k in sorted(by_frame) for d in by_frame[k]], args.round_px)
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    gts = io.read_gt(args.gt)
    dets = io.read_detections(args.det)
    levels = [Level.L1, Level.L2] if args.level == "both" else [Level.parse(args.level)]
    rows = []
    lines = []
    for level in levels:
        res = evaluate(dets, gts, EvalConfig(cfg.eval.per_category_iou, level))
        lines.append(f"[{level.name}]")
        for c in CATEGORIES:
            r = res.per_category[c]
            lines.append(
                f"  {c.value:<10} AP={_fmt(r.ap)} positives={r.positives} tp={r.tp} fp={r.fp} ignored={r.ignored}"
            )
            rows.append([level.name, c.value, _fmt(r.ap), r.positives, r.tp, r.fp, r.ignored])
        lines.append(f"  mean_ap={_fmt(res.mean_ap)}")
        rows.append([level.name, "mean", _fmt(res.mean_ap), "", "", "", ""])
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.csv:
        _write_csv(args.csv, ["level", "category", "ap", "positives", "tp", "fp", "ignored"], rows)
    return 0


def cmd_anchors(args, cfg: RunConfig) -> int:
    boxes = [(g.box.width, g.box.height) for g in io.read_gt(args.gt)]
    boxes = [b for b in boxes if b[0] > 0 and b[1] > 0]
    if args.small_only:
        boxes = small_subset(boxes, args.small_area_max, args.small_mode)
    seed = args.seed if args.seed is not None else cfg.seed
    result = kmeans_anchors(boxes, args.k, seed, args.max_iters, args.tol, args.metric, args.update)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for w, h in result.anchors:
            fh.write(f"{w:.4f},{h:.4f}\n")
    smallest = result.anchors[0]
    print(
        f"boxes: {len(boxes)}\nk: {result.k}\nmetric: {args.metric}\niterations: {result.iterations}\n"
        f"mean_distance: {result.mean_distance:.6f}\nsmallest_aspect: {smallest[0] / smallest[1]:.4f}"
    )
    return 0


def cmd_heatmap(args, cfg: RunConfig) -> int:
    frames = {f.key: f for f in io.read_frames(args.frames)}
    grid = center_heatmap(io.read_gt(args.gt), frames, args.grid_w, args.grid_h, args.small_area_max)
    _write_csv(args.out, None, grid.counts.tolist())
    band = grid.counts[int(0.3 * grid.grid_h) : math.ceil(0.8 * grid.grid_h)].sum()
    share = band / grid.total if grid.total else float("nan")
    print(f"total: {grid.total}\nband_0.3_0.8_share: {_fmt(share)}")
    return 0


def cmd_clean(args, cfg: RunConfig) -> int:
    base = cfg.clean
    ccfg = CleanConfig(
        args.min_models if args.min_models is not None else base.min_models,
        args.iou_min if args.iou_min is not None else base.iou_min,
        args.score_min if args.score_min is not None else base.score_min,
    )
    gts = io.read_gt(args.gt)
    model_dets = [io.read_detections(p) for p in args.det]
    result = consensus_clean(gts, model_dets, ccfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_gt(out / "kept.jsonl", result.kept, args.round_px)
    io.write_gt(out / "removed.jsonl", result.removed, args.round_px)
    header = ["frame_id", "camera_id", "gt_id", "kept", "votes"]
    for m in range(len(model_dets)):
        header += [f"model{m}_matched", f"model{m}_iou", f"model{m}_score"]
    rows = []
    for v in result.report:
        row = [v.gt.frame_id, v.gt.camera_id, v.gt.id, int(v.kept), v.votes]
        for e in v.evidence:
            row += [int(e.matched), f"{e.iou:.6f}", f"{e.score:.6f}"]
        rows.append(row)
    _write_csv(out / "report.csv", header, rows)
    print(f"kept: {len(result.kept)}\nremoved: {len(result.removed)}")
    return 0


def cmd_bench(args, cfg: RunConfig) -> int:
    frames = io.read_frames(args.frames)
    if args.limit is not None:
        frames = sorted(frames, key=lambda f: f.key)[: args.limit]
    ensemble = cfg.ensemble
    if args.backend:
        ensemble = EnsembleConfig({c: args.backend for c in CATEGORIES})
    backends = {name: _backend(cfg, name, args.gt) for name in ensemble.backends}
    budget = args.budget_ms if args.budget_ms is not None else cfg.budget_ms
    dets, report = detect_frames(backends, frames, _enhancement(cfg, args.identity), ensemble, budget, args.jobs)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_detections(out / "detections.jsonl", dets, args.round_px)
    _write_csv(
        out / "latency.csv",
        ["frame_id", "camera_id", *(f"{s}_ms" for s in STAGES), "total_ms", "over_budget"],
        [
            [r.frame_id, r.camera_id, *(f"{r.stages_ms[s]:.3f}" for s in STAGES), f"{r.total_ms:.3f}", int(r.total_ms > budget)]
            for r in report.rows
        ],
    )
    pct = report.percentiles()
    stage_means = report.stage_mean_ms()
    lines = [
        f"frames: {report.n_frames}",
        f"budget_ms: {budget:.1f}",
        f"mean_ms: {report.mean_ms:.3f}",
        *(f"{k}_ms: {v:.3f}" for k, v in pct.items()),
        *(f"stage_{s}_mean_ms: {stage_means[s]:.3f}" for s in STAGES),
        f"violations: {report.violations}",
        f"within_budget: {str(report.within_budget).lower()}",
    ]
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    if not report.within_budget:
        print(f"rtdet: mean latency {report.mean_ms:.1f} ms exceeds the {budget:.1f} ms budget", file=sys.stderr)
        return 2
    return 0


def _write_csv(path, header: Sequence[str] | None, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        w.writerows(rows)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON run config (see --print-default-config)")
    common.add_argument("--seed", type=int, help="overrides $RTDET_SEED and the config seed")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for per-frame work")
    common.add_argument("--round-px", action="store_true", help="round written box coordinates to whole pixels")

    p = argparse.ArgumentParser(prog="rtdet", description=__doc__)
    p.add_argument("--print-default-config", action="store_true", help="print the default config and exit")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--n-frames", type=int)
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("enhance", parents=[common], help="two-pass scale-enhanced detection with one backend")
    s.add_argument("--frames", required=True)
    s.add_argument("--backend", required=True)
    s.add_argument("--gt", help="ground truth for synthetic backends")
    s.add_argument("--identity", action="store_true", help="use an identity view for the second pass")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_enhance)

    s = sub.add_parser("nms", parents=[common], help="class-aware NMS per frame")
    s.add_argument("--det", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_nms)

    s = sub.add_parser("ensemble", parents=[common], help="class-wise ensemble of per-backend detections")
    s.add_argument("--input", action="append", required=True, metavar="NAME=PATH")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_ensemble)

    s = sub.add_parser("eval", parents=[common], help="per-category AP at L1/L2")
    s.add_argument("--gt", required=True)
    s.add_argument("--det", required=True)
    s.add_argument("--level", choices=["L1", "L2", "both"], default="both")
    s.add_argument("--out", help="also write the text report here")
    s.add_argument("--csv")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("anchors", parents=[common], help="K-means anchors from GT box sizes")
    s.add_argument("--gt", required=True)
    s.add_argument("--k", type=int, default=12)
    s.add_argument("--metric", choices=["iou", "euclidean"], default="iou")
    s.add_argument("--update", choices=["mean", "medoid"], default="mean")
    s.add_argument("--max-iters", type=int, default=300)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--small-only", action="store_true")
    s.add_argument("--small-area-max", type=float, default=4096.0)
    s.add_argument("--small-mode", choices=["area", "side"], default="area")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_anchors)

    s = sub.add_parser("heatmap", parents=[common], help="grid of small-object centers")
    s.add_argument("--gt", required=True)
    s.add_argument("--frames", required=True)
    s.add_argument("--grid-w", type=int, default=16)
    s.add_argument("--grid-h", type=int, default=16)
    s.add_argument("--small-area-max", type=float, default=1024.0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_heatmap)

    s = sub.add_parser("clean", parents=[common], help="consensus filtering of GT annotations")
    s.add_argument("--gt", required=True)
    s.add_argument("--det", action="append", required=True, help="one per model")
    s.add_argument("--min-models", type=int)
    s.add_argument("--iou-min", type=float)
    s.add_argument("--score-min", type=float)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(fn=cmd_clean)

    s = sub.add_parser("bench", parents=[common], help="full pipeline with per-stage latency against a budget")
    s.add_argument("--frames", required=True)
    s.add_argument("--gt", help="ground truth for synthetic backends")
    s.add_argument("--backend", help="route every category to this one backend")
    s.add_argument("--budget-ms", type=float)
    s.add_argument("--identity", action="store_true")
    s.add_argument("--limit", type=int, help="only the first N frames")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(fn=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        sys.stdout.write(print_default_config())
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.seed)
        return args.fn(args, cfg)
    except (CliError, ConfigError, io.FormatError, KeyError, ValueError, OSError) as exc:
        print(f"rtdet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
