"""Command-line surface.

Subcommands: analyze | ablate | eval | gradcheck | forward | augment |
dump-features.  Every command is deterministic given its flags and seed; all
randomness flows from --seed.  Output is plain text (NO_COLOR is honored
trivially: nothing is ever colorized).

Exit codes: 0 success, 1 check failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analysis, augment, checks, metrics
from .graph import ConfigError, build_from_file


def _input_tensor(kind, size, seed):
    if kind == "zeros":
        return np.zeros((1, 3, size, size), dtype=np.float32)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(1,)))
    return rng.uniform(-1.0, 1.0, size=(1, 3, size, size)).astype(np.float32)


def cmd_analyze(args):
    graph = build_from_file(args.config, nc=args.nc, input_size=args.imgsz, seed=args.seed)
    report = analysis.analyze(graph)
    print(f"config: {args.config}  nc: {graph.nc}  imgsz: {args.imgsz}  seed: {args.seed}")
    print(analysis.format_report(report))
    if args.csv:
        analysis.write_report_csv(report, args.csv)
        print(f"per-layer CSV written to {args.csv}")
    return 0


def cmd_ablate(args):
    rows = analysis.ablation_rows(nc=args.nc, input_size=args.imgsz, seed=args.seed)
    print(analysis.format_ablation(rows, show_reference=not args.measured_only))
    return 0


def cmd_eval(args):
    gt_dir, det_dir = Path(args.gt), Path(args.det)
    for d in (gt_dir, det_dir):
        if not d.is_dir():
            raise ConfigError(f"directory {d} does not exist")
    gts = metrics.load_ground_truth(gt_dir)
    dets = metrics.load_detections(det_dir)
    gt_stems = {p.stem for p in gt_dir.glob("*.txt")}
    orphan = sorted({d.image_id for d in dets} - gt_stems)
    if orphan:
        print(f"warning: detection files without ground truth (all counted as FP): "
              f"{', '.join(orphan)}", file=sys.stderr)
    report = metrics.evaluate(dets, gts, iou_thr=args.iou, policy=args.policy)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "eval_report.csv"
    md_path = out_dir / "eval_report.md"
    metrics.write_eval_csv(report, csv_path)
    md_path.write_text(metrics.format_markdown(report))
    print(f"images={len(gt_stems)} gt={len(gts)} det={len(dets)} iou={args.iou:g} "
          f"policy={args.policy}")
    print(f"P={report.precision:.6f} R={report.recall:.6f} at conf>={report.threshold:.6f}")
    print(f"mAP={report.mean_ap:.6f}")
    print(f"reports written to {csv_path} and {md_path}")
    return 0


def cmd_gradcheck(args):
    results = checks.run_all(trials=args.trials, seed=args.seed)
    failed = False
    for res in results:
        print(res.summary())
        if not res.passed:
            failed = True
            print(f"  worst case: {res.worst_case}")
    return 1 if failed else 0


def _forward_summary(graph, args):
    x = _input_tensor(args.input, args.imgsz, args.seed)
    outputs, _ = graph.forward(x)
    scales = outputs if isinstance(outputs, list) else [outputs]
    print(f"config: {args.config}  imgsz: {args.imgsz}  seed: {args.seed}  input: {args.input}")
    for i, out in enumerate(scales):
        stride = args.imgsz // out.shape[2]
        print(f"scale {i}: shape {tuple(out.shape)}  stride {stride}  "
              f"min {out.min():.6f} max {out.max():.6f} mean {out.mean():.6f}")
    return x


def _dump(graph, x, layer_index, out_dir):
    try:
        paths = graph.export_feature_maps(x, layer_index, out_dir)
    except IndexError as e:
        raise ConfigError(str(e)) from e
    print(f"wrote {len(paths)} channel maps for layer {layer_index} to {out_dir}")


def cmd_forward(args):
    graph = build_from_file(args.config, nc=args.nc, input_size=args.imgsz, seed=args.seed)
    x = _forward_summary(graph, args)
    if args.dump_layer is not None:
        _dump(graph, x, args.dump_layer, args.out)
    return 0


def cmd_dump_features(args):
    graph = build_from_file(args.config, nc=args.nc, input_size=args.imgsz, seed=args.seed)
    x = _input_tensor(args.input, args.imgsz, args.seed)
    _dump(graph, x, args.layer, args.out)
    return 0


def cmd_augment(args):
    manifest = augment.augment_dataset(args.in_dir, args.out_dir, args.pipeline, seed=args.seed)
    print(f"augmented {len(manifest)} images -> {args.out_dir} "
          f"(manifest: {Path(args.out_dir) / 'manifest.json'})")
    return 0


def _add_model_flags(p, forward=False):
    p.add_argument("--config", required=True, help="model config JSON")
    p.add_argument("--nc", type=int, default=1, help="class count (default 1)")
    p.add_argument("--imgsz", type=int, default=640, help="input size, divisible by 32")
    p.add_argument("--seed", type=int, default=0, help="weight seed")
    if forward:
        p.add_argument("--input", choices=("zeros", "random"), default="zeros")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="litedet",
        description="Deterministic workbench for lightweight single-stage detector "
                    "architectures: analysis, forward runs, evaluation, ablation, "
                    "gradient checks, augmentation and feature-map export.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-layer parameter/MAC table and totals")
    _add_model_flags(p)
    p.add_argument("--csv", help="also write the per-layer table as CSV")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ablate", help="measure all shipped variants vs the published table")
    p.add_argument("--nc", type=int, default=1)
    p.add_argument("--imgsz", type=int, default=640)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--measured-only", action="store_true",
                   help="suppress published reference columns")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", help="evaluate detections against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth label directory")
    p.add_argument("--det", required=True, help="detection directory")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--policy", default="max-f1", help="max-f1 or fixed:<t>")
    p.add_argument("--out", default=".", help="report output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="fusion gradient and attention checks")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("forward", help="run a seeded forward pass and summarize outputs")
    _add_model_flags(p, forward=True)
    p.add_argument("--dump-layer", type=int, help="also export this layer's channel maps")
    p.add_argument("--out", default="feature_maps", help="feature-map output directory")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("augment", help="offline dataset augmentation")
    p.add_argument("--in", dest="in_dir", required=True, help="input image/label directory")
    p.add_argument("--out", dest="out_dir", required=True, help="output directory")
    p.add_argument("--pipeline", required=True,
                   help="e.g. hflip,erase(p=0.5,sl=0.02,sh=0.4,r1=0.3)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("dump-features", help="export one layer's channel maps as PGM")
    _add_model_flags(p, forward=True)
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--out", default="feature_maps")
    p.set_defaults(func=cmd_dump_features)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, NotADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
