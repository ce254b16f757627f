"""Command-line entry point: ``lanematch {gen,assign,train,eval,report}``."""
import argparse
import json
from pathlib import Path
import sys

from . import io as lio
from ._validation import LaneMatchError
from .assign import (
    AssignerConfig,
    assign_classical,
    assign_matchnet,
    balance_sample,
    make_targets,
)
from .cost import CostWeights
from .evaluate import EvalConfig, confidence_histogram, evaluate_dataset
from .lane import RowGrid, resample
from .matchnet import N_FEATURES, TrainConfig, train
from .synth import PRESETS, gen_synthetic, preset, record_lanes

SYNTH_FLAGS = {
    "lanes_min": int, "lanes_max": int, "curv_min": float, "curv_max": float,
    "preds_min": int, "preds_max": int, "noise_sigma": float, "offset_ratio": float,
    "decoys_min": int, "decoys_max": int, "conf_base": float, "conf_coupling": float,
    "conf_noise": float, "decoy_coupling": float, "curve_threshold": float,
}


def _flag(name):
    return "--" + name.replace("_", "-")


def _grid_for(data_dir, args):
    meta = Path(data_dir) / "synth.json"
    w, h = args.img_w, args.img_h
    if meta.exists() and (w is None or h is None):
        cfg = json.loads(meta.read_text())
        w = w or cfg["canvas_w"]
        h = h or cfg["canvas_h"]
    return RowGrid(args.n_rows, h or 590, w or 1640)


def _scenes(args):
    records = lio.load_dataset(args.data, args.filter_list)
    grid = _grid_for(args.data, args)
    return records, [record_lanes(r, grid) for r in records]


def cmd_gen(args):
    overrides = {k: getattr(args, k) for k in SYNTH_FLAGS if getattr(args, k) is not None}
    cfg = preset(args.preset, n_scenes=args.scenes, seed=args.seed, **overrides)
    records = gen_synthetic(cfg)
    lio.write_dataset(args.out, records)
    lio.atomic_write(Path(args.out) / "synth.json",
                     json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(records)} scenes to {args.out}")
    return 0


def _assigner_config(args):
    return AssignerConfig(k_max=args.k_max, matchnet_threshold=args.threshold,
                          matchnet_k_cap=args.k_cap, t_L=args.t_l,
                          pairs_per_image=args.pairs_per_image)


def cmd_assign(args):
    cfg = _assigner_config(args)
    model = None
    if args.method == "matchnet":
        if not args.weights:
            raise LaneMatchError("--method matchnet requires --weights")
        model = lio.load_weights(Path(args.weights).read_text())
    records, scenes = _scenes(args)
    lines = [f"# assignment method={args.method}"]
    for rec, (preds, gts) in zip(records, scenes):
        if args.method == "classical":
            result = assign_classical(preds, gts, CostWeights(), cfg, args.half_width)
        else:
            result = assign_matchnet(preds, gts, model, cfg, args.half_width)
        for j, items in enumerate(result.positives):
            k = f" k={result.k[j]}" if result.k else ""
            pos = " ".join(f"{p}:{s:.6f}" for p, s in items)
            lines.append(f"{rec.image_id} gt={j}{k} positives={len(items)} {pos}".rstrip())
        if args.export:
            chosen = sorted(result.pred_to_gt())
            kept = [(preds[p].points().tolist(), preds[p].score) for p in chosen]
            lio.atomic_write(lio.lines_path(Path(args.export) / "pred", rec.image_id),
                             lio.format_predictions(kept))
    text = "\n".join(lines) + "\n"
    if args.out:
        lio.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_train(args):
    cfg = _assigner_config(args)
    _, scenes = _scenes(args)
    samples, n_short = [], 0
    for i, (preds, gts) in enumerate(scenes):
        pairs = make_targets(preds, gts, CostWeights(), cfg, args.half_width, args.lambda_cls)
        if not pairs:
            continue
        sample = balance_sample(pairs, cfg, rng_seed=args.seed + i)
        n_short += sample.short
        samples.append(sample)
    if not samples:
        raise LaneMatchError("dataset produced no (prediction, GT) pairs")
    tcfg = TrainConfig(epochs=args.epochs, lr0=args.lr, weight_decay=args.weight_decay,
                       batch_size=args.batch_size, seed=args.seed)
    hidden = tuple(int(h) for h in args.hidden.split(",") if h)
    model, log = train(samples, tcfg, (N_FEATURES, *hidden, 1), args.leaky_slope)
    lio.atomic_write(args.out, lio.save_weights(model))
    n_pairs = sum(len(s) for s in samples)
    n_pos = sum(p.label > 0 for s in samples for p in s)
    log_lines = [
        f"samples {len(samples)} pairs {n_pairs} positives {n_pos} short_samples {n_short}",
        f"steps {log.steps} single_class {int(log.single_class)}",
    ]
    log_lines += [f"epoch {e + 1} loss {loss:.6f} accuracy {acc:.6f}"
                  for e, (loss, acc) in enumerate(zip(log.epoch_loss, log.epoch_accuracy))]
    text = "\n".join(log_lines) + "\n"
    if args.log:
        lio.atomic_write(args.log, text)
    sys.stdout.write(text)
    return 0


def _eval_sources(pred_dir, gt_dir, ids, grid):
    gt_raw = lio.read_gt_dir(gt_dir, ids)
    pred_raw = lio.read_pred_dir(pred_dir)
    gts = {i: [resample(p, grid) for p in lanes] for i, lanes in gt_raw.items()}
    preds = {i: [resample(p, grid, s) for p, s in lanes] for i, lanes in pred_raw.items()}
    return preds, gts


def cmd_eval(args):
    data = Path(args.data) if args.data else None
    pred_dir = args.pred or (data / "pred" if data else None)
    gt_dir = args.gt or (data / "gt" if data else None)
    if pred_dir is None or gt_dir is None:
        raise LaneMatchError("eval needs --data or both --pred and --gt")
    list_file = args.list or (data / "list.txt" if data else None)
    if list_file is None:
        raise LaneMatchError("eval needs --list when --data is not given")
    all_ids = lio.read_list(list_file)
    ids = lio.read_list(args.filter_list) if args.filter_list else all_ids
    categories = lio.read_categories(data / "categories") if data else {}
    for item in args.category or []:
        name, _, path = item.partition("=")
        if not path:
            raise LaneMatchError(f"--category expects NAME=FILE, got {item!r}")
        categories[name] = lio.read_list(path)
    wanted = set(ids)
    categories = {k: [i for i in v if i in wanted] for k, v in categories.items()}
    cfg = EvalConfig(conf_threshold=args.conf_threshold,
                     iou_thresholds=tuple(args.iou_thresholds),
                     mask_width=args.mask_width, canvas_w=args.img_w or 1640,
                     canvas_h=args.img_h or 590)
    grid = RowGrid(args.n_rows, cfg.canvas_h, cfg.canvas_w)
    preds, gts = _eval_sources(pred_dir, gt_dir, ids, grid)
    known = set(all_ids)
    preds = {i: v for i, v in preds.items() if i in wanted or i not in known}
    report = evaluate_dataset(preds, gts, categories, cfg)
    text = report.to_text()
    if args.out:
        lio.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    if args.hist:
        lio.atomic_write(args.hist, report.histogram_csv())
    return 0


def cmd_report(args):
    sets = []
    for pred_dir in (args.pred_a, args.pred_b):
        ids = lio.read_list(args.list) if args.list else None
        lanes = lio.read_pred_dir(pred_dir, ids)
        scores = [s for items in lanes.values() for _, s in items if s >= args.conf_threshold]
        sets.append(confidence_histogram(scores))
    edges = sets[0][0]
    a, b = sets[0][1], sets[1][1]
    lines = [f"bin_low,bin_high,count_{args.label_a},normalized_{args.label_a},"
             f"count_{args.label_b},normalized_{args.label_b}"]
    for i in range(len(a)):
        na = a[i] / a.sum() if a.sum() else 0.0
        nb = b[i] / b.sum() if b.sum() else 0.0
        lines.append(f"{edges[i]:.2f},{edges[i + 1]:.2f},{a[i]},{na:.6f},{b[i]},{nb:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        lio.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def _add_grid_flags(p):
    p.add_argument("--n-rows", type=int, default=72)
    p.add_argument("--img-w", type=int, default=None)
    p.add_argument("--img-h", type=int, default=None)


def _add_assign_flags(p):
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--filter-list", default=None, help="only use the image ids listed in this file")
    p.add_argument("--k-max", type=int, default=4)
    p.add_argument("--threshold", type=float, default=0.7, help="MatchNet score threshold")
    p.add_argument("--k-cap", type=int, default=None)
    p.add_argument("--t-l", type=float, default=0.3, help="pair-loss threshold for targets")
    p.add_argument("--pairs-per-image", type=int, default=18)
    p.add_argument("--half-width", type=float, default=None, help="LineIoU half width in px")
    p.add_argument("--seed", type=int, default=0)
    _add_grid_flags(p)


def build_parser():
    parser = argparse.ArgumentParser(prog="lanematch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=sorted(PRESETS), default="default")
    for name, typ in SYNTH_FLAGS.items():
        p.add_argument(_flag(name), dest=name, type=typ, default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("assign", help="label predictions per GT")
    _add_assign_flags(p)
    p.add_argument("--method", choices=("classical", "matchnet"), default="classical")
    p.add_argument("--weights", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--export", default=None,
                   help="write the positive predictions as a prediction set under this directory")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("train", help="train MatchNet from the classical teacher")
    _add_assign_flags(p)
    p.add_argument("--out", required=True, help="weights file")
    p.add_argument("--log", default=None)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--hidden", default="64,128,64")
    p.add_argument("--leaky-slope", type=float, default=0.01)
    p.add_argument("--lambda-cls", type=float, default=1.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="CULane-style F1 evaluation")
    p.add_argument("--data", default=None, help="dataset directory (pred/, gt/, list.txt)")
    p.add_argument("--pred", default=None)
    p.add_argument("--gt", default=None)
    p.add_argument("--list", default=None)
    p.add_argument("--filter-list", default=None)
    p.add_argument("--category", action="append", metavar="NAME=FILE")
    p.add_argument("--conf-threshold", type=float, default=0.4)
    p.add_argument("--iou-thresholds", type=float, nargs="+", default=[0.5, 0.75])
    p.add_argument("--mask-width", type=float, default=30.0)
    p.add_argument("--out", default=None)
    p.add_argument("--hist", default=None, help="confidence histogram CSV")
    p.add_argument("--seed", type=int, default=0)
    _add_grid_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="compare confidence histograms of two prediction sets")
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--label-a", default="a")
    p.add_argument("--label-b", default="b")
    p.add_argument("--list", default=None)
    p.add_argument("--conf-threshold", type=float, default=0.0)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LaneMatchError, OSError, ValueError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"lanematch {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
