"""``colordet`` command line: one binary, one subcommand per tool.

Exit codes: 0 success, 1 bad arguments (usage printed), 2 runtime/data error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import backbone as bb
from . import boxes as bx
from . import dataset as ds
from . import evaluate as ev
from . import fpn
from . import losses as ls
from . import preprocess as pp
from .errors import DataError, InvalidInputError

SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError(f"sizes must be positive, got {text!r}")
    return h, w


def _dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, ensure_ascii=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


class _Out:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *args):
        if not self.quiet:
            print(*args)


# -- inspect -----------------------------------------------------------------

def _param_rows(counts: dict) -> list[dict]:
    ref = {"conv1": bb.REFERENCE_STEM_PARAMS, **bb.REFERENCE_STAGE_PARAMS,
           "fc": bb.REFERENCE_FC_PARAMS}
    return [{"layer": k, "params": v, "reference": ref.get(k)} for k, v in counts["stages"].items()]


def cmd_inspect(args, say) -> int:
    graph = bb.build_vcr_resnet()
    h, w = args.input_size
    c5 = bb.infer_shapes(graph, (h, w, 3), head=False)[-1].shape
    head = c5[0] >= graph.head_pool and c5[1] >= graph.head_pool
    rows = bb.infer_shapes(graph, (h, w, 3), head=head, detail=args.detail)
    counts = bb.param_count(graph)
    report = {
        "schema_version": SCHEMA_VERSION,
        "input_size": [h, w, 3],
        "head_included": head,
        "layers": [{"name": r.name, "kernel": r.kernel, "stride": r.stride,
                    "output": list(r.shape), "output_str": r.shape_str()} for r in rows],
        "params": _param_rows(counts),
        "total_params": counts["total"],
        "main_path_depth": graph.depth,
    }
    if args.fpn:
        report["fpn"] = _fpn_report(graph, h, w, args.seed)
    if args.out:
        _dump_json(report, args.out)
    if args.json:
        print(_dump_json(report), end="")
        return 0
    say(f"{'layer':<14}{'kernel':<20}{'stride':>6}  output")
    for r in rows:
        say(f"{r.name:<14}{r.kernel:<20}{r.stride if r.stride else '-':>6}  {r.shape_str()}")
    say("")
    say(f"{'params':<10}{'computed':>14}{'reference':>14}")
    for p in report["params"]:
        ref = "" if p["reference"] is None else f"{p['reference']:,}"
        say(f"{p['layer']:<10}{p['params']:>14,}{ref:>14}")
    say(f"{'total':<10}{counts['total']:>14,}")
    if args.fpn:
        say("")
        for name, lv in report["fpn"]["levels"].items():
            say(f"{name}: {'×'.join(map(str, lv['shape']))}  mean channel norm {lv['mean_norm']:.4g}")
    return 0


def _fpn_report(graph, h, w, seed) -> dict:
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, size=(1, 3, h, w))
    stages = bb.forward(graph, x, bb.init_weights(graph, seed, head=False))
    pyr = fpn.build_pyramid(stages, fpn.init_fpn_weights(seed=seed))
    normed = {f"C{i}": fpn.l2_normalize(c, fpn.DEFAULT_NORM_SCALE)
              for i, c in zip((2, 3, 4, 5), stages.as_list())}
    return {
        "seed": seed,
        "norm_scale": fpn.DEFAULT_NORM_SCALE,
        "normalized_stage_norms": {
            k: float(np.sqrt((v ** 2).sum(axis=1)).mean()) for k, v in normed.items()
        },
        "levels": {
            k: {"shape": [v.shape[2], v.shape[3], v.shape[1]],
                "mean_norm": float(np.sqrt((v ** 2).sum(axis=1)).mean())}
            for k, v in pyr.levels().items()
        },
    }


# -- nms-demo ------------------------------------------------------------------

def _read_boxes(path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        boxes, scores = data["boxes"], data["scores"]
    else:
        boxes = [d["bbox"] for d in data]
        scores = [d["score"] for d in data]
    return bx.as_boxes(boxes), np.asarray(scores, dtype=np.float64)


def cmd_nms(args, say) -> int:
    try:
        boxes, scores = _read_boxes(args.boxes)
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read boxes: {e}", args.boxes) from None
    keep = bx.nms(boxes, scores, args.iou)
    report = {"schema_version": SCHEMA_VERSION, "iou": args.iou, "kept": keep}
    if args.out:
        _dump_json(report, args.out)
    print(json.dumps(report))
    return 0


# -- loss-probe ------------------------------------------------------------------

def _sweep(text: str):
    try:
        lo, hi, n = text.split(",")
        return float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN,MAX,STEPS, got {text!r}") from None


def loss_probe_rows(cfg: ls.LossConfig, lo: float, hi: float, steps: int) -> list[tuple]:
    if steps < 1:
        raise InvalidInputError("steps must be >= 1")
    rows = []
    for v in np.linspace(lo, hi, steps):
        v = float(v)
        if cfg.kind in ("ce", "focal"):
            # v is the target-class probability of a two-class prediction
            probs = np.array([v, 1.0 - v])
            loss = ls.baseline_loss(cfg, probs, 0)
            grad = float(ls.baseline_loss_grad(cfg, probs, 0)[0])
        else:
            # residual d = target - pred with pred = 0
            loss = ls.baseline_loss(cfg, [0.0], [v])
            grad = float(ls.baseline_loss_grad(cfg, [0.0], [v])[0])
        rows.append((v, loss, grad))
    return rows


def cmd_loss_probe(args, say) -> int:
    cfg = ls.LossConfig(kind=args.kind, beta=args.beta, gamma=args.gamma, alpha_bal=args.alpha_bal)
    rows = loss_probe_rows(cfg, *args.sweep)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p" if cfg.kind in ("ce", "focal") else "d", "loss", "grad"])
    for r in rows:
        w.writerow([repr(x) for x in r])
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
        say(f"wrote {len(rows)} rows to {args.out}")
    else:
        print(buf.getvalue(), end="")
    return 0


# -- eval --------------------------------------------------------------------------

def cmd_eval(args, say) -> int:
    images = ds.load_annotations(args.gt)
    preds = ev.load_predictions(args.pred)
    report = ev.evaluate(preds, images, iou_thresh=args.iou, conf_thresh=args.conf)
    data = report.to_dict()
    if args.out:
        _dump_json(data, args.out)
        csv_path = Path(args.csv) if args.csv else Path(args.out).with_suffix(".csv")
        csv_path.write_text(report.to_csv(), encoding="utf-8")
    else:
        print(_dump_json(data), end="")
    say(report.to_csv().rstrip("\n"))
    say(f"mAP = {report.mAP:.4f} over {24 - len(report.excluded)} classes")
    return 0


# -- stats / split ---------------------------------------------------------------------

def cmd_stats(args, say) -> int:
    images = ds.load_annotations(args.ann)
    stats = ds.class_stats(images)
    report = {"schema_version": SCHEMA_VERSION, "images": len(images), **stats.to_dict()}
    if args.table2_check:
        rows = ds.table2_check(stats)
        report["table2_check"] = rows
    if args.out:
        _dump_json(report, args.out)
    say(f"{'id':>3} {'color':<14}{'count':>8}{'share':>9}")
    for c in report["classes"]:
        say(f"{c['class_id']:>3} {c['color']:<14}{c['count']:>8}{100 * c['proportion']:>8.2f}%")
    say(f"total {stats.total} objects in {len(images)} images; "
        f"imbalance ratio {stats.imbalance:.1f}")
    if args.table2_check:
        bad = [r for r in report["table2_check"] if not (r["count_ok"] and r["percent_ok"])]
        for r in bad:
            say(f"table2 mismatch: {r['color']} count {r['count']} (ref {r['ref_count']}), "
                f"{r['percent']:.4f}% (ref {r['ref_percent']:.2f}%)")
        say(f"table2 check: {24 - len(bad)}/24 classes match")
    return 0


def cmd_split(args, say) -> int:
    images = ds.load_annotations(args.ann)
    splits = ds.stratified_split(images, args.ratios, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = ds.SPLIT_NAMES if len(splits) == 3 else [f"split{i}" for i in range(len(splits))]
    for name, part in zip(names, splits):
        ds.write_annotations(part, out / f"{name}.jsonl")
    report = {"schema_version": SCHEMA_VERSION, "seed": args.seed,
              "ratios": list(args.ratios), **ds.split_report(splits, args.ratios)}
    _dump_json(report, out / "split_report.json")
    say(f"images per split: {dict(zip(names, report['images']))}; "
        f"max per-class deviation {report['max_abs_deviation']:.2f} objects")
    return 0


def _ratios(text: str):
    try:
        vals = tuple(float(v) for v in text.replace(":", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratios {text!r}") from None
    return vals


# -- preprocess / pipeline -------------------------------------------------------------

def _dehaze_params(args):
    if not args.dehaze:
        return None
    return pp.DehazeParams(args.window, args.omega, args.t0, args.top_fraction)


def cmd_preprocess(args, say) -> int:
    if not args.dehaze and args.illum is None:
        raise UsageError("nothing to do: pass --dehaze and/or --illum")
    illum = pp.parse_illum(args.illum) if args.illum else None
    done = pp.process_dir(args.in_dir, args.out, _dehaze_params(args), illum, args.order,
                          jobs=args.jobs)
    say(f"processed {len(done)} images into {args.out}")
    return 0


def cmd_pipeline(args, say) -> int:
    from PIL import Image as PILImage

    report = {"schema_version": SCHEMA_VERSION, "image": str(args.image), "seed": args.seed}
    img = pp.load_image(args.image)
    report["image_shape"] = list(img.shape)
    illum = pp.parse_illum(args.illum) if args.illum else None
    img = pp.process_image(img, _dehaze_params(args), illum, args.order)
    report["preprocessed_shape"] = list(img.shape)
    h, w = args.input_size
    resized = PILImage.fromarray(pp.to_uint8(img)).resize((w, h), PILImage.BILINEAR)
    x = pp.from_uint8(np.asarray(resized)).transpose(2, 0, 1)[None]
    report["input_tensor"] = list(x.shape)
    graph = bb.build_vcr_resnet()
    stages = bb.forward(graph, x, bb.init_weights(graph, args.seed, head=False))
    report["backbone"] = {k: list(v) for k, v in stages.shapes.items()}
    report["stages"] = {f"C{i}": list(c.shape) for i, c in zip((2, 3, 4, 5), stages.as_list())}
    pyr = fpn.build_pyramid(stages, fpn.init_fpn_weights(seed=args.seed))
    report["pyramid"] = {k: list(v.shape) for k, v in pyr.levels().items()}
    anchors = {}
    for name, level in pyr.levels().items():
        fh, fw = level.shape[2:]
        cfg = bx.AnchorConfig(stride=max(1, round(h / fh)))
        a = bx.gen_anchors(fh, fw, cfg)
        anchors[name] = {"stride": cfg.stride, "count": len(a), "shape": list(a.shape)}
    report["anchors"] = anchors
    if args.out:
        _dump_json(report, args.out)
    else:
        print(_dump_json(report), end="")
    say(f"pipeline ok: C5 {report['stages']['C5']}, P2 {report['pyramid']['P2']}, "
        f"{sum(v['count'] for v in anchors.values())} anchors")
    return 0


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out", default=None)
    common.add_argument("--quiet", action="store_true")

    parser = _Parser(prog="colordet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def dehaze_flags(p):
        p.add_argument("--dehaze", action="store_true")
        p.add_argument("--window", type=int, default=15)
        p.add_argument("--omega", type=float, default=0.95)
        p.add_argument("--t0", type=float, default=0.1)
        p.add_argument("--top-fraction", type=float, default=0.001)
        p.add_argument("--illum", default=None, help="night | noon | custom:A,B")
        p.add_argument("--order", choices=("dehaze-first", "illum-first"), default="dehaze-first")

    p = sub.add_parser("preprocess", parents=[common], help="dehaze / relight a directory")
    dehaze_flags(p)
    p.add_argument("--in", dest="in_dir", required=True)
    p.set_defaults(func=cmd_preprocess, needs_out=True)

    p = sub.add_parser("inspect", parents=[common], help="backbone shape table and params")
    p.add_argument("--input-size", type=_size, default=(227, 227))
    p.add_argument("--fpn", action="store_true", help="also run a seeded forward + pyramid")
    p.add_argument("--detail", action="store_true", help="one row per conv")
    p.add_argument("--json", action="store_true", help="print JSON only")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("nms-demo", parents=[common], help="greedy NMS on a JSON box list")
    p.add_argument("--boxes", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("loss-probe", parents=[common], help="CSV sweep of a loss and its gradient")
    p.add_argument("--kind", choices=ls.KINDS, default="vcr")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--alpha-bal", type=float, default=0.25)
    p.add_argument("--sweep", type=_sweep, default=(-1.0, 1.0, 21))
    p.set_defaults(func=cmd_loss_probe)

    p = sub.add_parser("eval", parents=[common], help="per-class AP and mAP")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--iou", type=float, default=ev.IOU_THRESH)
    p.add_argument("--conf", type=float, default=ev.CONF_THRESH)
    p.add_argument("--csv", default=None, help="per-class AP table (default: OUT with .csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", parents=[common], help="per-colour counts and shares")
    p.add_argument("--ann", required=True)
    p.add_argument("--table2-check", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", parents=[common], help="stratified train/val/test split")
    p.add_argument("--ann", required=True)
    p.add_argument("--ratios", type=_ratios, default=(8.0, 1.0, 1.0))
    p.set_defaults(func=cmd_split, needs_out=True)

    p = sub.add_parser("pipeline", parents=[common], help="preprocess → backbone → FPN → anchors")
    dehaze_flags(p)
    p.add_argument("--image", required=True)
    p.add_argument("--input-size", type=_size, default=(64, 64))
    p.set_defaults(func=cmd_pipeline)
    return parser


def _fix_negative_values(argv: list[str]) -> list[str]:
    # let "--sweep -1,1,9" through; argparse would read -1,1,9 as an option
    out = []
    it = iter(range(len(argv)))
    for i in it:
        if argv[i] == "--sweep" and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"--sweep={argv[i + 1]}")
            next(it, None)
        else:
            out.append(argv[i])
    return out


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_fix_negative_values(argv))
    except SystemExit as e:
        return int(e.code or 0)
    if getattr(args, "needs_out", False) and not args.out:
        parser.print_usage(sys.stderr)
        print(f"colordet {args.command}: error: --out is required", file=sys.stderr)
        return 1
    say = _Out(args.quiet)
    try:
        return args.func(args, say)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"colordet {args.command}: error: {e}", file=sys.stderr)
        return 1
    except (InvalidInputError, DataError, OSError) as e:
        print(f"colordet {args.command}: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
