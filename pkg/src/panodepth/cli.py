"""Command-line entry point: ``panodepth <command> ...``.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure
(degenerate scale, singular alignment, diverged training).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, io
from .curate import (
    MIN_VALID_RATIO,
    OVERFLOW_THRESHOLD,
    Reason,
    curation_verdict,
    decode_faces,
)
from .loss import DegenerateScaleError
from .maps import DisparityMap, ErpGrid
from .metrics import (
    CSV_HEADER,
    Protocol,
    SingularAlignmentError,
    align,
    boundary_mask,
    cap_depth,
    compute_metrics,
    mean_report,
    range_mask,
)
from .pad import box_kernel, conv2d, seam_discrepancy
from .sphere import Face, cube_zbuffer_to_erp, depth_to_pointcloud
from . import toytrain

logger = logging.getLogger("panodepth")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3
NUMERICAL_ERRORS = (DegenerateScaleError, SingularAlignmentError, toytrain.TrainingDivergedError)


class InputError(Exception):
    """Bad files or arguments; maps to exit code 2."""


def _pool_map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _out_path(args, path) -> Path:
    """Relative output paths land under ``--output-dir``."""
    path = Path(path)
    if not path.is_absolute():
        path = Path(args.output_dir) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


# --- convert ---------------------------------------------------------------


def read_face_dir(directory, pattern: str = "{face}.png") -> dict:
    """``{face: raw uint16}`` for the face rasters present in ``directory``.

    Files matching the pattern's suffix whose stem is not a face name are
    an error, as are two files naming the same face.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"{directory}: not a directory")
    prefix, _, suffix = pattern.partition("{face}")
    names = {f.value for f in Face}
    found = {}
    for path in sorted(directory.iterdir()):
        if not path.is_file() or not path.name.lower().startswith(prefix.lower()):
            continue
        if not path.name.lower().endswith(suffix.lower()):
            continue
        stem = path.name[len(prefix):len(path.name) - len(suffix)].lower()
        if stem not in names:
            raise InputError(f"{path}: file name does not name a cube face ({', '.join(sorted(names))})")
        if stem in found:
            raise InputError(f"{path}: duplicate {stem} face ({found[stem].name})")
        found[stem] = path
    if not found:
        raise InputError(f"{directory}: no face files matching {pattern!r}")
    out = {}
    for stem, path in found.items():
        try:
            out[stem] = io.read_png16(path)
        except OSError as exc:
            raise InputError(f"{path}: unreadable ({exc})") from exc
    return out


def cmd_convert(args) -> dict:
    raw = read_face_dir(args.faces_dir, args.pattern)
    grid = ErpGrid.from_height(args.erp_height)
    erp = cube_zbuffer_to_erp(decode_faces(raw), grid)
    out = _out_path(args, args.out)
    mask_out = _out_path(args, args.mask_out or Path(args.out).with_suffix(".mask.png"))
    io.write_depth_pfm(out, erp)
    io.write_mask_png(mask_out, erp.mask)
    print(f"{out}: {', '.join(sorted(raw))} -> {grid.height}x{grid.width}, {erp.n_valid} valid pixels")
    return {"faces": sorted(raw), "n_valid": erp.n_valid, "out": str(out), "mask_out": str(mask_out)}


# --- curate ----------------------------------------------------------------


def _curate_one(sample_dir: Path, args, grid) -> tuple[dict, object]:
    try:
        raw = read_face_dir(sample_dir, args.pattern)
        erp = cube_zbuffer_to_erp(decode_faces(raw), grid)
    except (InputError, OSError, ValueError) as exc:
        logger.warning("%s: %s", sample_dir.name, exc)
        record = {"id": sample_dir.name, "accepted": False, "reasons": [Reason.IO_ERROR.value],
                  "max_depth": None, "valid_ratio": None, "error": str(exc)}
        return record, None
    verdict = curation_verdict(erp, args.overflow, args.min_valid_ratio)
    return verdict.to_record(sample_dir.name), (erp if verdict.accepted else None)


def cmd_curate(args) -> dict:
    root = Path(args.dataset_dir)
    if not root.is_dir():
        raise InputError(f"{root}: not a directory")
    grid = ErpGrid.from_height(args.erp_height)
    samples = sorted(p for p in root.iterdir() if p.is_dir())
    results = _pool_map(lambda d: _curate_one(d, args, grid), samples, args.threads)
    manifest = _out_path(args, args.manifest_out)
    depth_dir = _out_path(args, args.depth_dir) if results else None
    counts = {"samples": len(results), "accepted": 0, "depth_overflow": 0, "too_sparse": 0, "io_error": 0}
    with open(manifest, "w", encoding="utf-8") as f:
        for record, erp in results:
            f.write(json.dumps(record) + "\n")
            counts["accepted"] += record["accepted"]
            for r in record["reasons"]:
                counts[r] += 1
            if erp is not None:
                depth_dir.mkdir(parents=True, exist_ok=True)
                io.write_depth_pfm(depth_dir / f"{record['id']}.pfm", erp)
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return {"counts": counts, "manifest": str(manifest)}


# --- eval ------------------------------------------------------------------


def _read_pred(path, kind):
    return io.read_disparity_pfm(path) if kind == "disparity" else io.read_depth_pfm(path)


def _eval_one(pred_path, gt_path, args):
    gt = io.read_depth_pfm(gt_path)
    pred = _read_pred(pred_path, args.pred_kind)
    if pred.shape != gt.shape:
        raise InputError(f"{pred_path.stem}: prediction {pred.shape} vs ground truth {gt.shape}")
    if isinstance(pred, DisparityMap) and args.bias:
        pred = DisparityMap(pred.values + args.bias, pred.mask)
    if args.min_depth is not None or args.max_depth is not None:
        gt_mask = range_mask(gt, args.min_depth, args.max_depth)
    else:
        gt_mask = gt.mask
    depth = align(pred, gt, args.protocol)
    if args.min_depth is not None or args.max_depth is not None:
        depth = cap_depth(depth, args.min_depth, args.max_depth)
    full = compute_metrics(depth, gt, gt_mask)
    boundary = None
    if args.boundary_margin:
        band = boundary_mask(gt.shape, args.boundary_margin)
        boundary = compute_metrics(depth, gt, gt_mask & band)
    excluded = int(gt_mask.sum()) - full.n_valid
    return full, boundary, excluded


def _write_table(path, ids, reports):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for sample_id, r in zip(ids, reports):
            w.writerow(r.csv_row(sample_id))
        w.writerow(mean_report(reports).csv_row("mean"))


def cmd_eval(args) -> dict:
    preds = io.stem_index(args.pred_dir, ".pfm")
    gts = io.stem_index(args.gt_dir, ".pfm")
    only_pred, only_gt = sorted(set(preds) - set(gts)), sorted(set(gts) - set(preds))
    if only_pred or only_gt:
        for s in only_pred:
            print(f"unmatched prediction: {s}", file=sys.stderr)
        for s in only_gt:
            print(f"unmatched ground truth: {s}", file=sys.stderr)
        if not args.allow_partial:
            raise InputError(f"{len(only_pred) + len(only_gt)} unmatched stems (use --allow-partial)")
    ids = sorted(set(preds) & set(gts))
    if not ids:
        raise InputError("no prediction / ground-truth pairs")
    results = _pool_map(lambda s: _eval_one(preds[s], gts[s], args), ids, args.threads)
    full = [r[0] for r in results]
    out = _out_path(args, args.out)
    _write_table(out, ids, full)
    summary = {
        "protocol": Protocol(args.protocol).value,
        "pred_kind": args.pred_kind,
        "n_samples": len(ids),
        "unmatched": {"pred": only_pred, "gt": only_gt},
        "n_excluded_pixels": sum(r[2] for r in results),
        "mean": mean_report(full).to_dict(),
    }
    if args.boundary_margin:
        band = [r[1] for r in results]
        boundary_out = out.with_name(out.stem + "_boundary" + out.suffix)
        _write_table(boundary_out, ids, band)
        summary["boundary_margin"] = args.boundary_margin
        summary["boundary_mean"] = mean_report(band).to_dict()
    summary_out = _out_path(args, args.summary_out or Path(args.out).with_suffix(".json"))
    _write_json(summary_out, summary)
    m = summary["mean"]
    print(f"{len(ids)} samples  absrel={m['absrel']:.6g} rmse={m['rmse']:.6g} delta1={m['delta1']:.6g}")
    return summary


# --- pointcloud ------------------------------------------------------------


def cmd_pointcloud(args) -> dict:
    depth = io.read_depth_pfm(args.depth)
    colors = None
    if args.image:
        colors = io.read_rgb(args.image)
        if colors.shape[:2] != depth.shape:
            raise InputError(f"image {colors.shape[:2]} does not match depth {depth.shape}")
    if depth.n_valid == 0:
        raise InputError(f"{args.depth}: no valid depth")
    cloud = depth_to_pointcloud(depth, colors)
    out = _out_path(args, args.out)
    io.write_ply(out, cloud)
    print(f"{out}: {len(cloud)} vertices")
    return {"n_vertices": len(cloud), "out": str(out)}


# --- pad-demo --------------------------------------------------------------


def cmd_pad_demo(args) -> dict:
    x = io.read_pfm(args.input)
    if args.pad < 1:
        raise InputError("--pad must be >= 1")
    kernel = box_kernel(2 * args.pad + 1, 1 if x.ndim == 2 else x.shape[2])
    doc = {
        "input": str(args.input),
        "pad": args.pad,
        "kernel": f"box {2 * args.pad + 1}x{2 * args.pad + 1}",
        "input_seam": seam_discrepancy(x),
        "zero": seam_discrepancy(conv2d(x, kernel, "zero")),
        "circular": seam_discrepancy(conv2d(x, kernel, "circular")),
    }
    _write_json(_out_path(args, args.out), doc)
    print(f"seam discrepancy: zero={doc['zero']:.6g} circular={doc['circular']:.6g}")
    return doc


# --- toytrain --------------------------------------------------------------


def cmd_toytrain(args) -> dict:
    config = toytrain.TrainConfig(
        mode=args.mode,
        steps=args.steps,
        step_size=args.step_size,
        fd_epsilon=args.fd_epsilon,
        n_train=args.n_train,
        n_val=args.n_val,
        seed=args.seed,
        height=args.height,
        token_dim=args.token_dim,
        threads=args.threads,
    )
    val = toytrain.generate_scenes(config.val_seeds(), config.grid, config.token_dim, config.threads)
    curve_out = _out_path(args, args.curve_out)
    try:
        result = toytrain.train(config, scenes_val=val)
    except toytrain.TrainingDivergedError as exc:
        _write_curve(curve_out, exc.curve)
        raise
    _write_curve(curve_out, result.curve)
    report = toytrain.evaluate_run(result, val)
    si = toytrain.mean_si_loss(result.mode, val, result.heads.shift, result.heads.scale)
    checkpoint = {"mode": result.mode.value, "config": _config_doc(config), **result.heads.to_dict()}
    _write_json(_out_path(args, args.checkpoint_out), checkpoint)
    print(f"{config.mode.value}: val si_loss={si:.6g} absrel={report.absrel:.6g} "
          f"(protocol {toytrain.DEFAULT_PROTOCOL[config.mode].value})")
    return {"val_si_loss": si, "val_metrics": report.to_dict(), "final": result.curve[-1]}


def _config_doc(config) -> dict:
    doc = dict(vars(config))
    doc["mode"] = config.mode.value
    return doc


def _write_curve(path, curve):
    with open(path, "w", encoding="utf-8") as f:
        for rec in curve:
            f.write(json.dumps(rec) + "\n")


# --- synth -----------------------------------------------------------------


def cmd_synth(args) -> dict:
    out = _out_path(args, Path(args.out_dir or ".") / "scenes.jsonl").parent
    grid = ErpGrid.from_height(args.height)
    seeds = [args.seed * 100_003 + i for i in range(args.n)]
    scenes = toytrain.generate_scenes(seeds, grid, args.token_dim, args.threads)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    (out / "raw").mkdir(parents=True, exist_ok=True)
    with open(out / "scenes.jsonl", "w", encoding="utf-8") as f:
        for i, scene in enumerate(scenes):
            sid = f"scene_{i:04d}"
            io.write_depth_pfm(out / "gt" / f"{sid}.pfm", scene.gt_depth)
            io.write_disparity_pfm(out / "raw" / f"{sid}.pfm", scene.raw_disparity)
            f.write(json.dumps({"id": sid, "seed": scene.seed, "scale": scene.scale,
                                "shift": scene.shift, "token": scene.token.tolist()}) + "\n")
    print(f"{len(scenes)} scenes -> {out}")
    return {"n": len(scenes), "out_dir": str(out)}


# --- parser ----------------------------------------------------------------


def _global_flags(parser, suppress: bool):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(0), help="random seed (default 0)")
    parser.add_argument("--threads", type=int, default=default(1), help="worker threads (default 1)")
    parser.add_argument("--output-dir", default=default("."), help="directory for outputs and run.json")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panodepth",
        description="Panoramic depth geometry, evaluation, curation and toy training tools.",
        epilog="Exit codes: 0 success, 2 usage or input error, 3 numerical failure.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("convert", parents=[common], help="cube-face Z-buffers to an ERP depth PFM")
    p.add_argument("--faces-dir", required=True)
    p.add_argument("--erp-height", type=int, required=True)
    p.add_argument("--out", required=True, help="ERP depth PFM")
    p.add_argument("--mask-out", help="coverage mask PNG (default: next to --out)")
    p.add_argument("--pattern", default="{face}.png", help="face file name pattern")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("curate", parents=[common], help="filter a dataset of cube-face samples")
    p.add_argument("--dataset-dir", required=True)
    p.add_argument("--overflow", type=float, default=OVERFLOW_THRESHOLD, help="max depth in meters")
    p.add_argument("--min-valid-ratio", type=float, default=MIN_VALID_RATIO)
    p.add_argument("--manifest-out", default="manifest.jsonl")
    p.add_argument("--depth-dir", default="accepted", help="where accepted ERP depth PFMs go")
    p.add_argument("--erp-height", type=int, default=256)
    p.add_argument("--pattern", default="{face}.png")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("eval", parents=[common], help="align predictions and compute depth metrics")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--pred-kind", choices=["disparity", "depth"], required=True)
    p.add_argument("--protocol", choices=[x.value for x in Protocol], required=True)
    p.add_argument("--boundary-margin", type=int)
    p.add_argument("--min-depth", type=float)
    p.add_argument("--max-depth", type=float)
    p.add_argument("--bias", type=float, default=0.0, help="added to disparity before inversion")
    p.add_argument("--allow-partial", action="store_true")
    p.add_argument("--out", default="metrics.csv")
    p.add_argument("--summary-out", help="aggregate JSON (default: --out with .json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pointcloud", parents=[common], help="ERP depth PFM to an ASCII PLY")
    p.add_argument("--depth", required=True)
    p.add_argument("--image", help="RGB panorama for vertex colors")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pointcloud)

    p = sub.add_parser("pad-demo", parents=[common], help="seam discrepancy of zero vs circular padding")
    p.add_argument("--input", required=True, help="ERP PFM")
    p.add_argument("--pad", type=int, default=1)
    p.add_argument("--out", default="pad_demo.json")
    p.set_defaults(func=cmd_pad_demo)

    defaults = toytrain.TrainConfig()
    p = sub.add_parser("toytrain", parents=[common], help="fit shift/scale heads on synthetic scenes")
    p.add_argument("--mode", choices=[m.value for m in toytrain.Mode], default=defaults.mode.value)
    p.add_argument("--steps", type=int, default=defaults.steps)
    p.add_argument("--step-size", type=float, default=defaults.step_size)
    p.add_argument("--fd-epsilon", type=float, default=defaults.fd_epsilon)
    p.add_argument("--n-train", type=int, default=defaults.n_train)
    p.add_argument("--n-val", type=int, default=defaults.n_val)
    p.add_argument("--height", type=int, default=defaults.height)
    p.add_argument("--token-dim", type=int, default=defaults.token_dim)
    p.add_argument("--checkpoint-out", default="checkpoint.json")
    p.add_argument("--curve-out", default="curve.jsonl")
    p.set_defaults(func=cmd_toytrain)

    p = sub.add_parser("synth", parents=[common], help="export synthetic scenes as PFMs")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--token-dim", type=int, default=16)
    p.add_argument("--out-dir", help="relative paths resolve under --output-dir")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    config = {k: v for k, v in vars(args).items() if k != "func"}
    run = {"command": args.command, "version": __version__, "config": config}
    try:
        run["result"] = args.func(args)
        code = EXIT_OK
    except NUMERICAL_ERRORS as exc:
        run["error"] = f"numerical failure: {exc}"
        code = EXIT_NUMERICAL
    except (InputError, OSError, ValueError, TypeError) as exc:
        run["error"] = str(exc)
        code = EXIT_INPUT
    if code != EXIT_OK:
        print(f"panodepth {args.command}: {run['error']}", file=sys.stderr)
    run["exit_code"] = code
    try:
        _write_json(_out_path(args, "run.json"), _jsonable(run))
    except OSError as exc:
        print(f"panodepth: cannot write run.json: {exc}", file=sys.stderr)
        code = code or EXIT_INPUT
    return code


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, Path):
        return str(x)
    return x


if __name__ == "__main__":
    sys.exit(main())
