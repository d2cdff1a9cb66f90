"""Command-line front end. See FORMATS.md for the file layouts.

Exit status: 0 ok, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from contextlib import contextmanager

from . import records as rec
from .anchor_codec import (
    DEFAULT_IMAGE_SIZE,
    DEFAULT_SCALES,
    DEFAULT_STRIDE,
    decode,
    encode,
    generate_anchor_grid,
    default_anchor_grid,
)
from .detection_eval import DEFAULT_FP_GRID, FrocCurve, _readout, froc_operating_points
from .errors import InvalidInputError, NumericalError, OptimizationDiverged
from .fit import AnchorCircleInit, FitConfig, best_anchor, compare, fit_kl, fit_regression
from .kl_loss import kl_divergence, kl_gradient
from .raster_metrics import DEFAULT_CELLS, ellipse_iou, ellipse_iou_mc, nms, rasterize_ellipse, union_grid, write_pgm
from .synth import CorruptionConfig, SceneConfig, corrupt, generate_scenes, sample_targets

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def fmt(v) -> str:
    """Shortest round-trip text for floats, plain text otherwise."""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgError(f"{self.prog}: error: {message}")


def _floats(text):
    try:
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _pair(text):
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected two numbers 'lo,hi', got {text!r}")
    return vals


@contextmanager
def _out(path):
    if path in (None, "-"):
        yield sys.stdout
        return
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise InvalidInputError(f"cannot write {path}: {exc.strerror}") from exc
    with fh:
        yield fh


def _broadcast(a, b, what):
    if len(a) == len(b):
        return list(zip(a, b))
    if len(a) == 1:
        return [(a[0], y) for y in b]
    if len(b) == 1:
        return [(x, b[0]) for x in a]
    raise InvalidInputError(f"{what}: record counts differ ({len(a)} vs {len(b)}) and neither is 1")


def _write_csv(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])


# subcommands

def cmd_kl(args):
    pairs = _broadcast(rec.read_ellipses(args.target), rec.read_ellipses(args.proposal), "kl")
    with _out(args.out) as fh:
        for t, p in pairs:
            if args.grad:
                g = kl_gradient(t, p)
                fh.write(",".join(fmt(v) for v in (kl_divergence(t, p),) + g.as_tuple()) + "\n")
            else:
                fh.write(fmt(kl_divergence(t, p)) + "\n")


def cmd_iou(args):
    pairs = _broadcast(rec.read_ellipses(args.a), rec.read_ellipses(args.b), "iou")
    if args.dump_masks:
        os.makedirs(args.dump_masks, exist_ok=True)
    with _out(args.out) as fh:
        for k, (a, b) in enumerate(pairs):
            mc = ellipse_iou_mc(a, b, args.mc_samples, seed=args.seed)
            row = {"raster_iou": ellipse_iou(a, b, args.cells), "mc_iou": mc.iou, "mc_stderr": mc.stderr}
            rec.write_records(fh, [row])
            if args.dump_masks:
                grid = union_grid(a, b, args.cells)
                write_pgm(os.path.join(args.dump_masks, f"pair{k:04d}_a.pgm"), rasterize_ellipse(a, grid))
                write_pgm(os.path.join(args.dump_masks, f"pair{k:04d}_b.pgm"), rasterize_ellipse(b, grid))


def cmd_encode(args):
    gts = rec.read_ground_truths(args.ellipses)
    pairs = _broadcast(gts, rec.read_anchors(args.anchors), "encode")
    with _out(args.out) as fh:
        rec.write_records(fh, (rec.encoded_record(encode(g.ellipse, a), g.image_id) for g, a in pairs))


def cmd_decode(args):
    pairs = _broadcast(rec.read_encoded(args.encoded), rec.read_anchors(args.anchors), "decode")
    with _out(args.out) as fh:
        rec.write_records(fh, (rec.ellipse_record(decode(t, a), img) for (t, img), a in pairs))


def cmd_anchors(args):
    if args.default_grid:
        grid = default_anchor_grid()
    else:
        grid = generate_anchor_grid(args.width, args.height, args.stride, args.scales, args.ratios)
    with _out(args.out) as fh:
        rec.write_records(fh, map(rec.anchor_record, grid))


def cmd_nms(args):
    dets = rec.read_detections(args.dets)
    kept = nms(dets, args.iou, use_ellipse_iou=args.ellipse_iou, cells_per_axis=args.cells)
    with _out(args.out) as fh:
        rec.write_records(fh, map(rec.detection_record, kept))


def _scene_cfg(args):
    return SceneConfig(image_w=args.image_w, image_h=args.image_h,
                       lesions_per_image=(int(args.lesions[0]), int(args.lesions[1])),
                       scale_range=args.scale_range,
                       aspect_ratio_distribution=("loguniform", args.aspect_range),
                       seed=args.seed)


def _corruption_cfg(args, image_w=512.0, image_h=512.0):
    return CorruptionConfig(center_noise_sigma=args.center_noise, axis_noise_sigma=args.axis_noise,
                            angle_noise_sigma=args.angle_noise, miss_rate=args.miss_rate,
                            fp_rate=args.fp_rate, score_separation=args.score_separation,
                            seed=args.seed, image_w=image_w, image_h=image_h)


def cmd_synth(args):
    scene = _scene_cfg(args)
    gts = generate_scenes(scene, args.n_images)
    with _out(args.gts) as fh:
        rec.write_records(fh, map(rec.gt_record, gts))
    if args.dets:
        dets = corrupt(gts, _corruption_cfg(args, scene.image_w, scene.image_h), image_ids=range(args.n_images))
        with _out(args.dets) as fh:
            rec.write_records(fh, map(rec.detection_record, dets))


def cmd_corrupt(args):
    gts = rec.read_ground_truths(args.gts)
    ids = range(args.n_images) if args.n_images is not None else None
    dets = corrupt(gts, _corruption_cfg(args, args.image_w, args.image_h), image_ids=ids)
    with _out(args.out) as fh:
        rec.write_records(fh, map(rec.detection_record, dets))


def _fit_cfg(args, **extra):
    return FitConfig(learning_rate=args.lr, max_iters=args.max_iters,
                     convergence_eps=args.eps, cells_per_axis=args.cells, **extra)


def cmd_fit(args):
    pairs = _broadcast(rec.read_ellipses(args.target), rec.read_ellipses(args.init), "fit")
    anchors = rec.read_anchors(args.anchors) if args.anchors else None
    if args.loss == "regression" or args.space == "anchor_encoded":
        if not anchors:
            raise InvalidInputError("--anchors is required for --loss regression or --space anchor_encoded")
    finals, trace_rows = [], []
    for k, (t, init) in enumerate(pairs):
        anchor = None
        if anchors:
            anchor = anchors[0] if len(anchors) == 1 else best_anchor(t, anchors)
        cfg = _fit_cfg(args, parameter_space=args.space, anchor=anchor)
        if args.loss == "kl":
            tr = fit_kl(t, init, cfg)
        else:
            tr = fit_regression(t, init, anchor, cfg)
        finals.append(rec.ellipse_record(tr.final))
        for i, loss in enumerate(tr.losses):
            trace_rows.append((k, i, loss, tr.ious[i] if tr.ious else math.nan))
    with _out(args.out) as fh:
        rec.write_records(fh, finals)
    if args.trace:
        with _out(args.trace) as fh:
            _write_csv(fh, ("instance", "iteration", "loss", "iou"), trace_rows)


SUMMARY_KEYS = ("method", "n", "n_diverged", "mean_iou", "median_iou", "frac_iou_ge_0.5",
                "frac_iou_ge_0.7", "frac_iou_ge_0.9", "mean_iters", "median_iters")
ANGLE_KEYS = ("method", "aspect_lo", "aspect_hi", "n", "median_angle_error_deg", "mean_angle_error_deg")


def run_compare(n, seed, workers=1, lr=0.1, max_iters=500, space="anchor_encoded"):
    """The desk-scale localization experiment: synthetic targets, anchor-circle inits."""
    targets = sample_targets(SceneConfig(seed=seed), n)
    cfg = FitConfig(learning_rate=lr, max_iters=max_iters)
    return compare(targets, AnchorCircleInit(default_anchor_grid()), cfg, workers=workers, space=space)


def compare_tables(report):
    summary = [[report.summary(m)[k] for k in SUMMARY_KEYS] for m in ("kl", "regression")]
    angles = [[r[k] for k in ANGLE_KEYS] for r in report.angle_table()]
    return summary, angles


def cmd_compare(args):
    report = run_compare(args.n, args.seed, args.workers, args.lr, args.max_iters, args.space)
    summary, angles = compare_tables(report)
    with _out(args.out) as fh:
        _write_csv(fh, SUMMARY_KEYS, summary)
    if args.angle_table:
        with _out(args.angle_table) as fh:
            _write_csv(fh, ANGLE_KEYS, angles)
    if args.instances:
        with _out(args.instances) as fh:
            rows = []
            for r in report.instances:
                f = r.final.as_tuple() if r.final is not None else (math.nan,) * 5
                rows.append((r.index, r.method, r.aspect_ratio, *r.target.as_tuple(), *f,
                             r.final_iou, r.iterations, r.angle_error_deg, int(r.diverged)))
            _write_csv(fh, ("index", "method", "aspect_ratio",
                            "t_mu_x", "t_mu_y", "t_sigma_l", "t_sigma_s", "t_theta_rad",
                            "f_mu_x", "f_mu_y", "f_sigma_l", "f_sigma_s", "f_theta_rad",
                            "final_iou", "iterations", "angle_error_deg", "diverged"), rows)


def cmd_froc(args):
    dets = rec.read_detections(args.dets, default_score=args.default_score)
    gts = rec.read_ground_truths(args.gts)
    ids = range(args.n_images) if args.n_images is not None else None
    grid = tuple(args.fp_grid)
    if any(b <= 0 for b in grid) or list(grid) != sorted(set(grid)):
        raise InvalidInputError("--fp-grid must be positive and strictly increasing")
    pts = froc_operating_points(dets, gts, args.iou, image_ids=ids)
    curve = FrocCurve(tuple((b, _readout(pts, b)) for b in grid))
    with _out(args.out) as fh:
        _write_csv(fh, ("fp_per_image", "sensitivity"), zip(curve.fp, curve.sensitivity))
    if args.curve:
        with _out(args.curve) as fh:
            _write_csv(fh, ("fp_per_image", "sensitivity", "score_threshold"), pts)


# parser

def _add_out(p, what="output records"):
    p.add_argument("--out", "-o", default="-", help=f"{what} path ('-' = stdout, the default)")


def _add_fit_flags(p):
    p.add_argument("--lr", type=float, default=0.1, help="initial step size for backtracking (default 0.1)")
    p.add_argument("--max-iters", type=int, default=500, help="iteration cap (default 500)")
    p.add_argument("--eps", type=float, default=1e-12,
                   help="stop when the loss decrease falls below this (default 1e-12)")
    p.add_argument("--cells", type=int, default=DEFAULT_CELLS, help="raster cells on the longer axis for IoU")


def _add_corruption_flags(p):
    p.add_argument("--center-noise", type=float, default=0.0, help="centre jitter, fraction of semi-major axis")
    p.add_argument("--axis-noise", type=float, default=0.0, help="log-scale jitter of the semi-axes")
    p.add_argument("--angle-noise", type=float, default=0.0, help="angle jitter in degrees")
    p.add_argument("--miss-rate", type=float, default=0.0, help="probability a lesion gets no detection")
    p.add_argument("--fp-rate", type=float, default=0.0, help="expected false positives per image")
    p.add_argument("--score-separation", type=float, default=4.0,
                   help="logit gap between true and false positive scores; 'inf' gives TP score 1")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gpnloc", description="Gaussian ellipse localization tools.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("kl", help="KL(target || proposal) for ellipse records")
    p.add_argument("--target", required=True, help="target ellipse records")
    p.add_argument("--proposal", required=True, help="proposal ellipse records (paired by line, or one)")
    p.add_argument("--grad", action="store_true",
                   help="also print d/d(mu_x, mu_y, sigma_l, sigma_s, theta_rad) as CSV")
    _add_out(p, "output")
    p.set_defaults(fn=cmd_kl)

    p = sub.add_parser("iou", help="raster and Monte Carlo IoU of ellipse pairs")
    p.add_argument("--a", required=True, help="first ellipse records")
    p.add_argument("--b", required=True, help="second ellipse records")
    p.add_argument("--cells", type=int, default=DEFAULT_CELLS, help="raster cells on the longer axis")
    p.add_argument("--mc-samples", type=int, default=100_000, help="Monte Carlo samples (>= 10000)")
    p.add_argument("--seed", type=int, default=0, help="Monte Carlo seed")
    p.add_argument("--dump-masks", metavar="DIR", help="write both raster masks of every pair as PGM files")
    _add_out(p)
    p.set_defaults(fn=cmd_iou)

    p = sub.add_parser("encode", help="anchor-relative targets (tx, ty, tw, th, t_tan)")
    p.add_argument("--ellipses", required=True, help="ellipse records")
    p.add_argument("--anchors", required=True, help="anchor records (paired by line, or one)")
    _add_out(p)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("decode", help="encoded records back to ellipses")
    p.add_argument("--encoded", required=True, help="encoded records")
    p.add_argument("--anchors", required=True, help="anchor records (paired by line, or one)")
    _add_out(p)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("anchors", help="anchor grid")
    p.add_argument("--default-grid", action="store_true",
                   help=f"{DEFAULT_IMAGE_SIZE}x{DEFAULT_IMAGE_SIZE}, stride {DEFAULT_STRIDE}, scales {DEFAULT_SCALES}")
    p.add_argument("--width", type=float, default=DEFAULT_IMAGE_SIZE, help="image width")
    p.add_argument("--height", type=float, default=DEFAULT_IMAGE_SIZE, help="image height")
    p.add_argument("--stride", type=float, default=DEFAULT_STRIDE, help="grid stride")
    p.add_argument("--scales", type=_floats, default=DEFAULT_SCALES, help="comma-separated anchor sizes")
    p.add_argument("--ratios", type=_floats, default=(1.0,), help="comma-separated width/height ratios")
    _add_out(p)
    p.set_defaults(fn=cmd_anchors)

    p = sub.add_parser("nms", help="greedy non-maximum suppression, per image")
    p.add_argument("--dets", required=True, help="detection records (with score)")
    p.add_argument("--iou", type=float, default=0.5, help="suppression threshold (default 0.5)")
    p.add_argument("--ellipse-iou", action="store_true", help="suppress on raster ellipse IoU instead of box IoU")
    p.add_argument("--cells", type=int, default=DEFAULT_CELLS, help="raster cells for --ellipse-iou")
    _add_out(p)
    p.set_defaults(fn=cmd_nms)

    p = sub.add_parser("synth", help="synthetic ground truth and (optionally) corrupted detections")
    p.add_argument("--n-images", type=int, required=True, help="number of images")
    p.add_argument("--seed", type=int, default=0, help="scene and corruption seed")
    p.add_argument("--image-w", type=float, default=512.0, help="image width")
    p.add_argument("--image-h", type=float, default=512.0, help="image height")
    p.add_argument("--lesions", type=_pair, default=(1, 3), help="lesions per image 'lo,hi' inclusive")
    p.add_argument("--scale-range", type=_pair, default=(8.0, 64.0), help="semi-major axis range 'lo,hi'")
    p.add_argument("--aspect-range", type=_pair, default=(1.0, 3.0), help="log-uniform aspect ratio range")
    p.add_argument("--gts", default="-", help="ground-truth output path (default stdout)")
    p.add_argument("--dets", help="also write corrupted detections here")
    _add_corruption_flags(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("corrupt", help="simulated detector output from ground truth")
    p.add_argument("--gts", required=True, help="ground-truth records")
    p.add_argument("--seed", type=int, default=0, help="corruption seed")
    p.add_argument("--n-images", type=int, help="images 0..N-1 (default: ids present in --gts)")
    p.add_argument("--image-w", type=float, default=512.0, help="image width for false positives")
    p.add_argument("--image-h", type=float, default=512.0, help="image height for false positives")
    _add_corruption_flags(p)
    _add_out(p)
    p.set_defaults(fn=cmd_corrupt)

    p = sub.add_parser("fit", help="gradient-descent fit of a proposal to a target")
    p.add_argument("--target", required=True, help="target ellipse records")
    p.add_argument("--init", required=True, help="initial proposal records (paired by line, or one)")
    p.add_argument("--loss", choices=("kl", "regression"), default="kl", help="loss to minimize")
    p.add_argument("--space", choices=("raw", "anchor_encoded"), default="raw", help="parameterization")
    p.add_argument("--anchors", help="anchor records; one is used as-is, several pick the best by box IoU")
    p.add_argument("--trace", help="per-iteration CSV (instance, iteration, loss, iou)")
    _add_fit_flags(p)
    _add_out(p, "final ellipse records")
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("compare", help="KL vs regression localization on synthetic targets")
    p.add_argument("--n", type=int, default=500, help="number of targets (default 500)")
    p.add_argument("--seed", type=int, default=7, help="scene seed (default 7)")
    p.add_argument("--workers", type=int, default=1, help="worker processes; output does not depend on it")
    p.add_argument("--space", choices=("raw", "anchor_encoded"), default="anchor_encoded",
                   help="parameterization for both fitters")
    p.add_argument("--lr", type=float, default=0.1, help="initial step size (default 0.1)")
    p.add_argument("--max-iters", type=int, default=500, help="iteration cap (default 500)")
    p.add_argument("--angle-table", help="per-aspect-bin angle error CSV (degrees)")
    p.add_argument("--instances", help="per-instance CSV")
    _add_out(p, "summary CSV")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("froc", help="FROC readout at fixed false-positive budgets")
    p.add_argument("--dets", required=True, help="detection records")
    p.add_argument("--gts", required=True, help="ground-truth records")
    p.add_argument("--iou", type=float, default=0.5, help="ellipse IoU needed for a hit (default 0.5)")
    p.add_argument("--fp-grid", type=_floats, default=DEFAULT_FP_GRID,
                   help="comma-separated FP/image budgets (default 0.5,1,2,4,8,16)")
    p.add_argument("--n-images", type=int, help="images 0..N-1 (default: ids in either file)")
    p.add_argument("--default-score", type=float, default=1.0,
                   help="score for detection records without one (default 1.0)")
    p.add_argument("--curve", help="full operating-point CSV")
    _add_out(p, "grid CSV")
    p.set_defaults(fn=cmd_froc)
    return ap


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.fn(args)
    except _ArgError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except InvalidInputError as exc:
        print(f"gpnloc: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OptimizationDiverged as exc:
        print(f"gpnloc: optimization diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NumericalError as exc:
        print(f"gpnloc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
