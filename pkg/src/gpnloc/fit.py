"""Single-instance ellipse fitting: KL loss versus smoothed-L1 regression.

Both fitters run plain gradient descent with Armijo backtracking (halving
from ``learning_rate``) over a five-vector of parameters:

* ``raw``: ``(mu_x, mu_y, ln sigma_l, ln sigma_s, theta)``
* ``anchor_encoded``: ``(tx, ty, tw, th, t_tan)`` relative to an anchor

The regression fitter always works in the encoded space because that is
where its loss is defined.
"""
from __future__ import annotations

import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .anchor_codec import Anchor, EncodedEllipse, box_iou_matrix, decode, encode
from .detection_eval import angle_error
from .errors import InvalidInputError, NumericalError, OptimizationDiverged
from .geometry import Ellipse, ellipse_bbox, normalize_angle
from .kl_loss import kl_divergence, kl_gradient, smoothed_l1, smoothed_l1_grad
from .raster_metrics import DEFAULT_CELLS, ellipse_iou

DIVERGENCE_LOSS = 1e6
ARMIJO_C = 1e-4
MAX_HALVINGS = 60


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 0.1
    max_iters: int = 500
    convergence_eps: float = 1e-12
    parameter_space: str = "raw"  # or "anchor_encoded"
    anchor: Anchor | None = None
    track_iou: bool = True
    cells_per_axis: int = DEFAULT_CELLS

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be at least 1")
        if self.parameter_space not in ("raw", "anchor_encoded"):
            raise InvalidInputError(f"unknown parameter space {self.parameter_space!r}")
        if self.parameter_space == "anchor_encoded" and self.anchor is None:
            raise InvalidInputError("anchor_encoded parameter space needs an anchor")


@dataclass
class FitTrace:
    method: str
    losses: list[float] = field(default_factory=list)
    ellipses: list[Ellipse] = field(default_factory=list)
    ious: list[float] = field(default_factory=list)
    final: Ellipse | None = None
    final_loss: float = math.nan
    final_iou: float = math.nan
    converged: bool = False
    iterations: int = 0


class _RawSpace:
    def to_params(self, e: Ellipse):
        return np.array([e.mu_x, e.mu_y, math.log(e.sigma_l), math.log(e.sigma_s), e.theta])

    def to_ellipse(self, x) -> Ellipse:
        return Ellipse(x[0], x[1], math.exp(x[2]), math.exp(x[3]), x[4])

    def chain(self, x, e: Ellipse, g) -> np.ndarray:
        return np.array([g.d_mu_x, g.d_mu_y, e.sigma_l * g.d_sigma_l, e.sigma_s * g.d_sigma_s,
                         g.d_theta])

    def renorm(self, x):
        x[4] = normalize_angle(x[4])
        return x


class _EncodedSpace:
    def __init__(self, anchor: Anchor):
        self.anchor = anchor

    def to_params(self, e: Ellipse):
        return np.array(encode(e, self.anchor).as_tuple())

    def to_ellipse(self, x) -> Ellipse:
        return decode(EncodedEllipse(*x), self.anchor)

    def chain(self, x, e: Ellipse, g) -> np.ndarray:
        a = self.anchor
        return np.array([a.w * g.d_mu_x, a.h * g.d_mu_y, e.sigma_l * g.d_sigma_l,
                         e.sigma_s * g.d_sigma_s, g.d_theta / (1.0 + x[4] * x[4])])

    def renorm(self, x):
        return x


def _space(cfg: FitConfig):
    return _RawSpace() if cfg.parameter_space == "raw" else _EncodedSpace(cfg.anchor)


def descend(loss_fn, grad_fn, x0, cfg: FitConfig, to_ellipse, target: Ellipse | None = None,
            renorm=None, method="custom") -> FitTrace:
    """Gradient descent with halving backtracking on ``loss_fn``.

    ``grad_fn(x)`` returns the gradient as an array. Iterates that make
    ``loss_fn`` raise a numerical error count as infinite loss and are
    rejected by the line search. Stops when an accepted step lowers the loss
    by less than ``convergence_eps`` or when no step size satisfies the
    Armijo condition.
    """
    trace = FitTrace(method)
    x = np.array(x0, dtype=float)

    def safe_loss(z):
        try:
            v = loss_fn(z)
        except (NumericalError, OverflowError, ValueError):
            return math.inf
        return v if math.isfinite(v) else math.inf

    f = safe_loss(x)
    if not math.isfinite(f):
        raise InvalidInputError("initial point has non-finite loss")
    for k in range(cfg.max_iters):
        e = to_ellipse(x)
        trace.losses.append(f)
        trace.ellipses.append(e)
        if cfg.track_iou and target is not None:
            trace.ious.append(ellipse_iou(target, e, cfg.cells_per_axis))
        if f > DIVERGENCE_LOSS:
            trace.iterations = k
            raise OptimizationDiverged(f"loss {f:.3g} exceeded {DIVERGENCE_LOSS:g}", trace)
        g = np.asarray(grad_fn(x), dtype=float)
        gg = float(g @ g)
        t = cfg.learning_rate
        for _ in range(MAX_HALVINGS):
            xn = x - t * g
            if renorm is not None:
                xn = renorm(xn)
            fn = safe_loss(xn)
            if fn <= f - ARMIJO_C * t * gg:
                break
            t *= 0.5
        else:
            trace.converged = True
            trace.iterations = k
            break
        x, f_prev, f = xn, f, fn
        if f_prev - f < cfg.convergence_eps:
            trace.converged = True
            trace.iterations = k
            break
    else:
        trace.iterations = cfg.max_iters
    trace.final = to_ellipse(x)
    trace.final_loss = f
    if target is not None:
        trace.final_iou = ellipse_iou(target, trace.final, cfg.cells_per_axis)
    return trace


def fit_kl(target: Ellipse, init: Ellipse, cfg: FitConfig = FitConfig()) -> FitTrace:
    """Minimize ``kl_divergence(target, proposal)`` starting from ``init``."""
    space = _space(cfg)

    def loss(x):
        return kl_divergence(target, space.to_ellipse(x))

    def grad(x):
        e = space.to_ellipse(x)
        return space.chain(x, e, kl_gradient(target, e))

    return descend(loss, grad, space.to_params(init), cfg, space.to_ellipse, target,
                   renorm=space.renorm, method="kl")


def fit_regression(target: Ellipse, init: Ellipse, anchor: Anchor,
                   cfg: FitConfig = FitConfig()) -> FitTrace:
    """Minimize the summed smoothed-L1 loss between encoded proposal and encoded target."""
    space = _EncodedSpace(anchor)
    goal = np.array(encode(target, anchor).as_tuple())

    def loss(x):
        return sum(smoothed_l1(a, b) for a, b in zip(x, goal))

    def grad(x):
        return np.array([smoothed_l1_grad(a, b) for a, b in zip(x, goal)])

    return descend(loss, grad, space.to_params(init), cfg, space.to_ellipse, target,
                   method="regression")


# --- comparison harness -------------------------------------------------------

ASPECT_BINS = ((1.0, 1.2), (1.2, 1.5), (1.5, 2.0), (2.0, 3.0))
IOU_LEVELS = (0.5, 0.7, 0.9)
METHODS = ("kl", "regression")


def best_anchor(target: Ellipse, anchors, boxes=None) -> Anchor:
    """Anchor with the highest box IoU against the target's tight box (lowest index on ties)."""
    if boxes is None:
        boxes = [a.box() for a in anchors]
    iou = box_iou_matrix(boxes, [ellipse_bbox(target)])[:, 0]
    return anchors[int(np.argmax(iou))]


class AnchorCircleInit:
    """Initial proposal = inscribed ellipse of the best-matching anchor, at theta = 0."""

    def __init__(self, anchors):
        self.anchors = list(anchors)
        self._boxes = [a.box() for a in self.anchors]

    def __call__(self, target: Ellipse):
        a = best_anchor(target, self.anchors, self._boxes)
        return a.inscribed_ellipse(), a


class TargetInit:
    """Start at the target itself; the anchor is still picked by IoU."""

    def __init__(self, anchors):
        self._inner = AnchorCircleInit(anchors)

    def __call__(self, target: Ellipse):
        _, a = self._inner(target)
        return target, a


@dataclass(frozen=True)
class InstanceResult:
    index: int
    target: Ellipse
    aspect_ratio: float
    method: str
    final: Ellipse | None
    final_iou: float
    iterations: int
    angle_error_deg: float
    diverged: bool


def _run_one(job):
    index, target, init, anchor, cfg, space = job
    cfg = replace(cfg, anchor=anchor, parameter_space=space, track_iou=False)
    out = []
    for method in METHODS:
        try:
            if method == "kl":
                tr = fit_kl(target, init, cfg)
            else:
                tr = fit_regression(target, init, anchor, cfg)
        except OptimizationDiverged as exc:
            it = exc.trace.iterations if exc.trace is not None else 0
            out.append(InstanceResult(index, target, target.aspect_ratio, method, None,
                                      0.0, it, math.nan, True))
            continue
        out.append(InstanceResult(index, target, target.aspect_ratio, method, tr.final,
                                  tr.final_iou, tr.iterations, angle_error(tr.final, target),
                                  False))
    return out


@dataclass
class CompareReport:
    instances: list[InstanceResult]

    def rows(self, method):
        return [r for r in self.instances if r.method == method]

    def summary(self, method) -> dict:
        rows = self.rows(method)
        ok = [r for r in rows if not r.diverged]
        ious = [r.final_iou for r in rows]  # diverged rows count as IoU 0
        out = {
            "method": method,
            "n": len(rows),
            "n_diverged": len(rows) - len(ok),
            "mean_iou": statistics.fmean(ious) if ious else math.nan,
            "median_iou": statistics.median(ious) if ious else math.nan,
        }
        for lvl in IOU_LEVELS:
            out[f"frac_iou_ge_{lvl}"] = sum(v >= lvl for v in ious) / len(ious) if ious else math.nan
        iters = [r.iterations for r in ok]
        out["mean_iters"] = statistics.fmean(iters) if iters else math.nan
        out["median_iters"] = statistics.median(iters) if iters else math.nan
        return out

    def angle_table(self, bins=ASPECT_BINS) -> list[dict]:
        table = []
        for method in METHODS:
            rows = [r for r in self.rows(method) if not r.diverged]
            for i, (lo, hi) in enumerate(bins):
                last = i == len(bins) - 1
                errs = [r.angle_error_deg for r in rows
                        if lo <= r.aspect_ratio and (r.aspect_ratio <= hi if last else r.aspect_ratio < hi)]
                table.append({
                    "method": method,
                    "aspect_lo": lo,
                    "aspect_hi": hi,
                    "n": len(errs),
                    "median_angle_error_deg": statistics.median(errs) if errs else math.nan,
                    "mean_angle_error_deg": statistics.fmean(errs) if errs else math.nan,
                })
        return table


def compare(targets, init_rule: Callable, cfg: FitConfig = FitConfig(), workers: int = 1,
            space: str = "anchor_encoded") -> CompareReport:
    """Fit every target with both losses from the same initial proposal.

    ``init_rule(target)`` returns ``(init_ellipse, anchor)``. Both fitters run in
    ``space`` (the per-target anchor is filled in). Diverged fits are kept as
    flagged rows. Results do not depend on ``workers``.
    """
    if space not in ("raw", "anchor_encoded"):
        raise InvalidInputError(f"unknown parameter space {space!r}")
    targets = list(targets)
    if not targets:
        raise InvalidInputError("compare needs at least one target")
    jobs = []
    for i, t in enumerate(targets):
        init, anchor = init_rule(t)
        jobs.append((i, t, init, anchor, cfg, space))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        chunks = [_run_one(j) for j in jobs]
    return CompareReport([r for chunk in chunks for r in chunk])
