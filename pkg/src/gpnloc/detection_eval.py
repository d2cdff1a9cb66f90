"""FROC evaluation, IoU-threshold sweeps and rotation-angle error."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Hashable, Sequence

from .errors import InvalidInputError
from .geometry import CIRCLE_TOL, Ellipse
from .raster_metrics import Detection, ellipse_iou

DEFAULT_FP_GRID = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass(frozen=True)
class GroundTruth:
    ellipse: Ellipse
    image_id: Hashable = 0


@dataclass(frozen=True)
class FrocCurve:
    """``(avg_fp_per_image, sensitivity)`` pairs, fp strictly increasing."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(f), float(s)) for f, s in self.points)
        for (f0, s0), (f1, s1) in zip(pts, pts[1:]):
            if not f1 > f0:
                raise InvalidInputError("FROC fp values must be strictly increasing")
            if s1 < s0:
                raise InvalidInputError("FROC sensitivity must be non-decreasing")
        object.__setattr__(self, "points", pts)

    @property
    def fp(self):
        return [p[0] for p in self.points]

    @property
    def sensitivity(self):
        return [p[1] for p in self.points]


def _sort_key(dets):
    # score, image id (as text so mixed id types compare), ellipse, input index;
    # the ellipse key makes the order independent of input permutation
    return lambda i: (-dets[i].score, str(dets[i].image_id), dets[i].ellipse.as_tuple(), i)


def match_detections(dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_thresh: float,
                     iou: Callable[[Ellipse, Ellipse], float] = ellipse_iou,
                     order: Sequence[int] | None = None) -> list[bool]:
    """Greedy one-to-one matching; returns a TP flag per detection (input order).

    Detections are visited by descending score (ties by image id, ellipse
    parameters, then input index). Each takes the unmatched same-image ground
    truth of highest IoU (lowest index on ties) and is a true positive when
    that IoU reaches ``iou_thresh``.
    """
    by_image = defaultdict(list)
    for j, g in enumerate(gts):
        by_image[g.image_id].append(j)
    used = [False] * len(gts)
    flags = [False] * len(dets)
    if order is None:
        order = sorted(range(len(dets)), key=_sort_key(dets))
    for i in order:
        d = dets[i]
        best, best_j = -1.0, -1
        for j in by_image.get(d.image_id, ()):
            if used[j]:
                continue
            o = iou(d.ellipse, gts[j].ellipse)
            if o > best:
                best, best_j = o, j
        if best_j >= 0 and best >= iou_thresh:
            used[best_j] = True
            flags[i] = True
    return flags


def _image_count(dets, gts, image_ids):
    if image_ids is not None:
        ids = set(image_ids)
    else:
        ids = {g.image_id for g in gts} | {d.image_id for d in dets}
    return max(1, len(ids))


def froc_operating_points(dets, gts, iou_thresh=0.5, image_ids=None, iou=ellipse_iou):
    """Every operating point of the score-threshold sweep, including the empty one.

    Returns ``[(avg_fp_per_image, sensitivity, score_threshold), ...]`` in
    order of decreasing threshold. A cut always keeps every detection tied
    with the threshold score.
    """
    gts, dets = list(gts), list(dets)
    if not gts:
        raise InvalidInputError("FROC needs at least one ground truth")
    n_img = _image_count(dets, gts, image_ids)
    order = sorted(range(len(dets)), key=_sort_key(dets))
    flags = match_detections(dets, gts, iou_thresh, iou=iou, order=order)
    points = [(0.0, 0.0, math.inf)]
    tp = fp = 0
    for pos, i in enumerate(order):
        if flags[i]:
            tp += 1
        else:
            fp += 1
        last = pos + 1 == len(order) or dets[order[pos + 1]].score != dets[i].score
        if last:
            points.append((fp / n_img, tp / len(gts), dets[i].score))
    return points


def _readout(points, budget):
    return max(s for f, s, _ in points if f <= budget)


def froc(dets, gts, iou_thresh=0.5, fp_grid=DEFAULT_FP_GRID, image_ids=None,
         iou=ellipse_iou) -> FrocCurve:
    """Sensitivity at each FP budget: the best operating point with avg FP <= budget."""
    fp_grid = [float(f) for f in fp_grid]
    if not fp_grid or any(f <= 0 for f in fp_grid) or any(b <= a for a, b in zip(fp_grid, fp_grid[1:])):
        raise InvalidInputError("fp_grid must be positive and strictly ascending")
    points = froc_operating_points(dets, gts, iou_thresh, image_ids, iou)
    return FrocCurve(tuple((f, _readout(points, f)) for f in fp_grid))


def sensitivity_vs_iou(dets, gts, thresholds, fp_budget=4.0, image_ids=None,
                       iou=ellipse_iou) -> list[tuple[float, float]]:
    thresholds = [float(t) for t in thresholds]
    if any(not 0.0 < t <= 1.0 for t in thresholds) or any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise InvalidInputError("thresholds must be ascending in (0, 1]")
    out = []
    for t in thresholds:
        points = froc_operating_points(dets, gts, t, image_ids, iou)
        out.append((t, _readout(points, fp_budget)))
    return out


def angle_error(pred: Ellipse, gt: Ellipse) -> float:
    """Angle in degrees between the longer axes of two ellipses, in [0, 90]."""
    p, g = pred.canonical(), gt.canonical()
    if p.sigma_l / p.sigma_s - 1.0 <= CIRCLE_TOL or g.sigma_l / g.sigma_s - 1.0 <= CIRCLE_TOL:
        return 0.0
    d = abs(p.theta - g.theta) % math.pi
    return math.degrees(min(d, math.pi - d))
