"""Anchor grids, anchor-relative ellipse encoding and anchor assignment."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import InvalidInputError
from .geometry import Box, Ellipse, ellipse_bbox

TAN_CLAMP = math.tan(math.radians(89.5))


@dataclass(frozen=True)
class Anchor:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InvalidInputError(f"anchor {name} must be finite")
            object.__setattr__(self, name, v)
        if self.w <= 0 or self.h <= 0:
            raise InvalidInputError(f"degenerate anchor {self.w}x{self.h}")

    def box(self) -> Box:
        return Box(self.cx, self.cy, self.w, self.h)

    def inscribed_ellipse(self) -> Ellipse:
        """Axis-aligned ellipse touching all four sides; a circle for square anchors."""
        return Ellipse(self.cx, self.cy, 0.5 * self.w, 0.5 * self.h, 0.0)


@dataclass(frozen=True)
class EncodedEllipse:
    tx: float
    ty: float
    tw: float
    th: float
    t_tan: float

    def __post_init__(self):
        for name in ("tx", "ty", "tw", "th", "t_tan"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InvalidInputError(f"encoded {name} must be finite")
            object.__setattr__(self, name, v)

    def as_tuple(self):
        return (self.tx, self.ty, self.tw, self.th, self.t_tan)


def generate_anchor_grid(image_w, image_h, stride, scales, ratios=(1.0,)) -> list[Anchor]:
    """One anchor per (cell, scale, ratio); rows outermost, ratios innermost."""
    if stride <= 0:
        raise InvalidInputError("stride must be positive")
    scales, ratios = list(scales), list(ratios)
    if not scales or not ratios:
        raise InvalidInputError("scales and ratios must be non-empty")
    if any(s <= 0 for s in scales) or any(r <= 0 for r in ratios):
        raise InvalidInputError("scales and ratios must be positive")
    nx, ny = int(image_w // stride), int(image_h // stride)
    if nx == 0 or ny == 0:
        raise InvalidInputError(f"stride {stride} leaves an empty grid on {image_w}x{image_h}")
    shapes = [(s * math.sqrt(r), s / math.sqrt(r)) for s in scales for r in ratios]
    half = 0.5 * stride
    return [
        Anchor(i * stride + half, j * stride + half, w, h)
        for j in range(ny)
        for i in range(nx)
        for w, h in shapes
    ]


DEFAULT_IMAGE_SIZE = 512
DEFAULT_STRIDE = 8
DEFAULT_SCALES = (16, 24, 32, 48, 96)


def default_anchor_grid() -> list[Anchor]:
    """512x512 input, stride 8, five square scales: 20480 anchors."""
    return generate_anchor_grid(DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE, DEFAULT_STRIDE, DEFAULT_SCALES, (1.0,))


def encode(gt: Ellipse, anchor: Anchor) -> EncodedEllipse:
    t = max(-TAN_CLAMP, min(TAN_CLAMP, math.tan(gt.theta)))
    return EncodedEllipse(
        (gt.mu_x - anchor.cx) / anchor.w,
        (gt.mu_y - anchor.cy) / anchor.h,
        math.log(2.0 * gt.sigma_l / anchor.w),
        math.log(2.0 * gt.sigma_s / anchor.h),
        t,
    )


def decode(enc: EncodedEllipse, anchor: Anchor) -> Ellipse:
    return Ellipse(
        anchor.cx + enc.tx * anchor.w,
        anchor.cy + enc.ty * anchor.h,
        0.5 * anchor.w * math.exp(enc.tw),
        0.5 * anchor.h * math.exp(enc.th),
        math.atan(enc.t_tan),
    )


def box_iou(a: Box, b: Box) -> float:
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _corners(boxes):
    arr = np.array([(b.cx, b.cy, b.w, b.h) for b in boxes], dtype=float).reshape(-1, 4)
    return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]


def box_iou_matrix(a_boxes, b_boxes) -> np.ndarray:
    """IoU for every pair; entry ``[i, j]`` equals ``box_iou(a_boxes[i], b_boxes[j])``."""
    acx, acy, aw, ah = _corners(a_boxes)
    bcx, bcy, bw, bh = _corners(b_boxes)
    ax0, ax1 = acx - 0.5 * aw, acx + 0.5 * aw
    ay0, ay1 = acy - 0.5 * ah, acy + 0.5 * ah
    bx0, bx1 = bcx - 0.5 * bw, bcx + 0.5 * bw
    by0, by1 = bcy - 0.5 * bh, bcy + 0.5 * bh
    iw = np.minimum(ax1[:, None], bx1[None, :]) - np.maximum(ax0[:, None], bx0[None, :])
    ih = np.minimum(ay1[:, None], by1[None, :]) - np.maximum(ay0[:, None], by0[None, :])
    inter = iw * ih
    union = (aw * ah)[:, None] + (bw * bh)[None, :] - inter
    overlap = (iw > 0) & (ih > 0)
    return np.where(overlap, inter / np.where(overlap, union, 1.0), 0.0)


class Label(IntEnum):
    NEGATIVE = 0
    POSITIVE = 1
    IGNORE = -1


@dataclass(frozen=True)
class AnchorAssignment:
    labels: np.ndarray  # Label per anchor
    matched_gt: np.ndarray  # gt index for positives, -1 elsewhere
    max_iou: np.ndarray

    @property
    def positives(self) -> np.ndarray:
        return np.flatnonzero(self.labels == Label.POSITIVE)


def assign_anchors(anchors, gts, hi=0.7, lo=0.3) -> AnchorAssignment:
    """Label anchors against ground-truth ellipses using their bounding boxes.

    An anchor is positive when its best box IoU reaches ``hi`` or when it is
    the best anchor of some ground truth (lowest index on ties, and only when
    that best IoU is non-zero). Remaining anchors below ``lo`` are negative,
    the rest ignored. Positives record their argmax ground truth.
    """
    anchors = list(anchors)
    if not anchors:
        raise InvalidInputError("anchor list is empty")
    if not 0.0 <= lo <= hi <= 1.0:
        raise InvalidInputError(f"need 0 <= lo <= hi <= 1, got lo={lo}, hi={hi}")
    n = len(anchors)
    labels = np.full(n, Label.IGNORE, dtype=np.int8)
    matched = np.full(n, -1, dtype=np.int64)
    if not gts:
        labels[:] = Label.NEGATIVE
        return AnchorAssignment(labels, matched, np.zeros(n))

    iou = box_iou_matrix([a.box() for a in anchors], [ellipse_bbox(g) for g in gts])
    best_gt = np.argmax(iou, axis=1)
    max_iou = iou[np.arange(n), best_gt]
    labels[max_iou < lo] = Label.NEGATIVE
    positive = max_iou >= hi
    best_anchor = np.argmax(iou, axis=0)  # first index wins ties
    for j, a in enumerate(best_anchor):
        if iou[a, j] > 0:
            positive[a] = True
    labels[positive] = Label.POSITIVE
    matched[positive] = best_gt[positive]
    return AnchorAssignment(labels, matched, max_iou)
