"""Ellipse IoU by rasterization and by Monte Carlo, and NMS over detections."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable

import numpy as np

from .anchor_codec import box_iou
from .errors import InvalidInputError
from .geometry import Ellipse, ellipse_bbox, ellipse_half_extents

DEFAULT_CELLS = 256


@dataclass(frozen=True)
class Detection:
    ellipse: Ellipse
    score: float
    image_id: Hashable = 0

    def __post_init__(self):
        s = float(self.score)
        if not 0.0 <= s <= 1.0:
            raise InvalidInputError(f"score must lie in [0, 1], got {s}")
        object.__setattr__(self, "score", s)


@dataclass(frozen=True)
class RasterGrid:
    """``width x height`` square cells of side ``cell`` starting at ``origin`` (lower-left)."""

    origin: tuple[float, float]
    cell: float
    width: int
    height: int

    def __post_init__(self):
        if self.cell <= 0:
            raise InvalidInputError("cell size must be positive")
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError("grid has no cells")

    def cell_centers(self):
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.cell
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.cell
        return xs, ys


def _bounds(e: Ellipse):
    hw, hh = ellipse_half_extents(e)
    return e.mu_x - hw, e.mu_x + hw, e.mu_y - hh, e.mu_y + hh


def rasterize_ellipse(e: Ellipse, grid: RasterGrid) -> np.ndarray:
    """Boolean mask of shape ``(height, width)``; a cell is inside when its center is."""
    xs, ys = grid.cell_centers()
    dx = xs[None, :] - e.mu_x
    dy = ys[:, None] - e.mu_y
    c, s = math.cos(e.theta), math.sin(e.theta)
    u = (c * dx + s * dy) / e.sigma_l
    v = (c * dy - s * dx) / e.sigma_s
    return u * u + v * v <= 1.0


def union_grid(e1: Ellipse, e2: Ellipse, cells_per_axis: int = DEFAULT_CELLS) -> RasterGrid:
    """Shared grid over the union bounding box; the longer side gets ``cells_per_axis`` cells."""
    b1, b2 = _bounds(e1), _bounds(e2)
    x0, x1 = min(b1[0], b2[0]), max(b1[1], b2[1])
    y0, y1 = min(b1[2], b2[2]), max(b1[3], b2[3])
    cell = max(x1 - x0, y1 - y0) / cells_per_axis
    w = max(1, math.ceil((x1 - x0) / cell - 1e-9))
    h = max(1, math.ceil((y1 - y0) / cell - 1e-9))
    return RasterGrid((x0, y0), cell, w, h)


def _boxes_disjoint(e1, e2):
    b1, b2 = _bounds(e1), _bounds(e2)
    return b1[1] <= b2[0] or b2[1] <= b1[0] or b1[3] <= b2[2] or b2[3] <= b1[2]


def ellipse_iou(e1: Ellipse, e2: Ellipse, cells_per_axis: int = DEFAULT_CELLS) -> float:
    if cells_per_axis < 64:
        raise InvalidInputError("cells_per_axis must be at least 64")
    if _boxes_disjoint(e1, e2):
        return 0.0
    grid = union_grid(e1, e2, cells_per_axis)
    m1 = rasterize_ellipse(e1, grid)
    m2 = rasterize_ellipse(e2, grid)
    union = np.count_nonzero(m1 | m2)
    if union == 0:
        return 0.0
    return np.count_nonzero(m1 & m2) / union


@dataclass(frozen=True)
class McIou:
    iou: float
    stderr: float
    n_union: int


def ellipse_iou_mc(e1: Ellipse, e2: Ellipse, n_samples: int = 100_000, seed: int = 0) -> McIou:
    """Monte Carlo IoU from uniform samples over the union bounding box.

    The estimate is the fraction of samples in the union that also fall in the
    intersection, so its standard error is the binomial one on that count.
    """
    if n_samples < 10_000:
        raise InvalidInputError("n_samples must be at least 1e4")
    b1, b2 = _bounds(e1), _bounds(e2)
    x0, x1 = min(b1[0], b2[0]), max(b1[1], b2[1])
    y0, y1 = min(b1[2], b2[2]), max(b1[3], b2[3])
    rng = np.random.default_rng(seed)
    px = rng.uniform(x0, x1, n_samples)
    py = rng.uniform(y0, y1, n_samples)
    in1 = _inside(e1, px, py)
    in2 = _inside(e2, px, py)
    n_or = int(np.count_nonzero(in1 | in2))
    if n_or == 0:
        return McIou(0.0, 0.0, 0)
    p = np.count_nonzero(in1 & in2) / n_or
    return McIou(float(p), math.sqrt(p * (1.0 - p) / n_or), n_or)


def _inside(e: Ellipse, px, py):
    c, s = math.cos(e.theta), math.sin(e.theta)
    dx, dy = px - e.mu_x, py - e.mu_y
    u = (c * dx + s * dy) / e.sigma_l
    v = (c * dy - s * dx) / e.sigma_s
    return u * u + v * v <= 1.0


def score_order(dets) -> list[int]:
    """Indices by descending score; equal scores keep input order."""
    return sorted(range(len(dets)), key=lambda i: -dets[i].score)


def nms(dets, iou_thresh: float = 0.5, use_ellipse_iou: bool = False,
        cells_per_axis: int = DEFAULT_CELLS) -> list[Detection]:
    """Greedy suppression on tight bounding boxes (or raster ellipse IoU).

    Detections on different images never suppress each other.
    """
    if not 0.0 < iou_thresh <= 1.0:
        raise InvalidInputError("iou_thresh must lie in (0, 1]")
    dets = list(dets)
    boxes = [ellipse_bbox(d.ellipse) for d in dets]
    keep: list[int] = []
    for i in score_order(dets):
        for k in keep:
            if dets[k].image_id != dets[i].image_id:
                continue
            if use_ellipse_iou:
                o = ellipse_iou(dets[k].ellipse, dets[i].ellipse, cells_per_axis)
            else:
                o = box_iou(boxes[k], boxes[i])
            if o > iou_thresh:
                break
        else:
            keep.append(i)
    return [dets[i] for i in keep]


def write_pgm(path, mask: np.ndarray):
    """Dump a boolean mask as a binary greyscale PGM, top row = largest y."""
    img = np.where(mask[::-1], 255, 0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())
