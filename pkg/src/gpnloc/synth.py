"""Seeded synthetic lesion scenes and a simulated detector.

Every image draws from its own generator seeded by ``(seed, image_index)`` so
that generating images in any order, or in parallel, gives the same output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detection_eval import GroundTruth
from .errors import InvalidInputError
from .geometry import SIGMA_FLOOR, Ellipse, ellipse_half_extents
from .raster_metrics import Detection

_ASPECT_KINDS = ("loguniform", "uniform", "fixed")
_ANGLE_KINDS = ("uniform", "normal", "fixed")


@dataclass(frozen=True)
class SceneConfig:
    image_w: float = 512.0
    image_h: float = 512.0
    lesions_per_image: tuple[int, int] = (1, 3)  # inclusive
    scale_range: tuple[float, float] = (8.0, 64.0)  # semi-major, drawn log-uniform
    aspect_ratio_distribution: tuple = ("loguniform", (1.0, 3.0))
    angle_distribution: tuple = ("uniform", (-0.5 * math.pi, 0.5 * math.pi))
    seed: int = 0

    def validate(self):
        lo, hi = self.lesions_per_image
        if lo < 0 or hi < lo:
            raise InvalidInputError(f"bad lesions_per_image {self.lesions_per_image}")
        smin, smax = self.scale_range
        if not SIGMA_FLOOR <= smin <= smax:
            raise InvalidInputError(f"bad scale_range {self.scale_range}")
        if 2.0 * smax > min(self.image_w, self.image_h):
            raise InvalidInputError("largest lesion does not fit inside the image")
        kind, params = self.aspect_ratio_distribution
        if kind not in _ASPECT_KINDS:
            raise InvalidInputError(f"unknown aspect-ratio distribution {kind!r}")
        if min(np.atleast_1d(params)) < 1.0:
            raise InvalidInputError("aspect ratios must be >= 1")
        if smin / max(np.atleast_1d(params)) < SIGMA_FLOOR:
            raise InvalidInputError("minor axis would fall below the geometry floor")
        if self.angle_distribution[0] not in _ANGLE_KINDS:
            raise InvalidInputError(f"unknown angle distribution {self.angle_distribution[0]!r}")


@dataclass(frozen=True)
class CorruptionConfig:
    center_noise_sigma: float = 0.0  # fraction of the semi-major axis
    axis_noise_sigma: float = 0.0  # log-scale
    angle_noise_sigma: float = 0.0  # degrees
    miss_rate: float = 0.0
    fp_rate: float = 0.0  # expected false positives per image
    score_separation: float = 4.0  # logit gap between TP and FP scores
    seed: int = 0
    image_w: float = 512.0
    image_h: float = 512.0
    fp_scale_range: tuple[float, float] = (8.0, 64.0)

    def validate(self):
        if not 0.0 <= self.miss_rate <= 1.0:
            raise InvalidInputError("miss_rate must lie in [0, 1]")
        for name in ("center_noise_sigma", "axis_noise_sigma", "angle_noise_sigma", "fp_rate",
                     "score_separation"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be non-negative")


def image_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def _draw_aspect(rng, dist):
    kind, params = dist
    if kind == "fixed":
        return float(np.atleast_1d(params)[0])
    lo, hi = params
    if kind == "uniform":
        return rng.uniform(lo, hi)
    return math.exp(rng.uniform(math.log(lo), math.log(hi)))


def _draw_angle(rng, dist):
    kind, params = dist
    if kind == "fixed":
        return float(np.atleast_1d(params)[0])
    a, b = params
    if kind == "normal":
        return rng.normal(a, b)
    return rng.uniform(a, b)


def random_ellipse(rng, image_w, image_h, scale_range, aspect_dist, angle_dist) -> Ellipse:
    """One ellipse whose tight box lies inside ``[0, image_w] x [0, image_h]``."""
    smin, smax = scale_range
    major = math.exp(rng.uniform(math.log(smin), math.log(smax)))
    minor = major / _draw_aspect(rng, aspect_dist)
    theta = _draw_angle(rng, angle_dist)
    shape = Ellipse(0.0, 0.0, major, minor, theta)
    hw, hh = ellipse_half_extents(shape)
    cx = rng.uniform(hw, image_w - hw)
    cy = rng.uniform(hh, image_h - hh)
    return Ellipse(cx, cy, major, minor, theta)


def generate_image(cfg: SceneConfig, index: int) -> list[GroundTruth]:
    rng = image_rng(cfg.seed, index)
    lo, hi = cfg.lesions_per_image
    n = int(rng.integers(lo, hi + 1))
    return [
        GroundTruth(
            random_ellipse(rng, cfg.image_w, cfg.image_h, cfg.scale_range,
                           cfg.aspect_ratio_distribution, cfg.angle_distribution),
            index,
        )
        for _ in range(n)
    ]


def generate_scenes(cfg: SceneConfig, n_images: int) -> list[GroundTruth]:
    cfg.validate()
    if n_images < 0:
        raise InvalidInputError("n_images must be non-negative")
    out = []
    for k in range(n_images):
        out.extend(generate_image(cfg, k))
    return out


def sample_targets(cfg: SceneConfig, n: int) -> list[Ellipse]:
    """First ``n`` lesions of the seeded scene stream, in image order."""
    cfg.validate()
    if n <= 0:
        raise InvalidInputError("n must be positive")
    out: list[Ellipse] = []
    k = 0
    while len(out) < n:
        out.extend(g.ellipse for g in generate_image(cfg, k))
        k += 1
        if k > 100 * n + 1000 and not out:
            raise InvalidInputError("scene config produces no lesions")
    return out[:n]


def _sigmoid(z):
    return float(1.0 / (1.0 + np.exp(-z)))


def corrupt(gts, cfg: CorruptionConfig, image_ids=None) -> list[Detection]:
    """Turn ground truth into simulated detections.

    Images are processed in ``image_ids`` order (default: first appearance in
    ``gts``); pass ``image_ids`` to also place false positives on images
    without lesions.
    """
    cfg.validate()
    gts = list(gts)
    if image_ids is None:
        image_ids = list(dict.fromkeys(g.image_id for g in gts))
    by_image = {i: [] for i in image_ids}
    for g in gts:
        by_image.setdefault(g.image_id, []).append(g)
    half_gap = 0.5 * cfg.score_separation
    dets = []
    with np.errstate(over="ignore"):
        for k, img in enumerate(by_image):
            rng = image_rng(cfg.seed, k)
            for g in by_image[img]:
                e = g.ellipse
                # draw everything up front so the stream layout does not depend on the config
                keep_u = rng.uniform()
                z = rng.normal(size=5)
                score_z = rng.normal()
                if keep_u < cfg.miss_rate:
                    continue
                major = max(e.sigma_l, e.sigma_s)
                noisy = Ellipse(
                    e.mu_x + cfg.center_noise_sigma * major * z[0],
                    e.mu_y + cfg.center_noise_sigma * major * z[1],
                    e.sigma_l * math.exp(cfg.axis_noise_sigma * z[2]),
                    e.sigma_s * math.exp(cfg.axis_noise_sigma * z[3]),
                    e.theta + math.radians(cfg.angle_noise_sigma * z[4]),
                )
                dets.append(Detection(noisy, _sigmoid(half_gap + score_z), img))
            for _ in range(int(rng.poisson(cfg.fp_rate))):
                e = random_ellipse(rng, cfg.image_w, cfg.image_h, cfg.fp_scale_range,
                                   ("loguniform", (1.0, 3.0)),
                                   ("uniform", (-0.5 * math.pi, 0.5 * math.pi)))
                dets.append(Detection(e, _sigmoid(-half_gap + rng.normal()), img))
    return dets
