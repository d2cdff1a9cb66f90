"""Ellipses, 2D Gaussians and the conversions between them.

An ellipse ``(mu_x, mu_y, sigma_l, sigma_s, theta)`` is the unit Mahalanobis
contour of the Gaussian with mean ``(mu_x, mu_y)`` and covariance
``R(theta).T @ diag(sigma_l**2, sigma_s**2) @ R(theta)``, where
``R(theta) = [[cos, sin], [-sin, cos]]`` maps image coordinates into the frame
whose x axis runs along the ``sigma_l`` semi-axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCovarianceError, DegenerateEllipseError, InvalidInputError

SIGMA_FLOOR = 1e-3
CIRCLE_TOL = 1e-6
HALF_PI = 0.5 * math.pi


def _require_finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise InvalidInputError(f"{name} must be finite, got {v!r}")


def normalize_angle(theta: float) -> float:
    """Map ``theta`` onto the half-open interval (-pi/2, pi/2] modulo pi."""
    _require_finite("theta", theta)
    r = theta - math.pi * math.ceil((theta - HALF_PI) / math.pi)
    # guard the float edges of the ceil-based reduction
    if r <= -HALF_PI:
        r += math.pi
    elif r > HALF_PI:
        r -= math.pi
    return r


def rotation_matrix(theta: float) -> np.ndarray:
    _require_finite("theta", theta)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class Ellipse:
    """Five-parameter bounding ellipse.

    ``sigma_l`` is the semi-axis along the rotated x axis and ``sigma_s`` the
    one along the rotated y axis. They are not required to be ordered; use
    :meth:`canonical` for the ``sigma_l >= sigma_s`` representation. ``theta``
    is normalized on construction.
    """

    mu_x: float
    mu_y: float
    sigma_l: float
    sigma_s: float
    theta: float = 0.0

    def __post_init__(self):
        for name in ("mu_x", "mu_y", "sigma_l", "sigma_s", "theta"):
            v = float(getattr(self, name))
            _require_finite(name, v)
            object.__setattr__(self, name, v)
        if self.sigma_l < SIGMA_FLOOR or self.sigma_s < SIGMA_FLOOR:
            raise DegenerateEllipseError(
                f"semi-axes ({self.sigma_l}, {self.sigma_s}) below floor {SIGMA_FLOOR}"
            )
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.mu_x, self.mu_y])

    @property
    def aspect_ratio(self) -> float:
        """Longer over shorter semi-axis, always >= 1."""
        return max(self.sigma_l, self.sigma_s) / min(self.sigma_l, self.sigma_s)

    def flipped(self) -> "Ellipse":
        """Same ellipse with the semi-axes swapped and the angle turned by 90 degrees."""
        return Ellipse(self.mu_x, self.mu_y, self.sigma_s, self.sigma_l, self.theta + HALF_PI)

    def canonical(self) -> "Ellipse":
        """Representation with ``sigma_l >= sigma_s``; circles get ``theta = 0``."""
        e = self if self.sigma_l >= self.sigma_s else self.flipped()
        if e.sigma_l / e.sigma_s - 1.0 <= CIRCLE_TOL:
            return Ellipse(e.mu_x, e.mu_y, e.sigma_l, e.sigma_s, 0.0)
        return e

    def translated(self, dx: float, dy: float) -> "Ellipse":
        return Ellipse(self.mu_x + dx, self.mu_y + dy, self.sigma_l, self.sigma_s, self.theta)

    def rotated(self, phi: float, about=(0.0, 0.0)) -> "Ellipse":
        """Rotate counter-clockwise by ``phi`` around the point ``about``."""
        c, s = math.cos(phi), math.sin(phi)
        x, y = self.mu_x - about[0], self.mu_y - about[1]
        return Ellipse(
            about[0] + c * x - s * y,
            about[1] + s * x + c * y,
            self.sigma_l,
            self.sigma_s,
            self.theta + phi,
        )

    def as_tuple(self):
        return (self.mu_x, self.mu_y, self.sigma_l, self.sigma_s, self.theta)


@dataclass(frozen=True)
class Gaussian2D:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(2)
        sigma = np.asarray(self.sigma, dtype=float).reshape(2, 2)
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise InvalidInputError("Gaussian2D entries must be finite")
        scale = max(abs(sigma[0, 1]), abs(sigma[1, 0]), 1e-300)
        if abs(sigma[0, 1] - sigma[1, 0]) > 1e-9 * scale:
            raise DegenerateCovarianceError("covariance is not symmetric")
        a, b, c = sigma[0, 0], sigma[0, 1], sigma[1, 1]
        if a <= 0 or c <= 0 or a * c - b * b <= 0:
            raise DegenerateCovarianceError("covariance is not positive definite")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def det(self) -> float:
        s = self.sigma
        return float(s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0])

    def precision(self) -> np.ndarray:
        s = self.sigma
        return np.array([[s[1, 1], -s[0, 1]], [-s[1, 0], s[0, 0]]]) / self.det


def ellipse_to_gaussian(e: Ellipse) -> Gaussian2D:
    if e.sigma_l <= 0 or e.sigma_s <= 0:
        raise DegenerateEllipseError("semi-axes must be positive")
    c, s = math.cos(e.theta), math.sin(e.theta)
    L, S = e.sigma_l**2, e.sigma_s**2
    # R.T @ diag(L, S) @ R written out
    sxx = L * c * c + S * s * s
    syy = L * s * s + S * c * c
    sxy = (L - S) * c * s
    return Gaussian2D((e.mu_x, e.mu_y), [[sxx, sxy], [sxy, syy]])


def gaussian_to_ellipse(g: Gaussian2D) -> Ellipse:
    """Canonical ellipse of a Gaussian via the closed-form 2x2 eigendecomposition."""
    a, b, c = (float(v) for v in (g.sigma[0, 0], g.sigma[0, 1], g.sigma[1, 1]))
    det = a * c - b * b
    if det <= 0:
        raise DegenerateCovarianceError("covariance is not positive definite")
    half_tr = 0.5 * (a + c)
    radius = math.hypot(0.5 * (a - c), b)
    lam_major = half_tr + radius
    lam_minor = det / lam_major  # avoids cancellation in half_tr - radius
    theta = 0.5 * math.atan2(2.0 * b, a - c)
    sl, ss = math.sqrt(lam_major), math.sqrt(lam_minor)
    if sl / ss - 1.0 <= CIRCLE_TOL:
        theta = 0.0
    return Ellipse(float(g.mu[0]), float(g.mu[1]), sl, ss, theta)


def gaussian_pdf(g: Gaussian2D, p) -> float:
    p = np.asarray(p, dtype=float).reshape(2)
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("point must be finite")
    det = g.det
    if det <= 0:
        raise DegenerateCovarianceError("singular covariance")
    d = p - g.mu
    m = float(d @ g.precision() @ d)
    return math.exp(-0.5 * m) / (2.0 * math.pi * math.sqrt(det))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by center and full width/height."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            v = float(getattr(self, name))
            _require_finite(name, v)
            object.__setattr__(self, name, v)
        if self.w <= 0 or self.h <= 0:
            raise InvalidInputError(f"box extent must be positive, got {self.w}x{self.h}")

    @property
    def x0(self):
        return self.cx - 0.5 * self.w

    @property
    def x1(self):
        return self.cx + 0.5 * self.w

    @property
    def y0(self):
        return self.cy - 0.5 * self.h

    @property
    def y1(self):
        return self.cy + 0.5 * self.h

    @property
    def area(self):
        return self.w * self.h


def ellipse_half_extents(e: Ellipse) -> tuple[float, float]:
    c, s = math.cos(e.theta), math.sin(e.theta)
    L, S = e.sigma_l**2, e.sigma_s**2
    return math.sqrt(L * c * c + S * s * s), math.sqrt(L * s * s + S * c * c)


def ellipse_bbox(e: Ellipse) -> Box:
    """Tight axis-aligned box around ``e``."""
    hw, hh = ellipse_half_extents(e)
    return Box(e.mu_x, e.mu_y, 2.0 * hw, 2.0 * hh)
