"""KL divergence localization loss and the smoothed-L1 regression baseline.

``kl_divergence(target, proposal)`` is ``KL(N_target || N_proposal)``, evaluated
term by term in the ellipse parameters instead of through matrix inversion:

* trace term       ``cos^2(dt) (Lt/Lp + St/Sp) + sin^2(dt) (Lt/Sp + St/Lp)``
* Mahalanobis term ``u^2/Lp + v^2/Sp`` with ``u, v`` the center offset in the
  proposal frame
* log-det term     ``ln(Lp/Lt) + ln(Sp/St)``

where ``L = sigma_l**2``, ``S = sigma_s**2`` and ``dt = theta_p - theta_t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateEllipseError, InvalidInputError
from .geometry import Ellipse


@dataclass(frozen=True)
class ParamGradient:
    d_mu_x: float
    d_mu_y: float
    d_sigma_l: float
    d_sigma_s: float
    d_theta: float

    def as_tuple(self):
        return (self.d_mu_x, self.d_mu_y, self.d_sigma_l, self.d_sigma_s, self.d_theta)


def _check(e: Ellipse):
    if e.sigma_l <= 0 or e.sigma_s <= 0:
        raise DegenerateEllipseError("semi-axes must be positive")


def trace_term(target: Ellipse, proposal: Ellipse) -> float:
    """``tr(inv(Sigma_p) @ Sigma_t)``."""
    dt = proposal.theta - target.theta
    c2, s2 = math.cos(dt) ** 2, math.sin(dt) ** 2
    Lt, St = target.sigma_l**2, target.sigma_s**2
    Lp, Sp = proposal.sigma_l**2, proposal.sigma_s**2
    return c2 * (Lt / Lp + St / Sp) + s2 * (Lt / Sp + St / Lp)


def _proposal_frame_offset(target: Ellipse, proposal: Ellipse):
    dx = proposal.mu_x - target.mu_x
    dy = proposal.mu_y - target.mu_y
    c, s = math.cos(proposal.theta), math.sin(proposal.theta)
    return c * dx + s * dy, c * dy - s * dx


def mahalanobis_term(target: Ellipse, proposal: Ellipse) -> float:
    """``(mu_p - mu_t).T @ inv(Sigma_p) @ (mu_p - mu_t)``."""
    u, v = _proposal_frame_offset(target, proposal)
    return u * u / proposal.sigma_l**2 + v * v / proposal.sigma_s**2


def log_det_term(target: Ellipse, proposal: Ellipse) -> float:
    """``ln(|Sigma_p| / |Sigma_t|)``."""
    return 2.0 * (
        math.log(proposal.sigma_l / target.sigma_l) + math.log(proposal.sigma_s / target.sigma_s)
    )


def kl_divergence(target: Ellipse, proposal: Ellipse) -> float:
    _check(target)
    _check(proposal)
    return 0.5 * (
        trace_term(target, proposal)
        + mahalanobis_term(target, proposal)
        + log_det_term(target, proposal)
        - 2.0
    )


def kl_divergence_axis_aligned(target: Ellipse, proposal: Ellipse) -> float:
    """KL for ``theta = 0`` on both sides, in half-width/half-height form."""
    if target.theta != 0.0 or proposal.theta != 0.0:
        raise InvalidInputError("axis-aligned KL needs theta == 0 on both ellipses")
    _check(target)
    _check(proposal)
    wt, ht = target.sigma_l, target.sigma_s
    wp, hp = proposal.sigma_l, proposal.sigma_s
    dx = proposal.mu_x - target.mu_x
    dy = proposal.mu_y - target.mu_y
    return 0.5 * (
        wt**2 / wp**2
        + ht**2 / hp**2
        + dx**2 / wp**2
        + dy**2 / hp**2
        + math.log(wp**2 / wt**2)
        + math.log(hp**2 / ht**2)
        - 2.0
    )


def kl_gradient(target: Ellipse, proposal: Ellipse) -> ParamGradient:
    """Analytic gradient of :func:`kl_divergence` w.r.t. the proposal parameters."""
    _check(target)
    _check(proposal)
    dt = proposal.theta - target.theta
    c2, s2 = math.cos(dt) ** 2, math.sin(dt) ** 2
    sin2 = math.sin(2.0 * dt)
    Lt, St = target.sigma_l**2, target.sigma_s**2
    sl, ss = proposal.sigma_l, proposal.sigma_s
    Lp, Sp = sl * sl, ss * ss
    c, s = math.cos(proposal.theta), math.sin(proposal.theta)
    u, v = _proposal_frame_offset(target, proposal)

    d_mu_x = u * c / Lp - v * s / Sp
    d_mu_y = u * s / Lp + v * c / Sp
    d_sigma_l = 1.0 / sl - (c2 * Lt + s2 * St + u * u) / (sl * Lp)
    d_sigma_s = 1.0 / ss - (c2 * St + s2 * Lt + v * v) / (ss * Sp)
    d_theta = 0.5 * sin2 * ((Lt - St) / Sp - (Lt - St) / Lp) + u * v * (1.0 / Lp - 1.0 / Sp)
    return ParamGradient(d_mu_x, d_mu_y, d_sigma_l, d_sigma_s, d_theta)


def kl_gradient_axis_aligned(target: Ellipse, proposal: Ellipse) -> ParamGradient:
    """Gradient of the axis-aligned form with the angle held at zero.

    ``d_theta`` is reported as 0 because the angle is not a free parameter
    here. The general gradient's angle component at ``theta = 0`` is
    ``dx * dy * (1/wp**2 - 1/hp**2)``, which vanishes only for offsets along
    one axis or circular proposals.
    """
    if target.theta != 0.0 or proposal.theta != 0.0:
        raise InvalidInputError("axis-aligned KL needs theta == 0 on both ellipses")
    wt, ht = target.sigma_l, target.sigma_s
    wp, hp = proposal.sigma_l, proposal.sigma_s
    dx = proposal.mu_x - target.mu_x
    dy = proposal.mu_y - target.mu_y
    return ParamGradient(
        dx / wp**2,
        dy / hp**2,
        1.0 / wp - (wt**2 + dx**2) / wp**3,
        1.0 / hp - (ht**2 + dy**2) / hp**3,
        0.0,
    )


def smoothed_l1(pred: float, tgt: float, beta: float = 1.0) -> float:
    d = pred - tgt
    if not math.isfinite(d):
        raise InvalidInputError("smoothed L1 inputs must be finite")
    ad = abs(d)
    if ad < beta:
        return 0.5 * d * d / beta
    return ad - 0.5 * beta


def smoothed_l1_grad(pred: float, tgt: float, beta: float = 1.0) -> float:
    """Derivative of :func:`smoothed_l1` with respect to ``pred``."""
    d = pred - tgt
    if abs(d) < beta:
        return d / beta
    return math.copysign(1.0, d)


def rpn_regression_loss(pred, tgt) -> float:
    """Sum of smoothed L1 over the five encoded components (tx, ty, tw, th, t_tan).

    Accepts :class:`~gpnloc.anchor_codec.EncodedEllipse` values or any
    five-element sequences.
    """
    p, t = _as_five(pred), _as_five(tgt)
    return sum(smoothed_l1(a, b) for a, b in zip(p, t))


def _as_five(x):
    vals = tuple(x.as_tuple()) if hasattr(x, "as_tuple") else tuple(x)
    if len(vals) != 5:
        raise InvalidInputError(f"expected five encoded components, got {len(vals)}")
    return vals
