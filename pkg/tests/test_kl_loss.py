import math

import numpy as np
import pytest
from hypothesis import given, settings

from gpnloc.errors import InvalidInputError
from gpnloc.geometry import Ellipse, ellipse_to_gaussian
from gpnloc.kl_loss import (
    kl_divergence,
    kl_divergence_axis_aligned,
    kl_gradient,
    kl_gradient_axis_aligned,
    log_det_term,
    mahalanobis_term,
    rpn_regression_loss,
    smoothed_l1,
    trace_term,
)

from conftest import ellipses, random_ellipse, random_pairs
from oracles import assert_grad_close, central_difference, kl_matrix_oracle, kl_monte_carlo


def test_terms_match_matrix_forms():
    for t, p in random_pairs(3, 200):
        gt, gp = ellipse_to_gaussian(t), ellipse_to_gaussian(p)
        inv = np.linalg.inv(gp.sigma)
        d = gp.mu - gt.mu
        assert trace_term(t, p) == pytest.approx(np.trace(inv @ gt.sigma), rel=1e-9)
        assert mahalanobis_term(t, p) == pytest.approx(d @ inv @ d, rel=1e-9, abs=1e-12)
        assert log_det_term(t, p) == pytest.approx(
            math.log(np.linalg.det(gp.sigma) / np.linalg.det(gt.sigma)), rel=1e-9, abs=1e-9)


def test_kl_matches_matrix_oracle():
    for t, p in random_pairs(4, 500):
        assert kl_divergence(t, p) == pytest.approx(kl_matrix_oracle(t, p), rel=1e-8, abs=1e-10)


@pytest.mark.parametrize(
    "target, proposal, expected",
    [
        ((0, 0, 2, 1, 0), (1, 0, 2, 1, 0), 0.125),
        ((0, 0, 2, 1, 0), (0, 0, 2, 1, math.pi / 2), 1.125),
    ],
)
def test_kl_examples(target, proposal, expected):
    t, p = Ellipse(*target), Ellipse(*proposal)
    assert kl_divergence(t, p) == pytest.approx(expected, abs=1e-12)
    est, se = kl_monte_carlo(t, p, 1_000_000, seed=0)
    assert abs(est - expected) < 5e-3


@given(ellipses)
def test_kl_of_self_is_zero(e):
    assert abs(kl_divergence(e, e)) < 1e-12


def test_kl_non_negative_on_random_pairs():
    rng = np.random.default_rng(5)
    vals = [kl_divergence(random_ellipse(rng), random_ellipse(rng)) for _ in range(10_000)]
    assert min(vals) >= -1e-12


def test_identity_of_indiscernibles():
    rng = np.random.default_rng(6)
    for _ in range(500):
        t = random_ellipse(rng)
        for p in (t.flipped(), Ellipse(t.mu_x, t.mu_y, t.sigma_l, t.sigma_s, t.theta + math.pi)):
            assert kl_divergence(t, p) < 1e-10
        p = random_ellipse(rng)
        same = np.allclose(ellipse_to_gaussian(t).sigma, ellipse_to_gaussian(p).sigma, atol=1e-8) and \
            np.allclose(ellipse_to_gaussian(t).mu, ellipse_to_gaussian(p).mu, atol=1e-8)
        assert (kl_divergence(t, p) < 1e-10) == same


def test_flip_invariance():
    for t, p in random_pairs(7, 1000):
        ref = kl_divergence(t, p)
        assert kl_divergence(t.flipped(), p) == pytest.approx(ref, abs=1e-9, rel=1e-12)
        assert kl_divergence(t, p.flipped()) == pytest.approx(ref, abs=1e-9, rel=1e-12)


def test_rigid_motion_invariance():
    rng = np.random.default_rng(8)
    for t, p in random_pairs(8, 1000):
        dx, dy, phi = rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-math.pi, math.pi)
        t2 = t.rotated(phi).translated(dx, dy)
        p2 = p.rotated(phi).translated(dx, dy)
        ref = kl_divergence(t, p)
        assert kl_divergence(t2, p2) == pytest.approx(ref, abs=1e-9, rel=1e-9)


def _axis_aligned(rng):
    return Ellipse(rng.uniform(-20, 20), rng.uniform(-20, 20),
                   float(np.exp(rng.uniform(-1, 3))), float(np.exp(rng.uniform(-1, 3))), 0.0)


def test_axis_aligned_equivalence():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        t, p = _axis_aligned(rng), _axis_aligned(rng)
        assert abs(kl_divergence(t, p) - kl_divergence_axis_aligned(t, p)) < 1e-10


@pytest.mark.parametrize(
    "target, proposal, expected",
    [
        ((0, 0, 2, 1, 0), (0, 0, 2, 1, 0), 0.0),
        ((0, 0, 2, 1, 0), (1, 0, 2, 1, 0), 0.125),
        ((0, 0, 1, 1, 0), (0, 0, 2, 2, 0), 0.5 * (0.5 + 2 * math.log(4) - 2)),
    ],
)
def test_axis_aligned_examples(target, proposal, expected):
    t, p = Ellipse(*target), Ellipse(*proposal)
    assert kl_divergence_axis_aligned(t, p) == pytest.approx(expected, abs=1e-12)


def test_axis_aligned_monte_carlo_cross_check():
    t, p = Ellipse(0, 0, 1, 1, 0), Ellipse(0, 0, 2, 2, 0)
    est, se = kl_monte_carlo(t, p, 1_000_000, seed=1)
    assert kl_divergence_axis_aligned(t, p) == pytest.approx(0.6363, abs=1e-4)
    assert abs(est - kl_divergence_axis_aligned(t, p)) < 4 * se + 1e-3


def test_axis_aligned_rejects_rotation():
    with pytest.raises(InvalidInputError):
        kl_divergence_axis_aligned(Ellipse(0, 0, 2, 1, 0.1), Ellipse(0, 0, 2, 1, 0))


def test_asymmetry_witness():
    t, p = Ellipse(0, 0, 1, 1, 0), Ellipse(0, 0, 2, 2, 0)
    assert kl_divergence(t, p) != pytest.approx(kl_divergence(p, t), abs=1e-3)


def test_circles_ignore_angle():
    rng = np.random.default_rng(10)
    for _ in range(200):
        r1, r2 = rng.uniform(0.5, 10, size=2)
        t = Ellipse(0, 0, r1, r1, rng.uniform(-1.5, 1.5))
        p = Ellipse(0, 0, r1, r1, rng.uniform(-1.5, 1.5))
        assert abs(kl_divergence(t, p)) < 1e-10
        # between different circles the angle has no effect either
        q1 = Ellipse(1, 2, r2, r2, 0.0)
        q2 = Ellipse(1, 2, r2, r2, rng.uniform(-1.5, 1.5))
        assert kl_divergence(t, q1) == pytest.approx(kl_divergence(t, q2), abs=1e-10)


def test_gradient_zero_at_target():
    for t, _ in random_pairs(11, 200):
        assert max(abs(v) for v in kl_gradient(t, t).as_tuple()) < 1e-9


def test_gradient_example():
    g = kl_gradient(Ellipse(0, 0, 2, 1, 0), Ellipse(1, 0, 2, 1, 0))
    assert g.d_mu_x == pytest.approx(0.25, abs=1e-15)
    assert_grad_close(g.as_tuple(), central_difference(Ellipse(0, 0, 2, 1, 0), Ellipse(1, 0, 2, 1, 0)))


def test_gradient_matches_finite_differences():
    for t, p in random_pairs(12, 1000, sigma_range=(1.0, 20.0)):
        assert_grad_close(kl_gradient(t, p).as_tuple(), central_difference(t, p))


def test_axis_aligned_gradient_matches_general_one():
    rng = np.random.default_rng(13)
    for _ in range(200):
        t, p = _axis_aligned(rng), _axis_aligned(rng)
        np.testing.assert_allclose(kl_gradient_axis_aligned(t, p).as_tuple()[:4],
                                   kl_gradient(t, p).as_tuple()[:4], rtol=1e-12, atol=1e-14)


def test_theta_gradient_at_zero_angle():
    # at theta = 0 the angle derivative is dx * dy * (1/Lp - 1/Sp)
    t = Ellipse(0, 0, 3, 2, 0)
    assert kl_gradient(t, Ellipse(1.5, 0, 4, 1, 0)).d_theta == 0.0
    assert kl_gradient(t, Ellipse(0, -2, 4, 1, 0)).d_theta == 0.0
    assert kl_gradient(t, Ellipse(1, 1, 2, 2, 0)).d_theta == 0.0
    g = kl_gradient(t, Ellipse(1, 2, 4, 1, 0))
    assert g.d_theta == pytest.approx(1 * 2 * (1 / 16 - 1), rel=1e-12)


@pytest.mark.parametrize("pred, tgt, expected", [(0.3, 0.3, 0.0), (0.5, 0.0, 0.125), (3.0, 0.0, 2.5), (-3.0, 0.0, 2.5)])
def test_smoothed_l1(pred, tgt, expected):
    assert smoothed_l1(pred, tgt) == pytest.approx(expected)


def test_rpn_regression_loss_examples():
    t = (0.1, -0.2, 0.3, 0.0, 1.0)
    assert rpn_regression_loss(t, t) == 0.0
    assert rpn_regression_loss((0.6, -0.2, 0.3, 0.0, 1.0), t) == pytest.approx(0.125)
    assert rpn_regression_loss((0.1, -0.2, 0.3, 0.0, 4.0), t) == pytest.approx(2.5)


def test_rpn_regression_loss_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        rpn_regression_loss((math.nan, 0, 0, 0, 0), (0, 0, 0, 0, 0))


@settings(max_examples=50, deadline=None)
@given(ellipses, ellipses)
def test_kl_matrix_oracle_property(t, p):
    ref = kl_matrix_oracle(t, p)
    assert kl_divergence(t, p) == pytest.approx(ref, rel=1e-6, abs=1e-8)
