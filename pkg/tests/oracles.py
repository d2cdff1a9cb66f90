"""Independent reference implementations used by the unit and acceptance tests."""
import functools
import math

import numpy as np

from gpnloc.geometry import Ellipse, ellipse_to_gaussian
from gpnloc.kl_loss import kl_divergence
from gpnloc.raster_metrics import ellipse_iou

cached_iou = functools.lru_cache(maxsize=None)(ellipse_iou)


def kl_matrix_oracle(t, p):
    """Textbook KL via explicit matrix inversion."""
    gt, gp = ellipse_to_gaussian(t), ellipse_to_gaussian(p)
    inv = np.linalg.inv(gp.sigma)
    d = gp.mu - gt.mu
    return 0.5 * (np.trace(inv @ gt.sigma) + d @ inv @ d
                  + math.log(np.linalg.det(gp.sigma) / np.linalg.det(gt.sigma)) - 2)


def kl_monte_carlo(t, p, n, seed):
    """Sample mean of ln f_t - ln f_p under the target; returns (estimate, standard error)."""
    gt, gp = ellipse_to_gaussian(t), ellipse_to_gaussian(p)
    rng = np.random.default_rng(seed)
    x = rng.multivariate_normal(gt.mu, gt.sigma, size=n)

    def logpdf(g, x):
        d = x - g.mu
        m = np.einsum("ni,ij,nj->n", d, np.linalg.inv(g.sigma), d)
        return -0.5 * m - math.log(2 * math.pi) - 0.5 * math.log(np.linalg.det(g.sigma))

    r = logpdf(gt, x) - logpdf(gp, x)
    return r.mean(), r.std(ddof=1) / math.sqrt(n)


def central_difference(t, p, step=1e-5):
    out = []
    base = list(p.as_tuple())
    for k in range(5):
        hi, lo = list(base), list(base)
        hi[k] += step
        lo[k] -= step
        out.append((kl_divergence(t, Ellipse(*hi)) - kl_divergence(t, Ellipse(*lo))) / (2 * step))
    return out


def assert_grad_close(analytic, numeric):
    for a, n in zip(analytic, numeric):
        assert abs(a - n) <= max(1e-5, 1e-4 * abs(n))


def brute_force_froc(dets, gts, iou_thresh, fp_grid, n_images):
    """Re-match from scratch at every distinct score threshold and read off the best point."""
    points = [(0.0, 0.0)]
    for s in sorted({d.score for d in dets}, reverse=True):
        kept = [d for d in dets if d.score >= s]
        kept.sort(key=lambda d: (-d.score, str(d.image_id), d.ellipse.as_tuple()))
        used = set()
        tp = 0
        for d in kept:
            cands = [(cached_iou(d.ellipse, g.ellipse), -j) for j, g in enumerate(gts)
                     if g.image_id == d.image_id and j not in used]
            if cands:
                o, neg_j = max(cands)
                if o >= iou_thresh:
                    used.add(-neg_j)
                    tp += 1
        points.append(((len(kept) - tp) / n_images, tp / len(gts)))
    return [max(s for f, s in points if f <= budget) for budget in fp_grid]


def overlapping_pairs(seed, n):
    """Random pairs of comparable size whose centers are close enough to overlap."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        s1 = rng.uniform(4, 30)
        a = Ellipse(0, 0, s1, s1 / rng.uniform(1, 3), rng.uniform(-1.5, 1.5))
        s2 = s1 * rng.uniform(0.5, 2)
        off = rng.uniform(0, s1) * np.array([math.cos(k := rng.uniform(0, 6.3)), math.sin(k)])
        b = Ellipse(off[0], off[1], s2, s2 / rng.uniform(1, 3), rng.uniform(-1.5, 1.5))
        out.append((a, b))
    return out
