import math
import sys

import numpy as np
import pytest
from hypothesis import strategies as st

from gpnloc.geometry import Ellipse


def random_ellipse(rng, center_scale=20.0, sigma_range=(0.5, 20.0)):
    lo, hi = np.log(sigma_range)
    return Ellipse(
        rng.uniform(-center_scale, center_scale),
        rng.uniform(-center_scale, center_scale),
        float(np.exp(rng.uniform(lo, hi))),
        float(np.exp(rng.uniform(lo, hi))),
        rng.uniform(-math.pi / 2, math.pi / 2),
    )


def random_pairs(seed, n, **kw):
    rng = np.random.default_rng(seed)
    return [(random_ellipse(rng, **kw), random_ellipse(rng, **kw)) for _ in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


sigmas = st.floats(min_value=0.05, max_value=50.0, allow_nan=False)
coords = st.floats(min_value=-100.0, max_value=100.0, allow_nan=False)
angles = st.floats(min_value=-3 * math.pi, max_value=3 * math.pi, allow_nan=False)
ellipses = st.builds(Ellipse, coords, coords, sigmas, sigmas, angles)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
