import numpy as np
import pytest

import ccfom

# Catalog cells used by several test modules: (problem id, x0)
SMOOTH_CELLS = [
    ("quad:diag=1", [2.0]),
    ("quad:diag=1,10", [1.0, 1.0]),
    ("quad:diag=1,100", [1.0, 1.0]),
    ("lse:dim=2", [3.0, -3.0]),
]
NONSMOOTH_CELLS = [
    ("norm:G=1:dim=1", [1.0]),
    ("norm:G=2:dim=3", [1.0, 1.0, 1.0]),
    ("maxaff:abs=1", [1.0]),
    ("maxaff:dim=2:pieces=5:seed=1", [0.5, -1.0]),
]


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def scalar_quad():
    return ccfom.make_quadratic([[1.0]], [0.0])


@pytest.fixture
def abs_value():
    return ccfom.make_scaled_norm(1.0, 1)


def sample_points(rng, dim, n=25, scale=4.0):
    return rng.uniform(-scale, scale, size=(n, dim))
