import math

import numpy as np
import pytest
from scipy import optimize, special

from ahresonance.grid import build_grid
from ahresonance.metric_model import build_model


def flat(**kw):
    return build_model([1.0], "inf", 0.0, kw.pop("delta0", 0.05), kw.pop("mu_max", 1.0), **kw)


def linear(**kw):
    return build_model([1.0, 1.0], "inf", 0.0, kw.pop("delta0", 0.05), kw.pop("mu_max", 1.0), **kw)


def odd_k2(**kw):
    return build_model([1.0, 1.0], 2, 0.1, kw.pop("delta0", 0.05), kw.pop("mu_max", 1.0), **kw)


@pytest.fixture
def flat_model():
    return flat()


@pytest.fixture
def linear_model():
    return linear()


@pytest.fixture
def odd_model():
    return odd_k2()


@pytest.fixture(params=["flat", "linear", "odd_k2"])
def any_model(request):
    return {"flat": flat, "linear": linear, "odd_k2": odd_k2}[request.param]()


@pytest.fixture
def grid_for():
    def make(model, N=200, clustering=0.2):
        return build_grid(N, model.delta0, model.mu_max, clustering)
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def flat_det(nu):
    """Gamma(1+nu) 2^nu I_nu(1): the Dirichlet determinant of f = 1, m = 1 at lambda = i nu."""
    return special.gamma(1.0 + nu) * 2.0 ** nu * special.iv(nu, 1.0)


def _flat_det_series(nu):
    return sum(0.25 ** k / (math.factorial(k) * special.poch(nu + 1.0, k)) for k in range(40))


@pytest.fixture(scope="session")
def flat_m1_zeros():
    """The two Dirichlet resonances of f = 1, m = 1, mu_max = 1 in -2 < Im lambda < -1."""
    nu1 = optimize.brentq(_flat_det_series, -1.5, -1.01, xtol=1e-14)
    nu2 = optimize.brentq(_flat_det_series, -1.99, -1.5, xtol=1e-14)
    return [1j * nu1, 1j * nu2]
