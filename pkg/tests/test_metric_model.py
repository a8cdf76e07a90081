import math

import numpy as np
import pytest

from ahresonance.errors import BadDomain, BadEvenness, BadParameters, NonPositiveWarp, OutOfDomain
from ahresonance.metric_model import (build_model, classify_evenness, evenness_signature, gamma_coefficient,
                                      gamma_fd_check, model_from_config, strip_bound)


def test_evenness_order_below_two_is_rejected():
    with pytest.raises(BadEvenness, match="evenness order must be ≥ 2"):
        build_model([1.0], 1, 0.1, 0.05, 1.0)


def test_infinite_order_forbids_odd_part():
    with pytest.raises(BadEvenness):
        build_model([1.0], "inf", 0.1, 0.05, 1.0)


@pytest.mark.parametrize("kwargs, exc", [
    (dict(even_coeffs=[0.0]), NonPositiveWarp),
    (dict(even_coeffs=[1.0, -30.0]), NonPositiveWarp),
    (dict(delta0=1.5), BadDomain),
    (dict(mu_max=0.1), BadDomain),
    (dict(inner_bc="robin"), BadParameters),
    (dict(n=2), BadParameters),
    (dict(even_coeffs=[]), BadParameters),
])
def test_invalid_models(kwargs, exc):
    args = dict(even_coeffs=[1.0], k="inf", odd_amplitude=0.0, delta0=0.05, mu_max=1.0)
    args.update(kwargs)
    with pytest.raises(exc):
        build_model(**args)


def test_k_parsing():
    assert build_model([1.0], "inf", 0.0, 0.05, 1.0).k is None
    assert build_model([1.0], float("inf"), 0.0, 0.05, 1.0).k is None
    assert build_model([1.0], "3", 0.1, 0.05, 1.0).k == 3
    with pytest.raises(BadEvenness):
        build_model([1.0], 2.5, 0.1, 0.05, 1.0)


def test_flat_warp_has_zero_gamma(flat_model):
    mu = np.linspace(-0.05, 1.0, 11)
    assert np.all(flat_model.eval_gamma(mu) == 0.0)
    assert np.all(flat_model.eval_h(mu) == 1.0)


def test_linear_warp_gamma(linear_model):
    mu = np.array([-0.05, 0.0, 0.5, 1.0])
    assert linear_model.eval_gamma(mu) == pytest.approx(-1.0 / (1.0 + mu))
    assert linear_model.eval_dinv_h(mu) == pytest.approx(-1.0 / (1.0 + mu) ** 2)


def test_flipped_gamma_sign():
    m = build_model([1.0, 1.0], "inf", 0.0, 0.05, 1.0, gamma_sign=-1.0)
    assert float(m.eval_gamma(0.0)) == pytest.approx(1.0)


def test_odd_part_is_continuous_and_symmetric(odd_model):
    mu = 1e-3
    assert float(odd_model.eval_h(mu)) - float(odd_model.eval_h(-mu)) == pytest.approx(2e-3)
    assert float(odd_model.eval_h(mu)) == pytest.approx(1.0 + mu + 0.1 * mu ** 2.5)


def test_evaluation_outside_domain_raises(flat_model):
    with pytest.raises(OutOfDomain):
        flat_model.eval_h(1.5)
    with pytest.raises(OutOfDomain):
        gamma_coefficient(flat_model)(-0.2)


def test_classify_and_strip(flat_model, odd_model):
    assert math.isinf(classify_evenness(flat_model))
    assert strip_bound(flat_model) == -math.inf
    assert classify_evenness(odd_model) == 2
    assert strip_bound(odd_model) == pytest.approx(-2.5)
    assert gamma_coefficient(odd_model).smoothness == "C^{k-1}"


def test_gamma_fd_check_is_second_order():
    m = build_model([1.0, 0.5, 0.0, 0.2], "inf", 0.0, 0.05, 1.0)
    err = gamma_fd_check(m, 0.4, [1e-2, 1e-3])
    assert 50.0 < err[0] / err[1] < 200.0


def test_evenness_signature_grows_like_inverse_sqrt(odd_model):
    sig = evenness_signature(odd_model, levels=4)
    ratios = sig[1:] / sig[:-1]
    assert ratios == pytest.approx(math.sqrt(2.0), rel=1e-3)


def test_model_hash_and_config_section(linear_model):
    section = {"even_coeffs": [1.0, 1.0], "k": "inf", "odd_amplitude": 0.0, "delta0": 0.05,
               "mu_max": 1.0, "inner_bc": "dirichlet"}
    assert model_from_config(section).model_hash == linear_model.model_hash
    assert model_from_config(section, flip_gamma_sign=True).model_hash != linear_model.model_hash
    wide = linear_model.with_mu_max(1.5)
    assert wide.domain == (-0.05, 1.5)
    assert wide.model_hash != linear_model.model_hash


def test_point_values(odd_model, linear_model):
    assert float(odd_model.eval_h(0.04)) == pytest.approx(1.04 + 0.1 * 0.04 ** 2.5, rel=1e-12)
    assert float(linear_model.eval_gamma(1.0)) == pytest.approx(-0.5)
