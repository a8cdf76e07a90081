import logging

import numpy as np
import pytest

from ahresonance.absorption import (MATRIX_FUNCTION, PRINCIPAL_POLYNOMIAL, AbsorptionSpec, _psd_eig,
                                    absorption_from_config, assemble_Q, chi_profile, default_phase_grid,
                                    is_polynomial, numerical_range_probe, other_realization, q_symbol,
                                    sign_conditions_report, support_mask)
from ahresonance.errors import BadParameters, BranchCut, SquareRootFailure
from ahresonance.grid import build_grid, layered_grid


def spec_for(model, **kw):
    return AbsorptionSpec(eps1=kw.pop("eps1", 0.02), delta0=model.delta0, **kw)


@pytest.mark.parametrize("kwargs", [dict(eps1=0.0), dict(eps1=0.05), dict(C_abs=0.0), dict(sharpness=-1.0),
                                    dict(realization="other"), dict(amplitude=-0.5)])
def test_spec_validation(flat_model, kwargs):
    with pytest.raises(BadParameters):
        spec_for(flat_model, **kwargs)


def test_config_and_realization_swap(flat_model):
    section = {"eps1": 0.02, "C_abs": 1.0, "sharpness": 1.0, "realization": MATRIX_FUNCTION, "amplitude": 1.0}
    spec = absorption_from_config(section, flat_model)
    assert spec.delta0 == flat_model.delta0
    assert not is_polynomial(spec)
    assert other_realization(spec).realization == PRINCIPAL_POLYNOMIAL
    assert is_polynomial(spec.replace(amplitude=0.0))
    assert spec.to_dict()["realization"] == MATRIX_FUNCTION


def test_chi_profile_shape(flat_model):
    spec = spec_for(flat_model)
    mu = np.array([-0.05, -0.06, -0.035, -0.02, 0.0, 0.5])
    chi = chi_profile(mu, spec)
    assert chi[0] == 1.0 and chi[1] == 1.0
    assert 0.0 < chi[2] < 1.0
    assert np.all(chi[3:] == 0.0)
    assert chi_profile(-0.035, spec.replace(amplitude=2.0)) == pytest.approx(2.0 * chi[2])


def layered_for(model, spec, N):
    return layered_grid(build_grid(N, model.delta0, model.mu_max, 0.2), -spec.eps1)


@pytest.mark.parametrize("realization", [PRINCIPAL_POLYNOMIAL, MATRIX_FUNCTION])
def test_q_vanishes_off_support(flat_model, realization):
    spec = spec_for(flat_model, realization=realization)
    g = layered_for(flat_model, spec, 64)
    Q0, Q1, Q2 = assemble_Q(flat_model, spec, g, 1, lam=0.5)
    outside = g.nodes >= -spec.eps1
    rows = list(g.constraint_rows)
    for Q in (Q0, Q1):
        assert not Q[outside, :].any()
        assert not Q[:, outside].any()
        assert not Q[rows, :].any()
        assert not Q[:g.layer_start, :].any()
    assert not Q2.any()
    assert np.abs(Q0).max() > 0.0
    expected = (g.nodes < -spec.eps1) & ~np.isin(np.arange(g.size), rows)
    assert np.array_equal(support_mask(g, spec) != 0.0, expected)
    if realization == MATRIX_FUNCTION:
        assert not Q1.any()


def test_q_needs_a_layered_grid(flat_model, grid_for):
    spec = spec_for(flat_model)
    with pytest.raises(BadParameters, match="layered grid"):
        assemble_Q(flat_model, spec, grid_for(flat_model, N=32), 0)
    deep = layered_grid(grid_for(flat_model, N=32), -0.03)
    with pytest.raises(BadParameters, match="absorption onset"):
        assemble_Q(flat_model, spec, deep, 0)


def test_zero_amplitude_is_zero(flat_model):
    spec = spec_for(flat_model, amplitude=0.0)
    triple = assemble_Q(flat_model, spec, layered_for(flat_model, spec, 32), 0)
    assert all(not Q.any() for Q in triple)


def test_matrix_function_branch_cut(flat_model):
    spec = spec_for(flat_model, realization=MATRIX_FUNCTION)
    with pytest.raises(BranchCut):
        assemble_Q(flat_model, spec, layered_for(flat_model, spec, 32), 0, lam=2j)


def test_matrix_function_falls_back_to_polynomial(flat_model, monkeypatch, caplog):
    spec = spec_for(flat_model, realization=MATRIX_FUNCTION)
    g = layered_for(flat_model, spec, 48)

    def broken(Ks):
        raise SquareRootFailure("eigenbasis lost orthogonality")
    monkeypatch.setattr("ahresonance.absorption._psd_eig", broken)
    lam = 0.7 - 0.1j
    with caplog.at_level(logging.WARNING, logger="ahresonance.absorption"):
        Q0, Q1, Q2 = assemble_Q(flat_model, spec, g, 1, lam)
    P0, P1, _ = assemble_Q(flat_model, other_realization(spec), g, 1)
    assert np.allclose(Q0, P0 + lam * P1)
    assert not Q1.any() and not Q2.any()
    assert "using principal_polynomial" in caplog.text


def test_realizations_share_the_symbol_at_high_frequency(flat_model):
    spec = spec_for(flat_model)
    g = layered_for(flat_model, spec, 400)
    vals = [numerical_range_probe(flat_model, s, g, 1.0, 800.0, center=-0.035, width=0.004)
            for s in (spec, other_realization(spec))]
    assert vals[1] == pytest.approx(vals[0], rel=0.1)


def test_modulus_eigenbasis_is_checked():
    with pytest.raises(SquareRootFailure):
        _psd_eig(np.array([[1.0, np.nan], [np.nan, 1.0]]))
    lam, V = _psd_eig(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    assert lam == pytest.approx([1.0, 3.0])


def test_q_symbol(flat_model):
    spec = spec_for(flat_model)
    assert q_symbol(flat_model, spec, 0.1, 1.0, 0.0, 1.0) == 0.0
    # mu = -delta0: chi = 1, a2 = -mu/(2(1+mu))
    mu = -0.05
    expect = 2.0 * (2.0 * (1.0 - mu / (2 * (1 + mu))) * 1.0 + 1.0) * np.sqrt(3.0)
    assert q_symbol(flat_model, spec, mu, 1.0, 1.0, 1.0) == pytest.approx(expect)
    with pytest.raises(BranchCut):
        q_symbol(flat_model, spec, mu, 0.0, 0.0, 1j)


@pytest.mark.parametrize("xi", [800.0, -800.0])
def test_numerical_range_follows_frequency_sign(flat_model, grid_for, xi):
    g = grid_for(flat_model, N=400)
    val = numerical_range_probe(flat_model, spec_for(flat_model), g, 1.0, xi, center=-0.035, width=0.004)
    assert np.sign(val) == np.sign(xi)


def test_sign_conditions_hold_on_real_axis(any_model):
    spec = spec_for(any_model)
    report = sign_conditions_report(any_model, spec, default_phase_grid(any_model, spec), 1.0)
    assert report.all_positive
    assert report.branch_cut_points == 0
    assert report.n_samples > 0
