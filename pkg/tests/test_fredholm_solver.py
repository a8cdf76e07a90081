import numpy as np
import pytest

from ahresonance.absorption import AbsorptionSpec, other_realization
from ahresonance.errors import ContourThroughPole, SupportViolation
from ahresonance.fredholm_solver import (FredholmFamily, Resonance, beyn_contour, clip_to_strip,
                                         estimate_spread, estimate_sweep, indicial_degenerate,
                                         linearized_eigenvalues, refine_pole, resolvent_apply, resolvent_norm,
                                         resolvent_oracle_gap, resonance_report, sigma_min_scan)
from ahresonance.grid import build_grid


def spec_for(model, **kw):
    return AbsorptionSpec(eps1=0.02, delta0=model.delta0, **kw)


def diagonal_fn(roots):
    return lambda lam: np.diag([lam - r for r in roots]).astype(complex)


def test_companion_eigenvalues():
    A = np.diag([2.0, -6.0]).astype(complex)
    B = np.diag([-3.0, 1.0]).astype(complex)
    C = np.eye(2, dtype=complex)
    e, X = linearized_eigenvalues(A, B, C)
    assert np.sort_complex(e) == pytest.approx([-3.0, 1.0, 2.0, 2.0])
    for lam, x in zip(e, X.T):
        assert np.linalg.norm((A + lam * B + lam * lam * C) @ x) < 1e-10 * np.linalg.norm(x)


def test_beyn_finds_enclosed_roots():
    res = beyn_contour(diagonal_fn([1.0, 2.0, -3.0]), 1.5, 1.0)
    assert res.rank == 2
    assert sorted(res.eigenvalues, key=lambda z: z.real) == pytest.approx([1.0, 2.0], abs=1e-10)
    assert max(res.residuals) < 1e-8
    empty = beyn_contour(diagonal_fn([1.0, 2.0, -3.0]), 10.0, 1.0)
    assert empty.rank == 0 and empty.eigenvalues == []


def test_beyn_contour_through_pole():
    node = np.exp(1j * 2.0 * np.pi * 0.5 / 64)
    with pytest.raises(ContourThroughPole):
        beyn_contour(diagonal_fn([node, -5.0]), 0.0, 1.0, n_nodes=64)


@pytest.mark.parametrize("lam, expected", [(0.0, True), (-0.5j, True), (-1j, True), (0.5j, False),
                                           (1.0, False), (-0.7j, False)])
def test_indicial_degenerate(lam, expected):
    assert indicial_degenerate(lam) is expected


def test_clip_to_strip(odd_model, flat_model):
    assert clip_to_strip(odd_model, [-6, 6, -3, 0.5]) == pytest.approx([-6, 6, -2.4, 0.5])
    assert clip_to_strip(odd_model, [-6, 6, -3, 0.5], exploratory=True)[2] == -3
    assert clip_to_strip(flat_model, [-6, 6, -3, 0.5])[2] == -3


def test_resonance_fields():
    r = Resonance(1 - 2j, 1e-12, 1e-13, 1, [(1.0, -2.0), (1.0, -2.0)], 0.0, False)
    assert set(r.to_dict()) == {"lambda_re", "lambda_im", "sigma_min", "newton_residual", "multiplicity",
                                "grid_history", "absorption_drift", "beyond_strip"}


def test_family_realizations_agree_on_closure_row(flat_model):
    g = build_grid(48, flat_model.delta0, flat_model.mu_max)
    poly = FredholmFamily(flat_model, spec_for(flat_model), g, 1)
    mf = FredholmFamily(flat_model, spec_for(flat_model, realization="matrix_function"), g, 1)
    lam = 1.0 + 0.3j
    assert np.array_equal(poly.at(lam)[0], mf.at(lam)[0])
    assert not mf.polynomial
    assert not mf.derivative(lam)[0].any()


def test_refine_pole_on_flat_mode_one(flat_model, flat_m1_zeros):
    g = build_grid(120, flat_model.delta0, flat_model.mu_max)
    family = FredholmFamily(flat_model, spec_for(flat_model), g, 1)
    target = flat_m1_zeros[0]
    pole = refine_pole(family, target + 0.01, tol=1e-12)
    assert abs(pole.lam - target) < 1e-5
    assert pole.trace


def test_resolvent_support(flat_model):
    g = build_grid(64, flat_model.delta0, flat_model.mu_max)
    family = FredholmFamily(flat_model, spec_for(flat_model), g, 0)
    with pytest.raises(SupportViolation):
        resolvent_apply(family, 1.0 + 0.5j, lambda x: np.ones_like(x))
    x, u = resolvent_apply(family, 1.0 + 0.5j, lambda x: 0.0 * x)
    assert not u.any()
    assert resolvent_norm(family, 2.0 + 0.2j, 1.0) > 0.0


def test_sigma_min_scan_uses_precomputed_field(flat_model):
    g = build_grid(32, flat_model.delta0, flat_model.mu_max)
    family = FredholmFamily(flat_model, spec_for(flat_model), g, 0)
    sigma = np.ones((5, 5))
    sigma[2, 2] = 0.1
    res = sigma_min_scan(family, [-1, 1, -1, 1], (5, 5), sigma=sigma)
    assert res.candidates == [0j]
    assert res.sigma is sigma


@pytest.mark.slow
def test_resolvent_matches_direct_solve(flat_model):
    g = build_grid(200, flat_model.delta0, flat_model.mu_max)
    family = FredholmFamily(flat_model, spec_for(flat_model), g, 0)
    bump = lambda x: np.exp(-0.5 * ((x - 0.7) / 0.05) ** 2)
    assert resolvent_oracle_gap(family, 1.0 + 1.0j, bump) < 1e-4


@pytest.mark.slow
def test_flat_resonances_match_bessel_zeros(flat_model, flat_m1_zeros):
    spec = spec_for(flat_model)
    report = resonance_report(flat_model, spec, 160, 0.2, 1, [-0.5, 0.5, -1.99, -1.02])
    found = [r.lam for r in report.resonances]
    for target in flat_m1_zeros:
        assert min(abs(z - target) for z in found) < 1e-4
    assert report.oracle_mismatches == []
    assert all(r.multiplicity == 1 for r in report.resonances)
    assert all(r.absorption_drift < 1e-6 for r in report.resonances)
    empty = resonance_report(flat_model, spec, 160, 0.2, 0, [-3.0, 3.0, -1.99, 0.4])
    assert [r.lam for r in empty.resonances if not r.indicial] == []


@pytest.mark.slow
def test_semiclassical_estimate_is_uniform(flat_model):
    rows = estimate_sweep(flat_model, spec_for(flat_model), [8, 16, 32], 0.2, [0.0, 1.0], N=120)
    assert len(rows) == 6
    spread = estimate_spread(rows)
    assert all(v < 10.0 for v in spread.values())


def test_family_layers_the_grid_at_absorption_onset(flat_model):
    spec = spec_for(flat_model)
    family = FredholmFamily(flat_model, spec, build_grid(48, flat_model.delta0, flat_model.mu_max), 1)
    g = family.grid
    assert g.layered and g.interface == -spec.eps1
    M = family.at(0.4 - 1.1j)
    start = g.layer_start
    assert not M[:start, start:].any()
    assert M[start, start] == 1.0 and M[start, start - 1] == -1.0
    assert np.allclose(M[-1], g.D1[start] - g.D1[start - 1])
    open_family = FredholmFamily(flat_model, None, build_grid(48, flat_model.delta0, flat_model.mu_max), 1)
    assert not open_family.grid.layered


def test_poles_do_not_move_with_absorption(flat_model, flat_m1_zeros):
    spec = spec_for(flat_model)
    g = build_grid(120, flat_model.delta0, flat_model.mu_max)
    target = flat_m1_zeros[0]
    base = refine_pole(FredholmFamily(flat_model, spec, g, 1), target + 0.01, tol=1e-12).lam
    assert abs(base - target) < 1e-5
    for variant in (other_realization(spec), spec.replace(C_abs=2.0 * spec.C_abs)):
        lam = refine_pole(FredholmFamily(flat_model, variant, g, 1), target + 0.01, tol=1e-12).lam
        assert abs(lam - base) < 1e-8
    half = refine_pole(FredholmFamily(flat_model, spec.replace(eps1=0.5 * spec.eps1), g, 1), target + 0.01,
                       tol=1e-12).lam
    assert abs(half - base) < 1e-6


def test_absorption_drift_rejects_candidates(flat_model, monkeypatch):
    monkeypatch.setattr("ahresonance.fredholm_solver._drift", lambda family, lam, tol, max_iter: 1.0)
    report = resonance_report(flat_model, spec_for(flat_model), 48, 0.2, 1, [-0.5, 0.5, -1.5, -1.1],
                              drift_tol=1e-3)
    assert report.resonances == []
    drifted = [r for r in report.rejected if r["reason"] == "absorption_drift"]
    assert drifted and all(r["drift"] == 1.0 for r in drifted)
