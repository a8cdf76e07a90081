import numpy as np
import pytest
from scipy import fft as sfft

from ahresonance.errors import BadParameters
from ahresonance.rough_calculus import (BOUNDED, GROWING, INCONCLUSIVE, RoughSymbol, adjoint_defect,
                                        composition_remainder, composition_remainder_probe, default_cells,
                                        fourier_multiplier, garding_probe, japanese, make_rough_coefficient,
                                        majority, mapping_bound_probe, operator_norm, quantize, run_cell,
                                        sobolev_norm, verdict)


def test_grid_size_must_be_power_of_two():
    with pytest.raises(BadParameters):
        make_rough_coefficient(2.0, 0, 48)
    with pytest.raises(BadParameters):
        make_rough_coefficient(0.0, 0, 64)


def test_low_modes_shared_across_grids():
    a = sfft.fft(make_rough_coefficient(2.0, 3, 64)) / 64
    b = sfft.fft(make_rough_coefficient(2.0, 3, 128)) / 128
    assert b[1:32] == pytest.approx(a[1:32], abs=1e-12)
    assert abs(a[0]) < 1e-12


def test_coefficient_regularity_threshold():
    c256 = make_rough_coefficient(2.0, 1, 256)
    c512 = make_rough_coefficient(2.0, 1, 512)
    assert sobolev_norm(c512, 2.6) / sobolev_norm(c256, 2.6) > 1.1
    assert sobolev_norm(c512, 2.0) / sobolev_norm(c256, 2.0) < 1.1


def test_fourier_multiplier():
    N = 16
    assert np.array_equal(fourier_multiplier(np.full(N, 3.0 + 0j)), 3.0 * np.eye(N))
    p = japanese(N, 1.0).astype(complex)
    e = np.exp(2j * np.pi * 3 * np.arange(N) / N)
    assert fourier_multiplier(p) @ e == pytest.approx(np.sqrt(10.0) * e, abs=1e-12)


def test_quantization_paths_agree(rng):
    N = 64
    c = make_rough_coefficient(1.5, 2, N)
    sym = RoughSymbol.separable(c, lambda j: (1.0 + j * j) ** 0.5, N, 1.0, 1.5) + RoughSymbol.coefficient_only(c)
    op = quantize(sym)
    u = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    assert np.max(np.abs(op.matrix @ u - op.apply(u))) < 1e-12
    assert quantize(RoughSymbol.fiber_only(lambda j: np.ones_like(j), N)).matrix == pytest.approx(np.eye(N))


def test_exact_calculus_cases():
    N = 32
    c = make_rough_coefficient(2.0, 0, N)
    assert np.max(np.abs(adjoint_defect(RoughSymbol.coefficient_only(c)))) < 1e-14
    a = RoughSymbol.fiber_only(lambda j: (1.0 + j * j) ** 0.5, N, 1.0)
    b = RoughSymbol.fiber_only(lambda j: 1.0 + 0.5j * j, N, 1.0)
    assert np.max(np.abs(composition_remainder(a, b))) < 1e-10
    with pytest.raises(BadParameters):
        a + RoughSymbol.fiber_only(lambda j: j, 64)


def test_operator_norm_of_lambda_shift():
    N = 32
    A = fourier_multiplier(japanese(N, 1.0).astype(complex))
    assert operator_norm(A, 1.0, 0.0) == pytest.approx(1.0)


@pytest.mark.parametrize("norms, expected", [
    ([1.0, 1.5, 2.25, 3.4], GROWING),
    ([1.0, 1.1, 1.2, 1.3], BOUNDED),
    ([1.0, 1.5, 1.6, 2.5], INCONCLUSIVE),
])
def test_verdict(norms, expected):
    assert verdict(norms) == expected


def test_majority():
    assert majority([BOUNDED, GROWING, BOUNDED]) == (BOUNDED, 2)


@pytest.mark.parametrize("m, s, expected", [(0.0, 1.0, BOUNDED), (0.0, 3.0, GROWING), (1.0, 0.0, BOUNDED)])
def test_mapping_bound(m, s, expected):
    res = mapping_bound_probe(m, 2.0, s)
    assert res.verdict == expected
    assert res.agreement >= 4
    assert len(res.rows()) == 20


def test_composition_smooth_is_bounded():
    res = composition_remainder_probe(1.0, 1.0, 2.0, 1.0, 0.5, N_list=(32, 64, 128), seeds=range(2), smooth=True)
    assert res.verdict == BOUNDED
    with pytest.raises(BadParameters):
        composition_remainder_probe(1.0, 1.0, 2.0, 1.5, 0.5)


def test_garding():
    zero = garding_probe(1.0, 1.0, N_list=(32, 64), amplitude=0.0)
    assert zero.C1 == [0.0, 0.0]
    res = garding_probe(2.0 / 3.0, 1.0)
    assert res.stable
    assert len(res.rayleigh_min) == 4
    assert all(r >= lm - 1e-10 for r, lm in zip(res.rayleigh_min, res.lambda_min))
    with pytest.raises(BadParameters):
        garding_probe(1.0, 0.0)


def test_garding_outside_window_grows():
    N_list = (32, 64, 128, 256, 512)
    verdicts = [garding_probe(2.0, 1.0, N_list=N_list, seed=s, trials=8).verdict for s in range(3)]
    assert majority(verdicts)[0] == GROWING
    inside = garding_probe(2.0 / 3.0, 1.0, N_list=N_list, trials=8)
    assert inside.verdict == BOUNDED


def test_cells_dispatch():
    cells = default_cells(2.0)
    assert {c["probe"] for c in cells} == {"mapping", "composition", "adjoint"}
    assert sorted(c["s"] for c in cells if c["probe"] == "composition") == [0.5, 1.5]
    res = run_cell(cells[0], 2.0, (32, 64), range(2))
    assert res.probe == "mapping"
    with pytest.raises(BadParameters):
        run_cell({"probe": "nope"}, 2.0, (32,), range(1))
