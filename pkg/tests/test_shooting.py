import numpy as np
import pytest

from ahresonance.errors import IndicialDegeneracy, NoConvergence
from ahresonance.shooting import (branch_wronskian, direct_x_solve, frobenius_coefficients, oracle_shooting,
                                  outgoing_exponent, secant_zero, truncated_eigenvalues, warp_in_x)

from conftest import flat_det


def test_warp_in_x(odd_model, linear_model):
    assert list(warp_in_x(linear_model)) == [1.0, 0.0, 1.0]
    F = warp_in_x(odd_model)
    assert F.size == 6 and F[5] == 0.1 and F[2] == 1.0


@pytest.mark.parametrize("lam", [0.3j, -0.4j])
def test_flat_determinant_closed_form(flat_model, lam):
    nu = (-1j * lam).real
    assert oracle_shooting(flat_model, 1, lam) == pytest.approx(flat_det(nu), rel=1e-8)


def test_flat_determinant_vanishes_at_zeros(flat_model, flat_m1_zeros):
    for lam in flat_m1_zeros:
        assert abs(oracle_shooting(flat_model, 1, lam)) < 1e-8
        assert -2.0 < lam.imag < -1.0


def test_flat_mode_zero_is_pure_power(flat_model):
    a = frobenius_coefficients(warp_in_x(flat_model), 0, 0.7 - 0.2j, outgoing_exponent(0.7 - 0.2j), 12)
    assert a[0] == 1.0 and not a[1:].any()
    assert oracle_shooting(flat_model, 0, 1.3 - 0.4j) == pytest.approx(1.0, abs=1e-9)


def test_indicial_degeneracy(flat_model):
    with pytest.raises(IndicialDegeneracy):
        oracle_shooting(flat_model, 1, -1j)


@pytest.mark.parametrize("lam", [0.7 - 0.3j, 1.2 + 0.1j])
def test_branch_wronskian(linear_model, lam):
    W, closed = branch_wronskian(linear_model, 2, lam, 0.2)
    assert W == pytest.approx(closed, rel=1e-9)


def test_secant_zero():
    assert secant_zero(lambda z: z * z - 2.0, 1.0, 1.5) == pytest.approx(np.sqrt(2.0))
    with pytest.raises(NoConvergence):
        secant_zero(lambda z: z * z + 1.0, 0.5, 0.6, max_iter=2)


def test_no_bound_states_for_flat_warp(flat_model):
    assert truncated_eigenvalues(flat_model, 0) == []
    assert truncated_eigenvalues(flat_model, 1) == []


def test_direct_solve_manufactured(flat_model):
    x0 = 1e-3
    a, b = np.log(x0), 0.0
    lam = 1.0 + 0.5j

    def exact(x):
        s = np.log(x)
        return (s - a) * (b - s)

    def rhs(x):
        s = np.log(x)
        return 2.0 + (a + b - 2.0 * s) - (0.25 + lam * lam) * exact(x)
    x, u = direct_x_solve(flat_model, 0, lam, rhs, x0=x0, N=40)
    assert x[0] == pytest.approx(1.0)
    assert np.max(np.abs(u - exact(x))) < 1e-9
