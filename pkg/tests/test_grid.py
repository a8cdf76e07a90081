import numpy as np
import pytest

from ahresonance.errors import BadParameters
from ahresonance.grid import SobolevScale, build_grid, cheb_diff, clenshaw_curtis, layered_grid


def test_cheb_diff_is_exact_on_polynomials():
    t, D = cheb_diff(16)
    assert t[0] == 1.0 and t[-1] == pytest.approx(-1.0)
    assert np.max(np.abs(D @ t ** 3 - 3.0 * t ** 2)) < 1e-11
    assert np.max(np.abs(D @ np.ones_like(t))) < 1e-13


@pytest.mark.parametrize("N", [16, 17])
def test_clenshaw_curtis(N):
    t, _ = cheb_diff(N)
    w = clenshaw_curtis(N)
    assert w.sum() == pytest.approx(2.0)
    assert w @ t ** 4 == pytest.approx(0.4)


@pytest.mark.parametrize("clustering", [0.2, None])
def test_grid_identities(clustering):
    g = build_grid(200, 0.05, 1.0, clustering)
    assert g.size == 201
    assert g.nodes[0] == 1.0 and g.nodes[-1] == -0.05
    assert np.all(np.diff(g.nodes) < 0)
    res = g.check()
    assert res["d1_const"] < 1e-8
    assert res["d1_linear"] < 1e-6
    assert res["d2_square"] == 0.0
    assert res["quad_one"] < 1e-9


def test_clustered_grid_is_denser_near_zero():
    g = build_grid(64, 0.05, 1.0, 0.2)
    a = build_grid(64, 0.05, 1.0, None)
    near = lambda grid: int(np.sum(np.abs(grid.nodes) < 0.05))
    assert near(g) > near(a)


def test_affine_grid_differentiates_quadratics():
    g = build_grid(32, 0.05, 1.0, None)
    assert g.D1 @ g.nodes ** 2 == pytest.approx(2.0 * g.nodes, abs=1e-9)


@pytest.mark.parametrize("args", [(8, 0.05, 1.0, 0.2), (32.5, 0.05, 1.0, 0.2), (32, 0.05, 1.0, -1.0),
                                  (32, 0.0, 1.0, 0.2)])
def test_bad_grids(args):
    with pytest.raises(BadParameters):
        build_grid(*args)


def test_sobolev_scale_zero_order_is_weighted_l2():
    g = build_grid(32, 0.05, 1.0)
    sc = SobolevScale(g, 0.0)
    assert sc.matrix() == pytest.approx(np.eye(g.size), abs=1e-10)
    u = np.cos(3.0 * g.nodes)
    assert sc.norm(u) == pytest.approx(np.sqrt(g.weights @ u ** 2))


def test_sobolev_scale_inverse_and_monotone():
    g = build_grid(32, 0.05, 1.0)
    sc = SobolevScale(g, 1.0)
    assert sc.W @ sc.W_inv == pytest.approx(np.eye(g.size), abs=1e-8)
    u = np.sin(5.0 * g.nodes)
    assert sc.norm(u, 1.0) > sc.norm(u, 0.0)
    # semiclassical scaling interpolates back to L2
    assert SobolevScale(g, 1.0, h=1e-3).norm(u) == pytest.approx(sc.norm(u, 0.0), rel=1e-3)


def test_sobolev_scale_rejects_bad_h():
    g = build_grid(32, 0.05, 1.0)
    with pytest.raises(BadParameters):
        SobolevScale(g, 1.0, h=0.0)


def test_layered_grid_identities():
    g = layered_grid(build_grid(64, 0.05, 1.0, 0.2), -0.02)
    assert g.layered and g.layer_start == 65
    assert g.size == 65 + 17
    assert g.constraint_rows == (0, 65, g.size - 1)
    assert g.nodes[64] == g.nodes[65] == -0.02
    assert g.nodes[0] == pytest.approx(1.0) and g.nodes[-1] == pytest.approx(-0.05)
    assert np.all(np.diff(g.nodes) <= 0)
    assert not g.D1[:65, 65:].any() and not g.D1[65:, :65].any()
    res = g.check()
    assert res["d1_const"] < 1e-8
    assert res["d1_linear"] < 1e-6
    assert res["quad_one"] < 1e-9
    assert g.key != build_grid(64, 0.05, 1.0, 0.2).key


def test_layer_size_follows_main_patch():
    assert layered_grid(build_grid(200, 0.05, 1.0), -0.02).size == 201 + 51
    assert layered_grid(build_grid(32, 0.05, 1.0), -0.02, layer_N=24).size == 33 + 25


@pytest.mark.parametrize("interface", [0.0, 0.01, -0.05, -0.2])
def test_layer_interface_must_sit_in_hyperbolic_part(interface):
    with pytest.raises(BadParameters):
        layered_grid(build_grid(32, 0.05, 1.0), interface)


def test_single_patch_has_only_the_closure_row():
    g = build_grid(32, 0.05, 1.0)
    assert not g.layered
    assert g.constraint_rows == (0,)
    assert g.layer == slice(0, 0)
