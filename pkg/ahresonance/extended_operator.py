"""Conjugated, extended operator P_lambda per Fourier mode.

Two coefficient forms are kept side by side:

* ``display``: the closed-form coefficients a2, b1, b2, c1 as usually written for the
  extended operator;
* ``exact``: the exact conjugate (1+mu)^{-i lambda/4} P~ (1+mu)^{i lambda/4} of the
  mu^{-1-beta} (Delta_g - n^2/4 - lambda^2) mu^{beta} operator. It differs from the display
  by the remainder fields r2 = mu/(1+mu) (lambda^2), r1 = 1/(1+mu) (lambda^1) and
  r0 = gamma/2 (lambda^0, n = 1).

The exact form is the one the round-trip oracle certifies and the solver uses.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.interpolate import BarycentricInterpolator

from .errors import (BadParameters, GridModelMismatch, MissingAbsorptionAtEdge, OutOfDomain,
                     SupportViolation)
from .grid import SpectralGrid, cheb_diff
from .metric_model import CoefficientField, DIRICHLET, NEUMANN, WarpedMetricModel, classify_evenness

log = logging.getLogger(__name__)

EXACT = "exact"
DISPLAY = "display"
FORMS = (EXACT, DISPLAY)

# manufactured bump used by the oracles; negligible at mu <= 0 and at mu_max = 1
BUMP_CENTER = 0.5
BUMP_WIDTH = 0.06


def gaussian_bump(mu, center: float = BUMP_CENTER, width: float = BUMP_WIDTH):
    mu = np.asarray(mu, dtype=float)
    return np.exp(-0.5 * ((mu - center) / width) ** 2)


def a2(mu):
    mu = np.asarray(mu, dtype=float)
    return -mu / (2.0 * (1.0 + mu))


def da2(mu):
    mu = np.asarray(mu, dtype=float)
    return -0.5 / (1.0 + mu) ** 2


def b2_lambda0(model: WarpedMetricModel, mu):
    mu = np.asarray(mu, dtype=float)
    g = model.eval_gamma(mu)
    return (1j * mu / (1.0 + mu) - (1.0 + 1j) - 0.5j * g * (2.0 + mu)) / (1.0 + mu)


def c_lambda2(mu, form: str = DISPLAY):
    mu = np.asarray(mu, dtype=float)
    c = -1.0 + mu / (4.0 * (1.0 + mu) ** 2)
    if form == EXACT:
        c = c + mu / (1.0 + mu)
    return c


@dataclass(frozen=True)
class CoefficientSet:
    model: WarpedMetricModel
    n: int
    a2: CoefficientField
    b1: CoefficientField
    b2: Callable
    c1: CoefficientField
    r2: CoefficientField
    r1: CoefficientField
    r0: CoefficientField


def assemble_coefficients(model: WarpedMetricModel, lam: complex = 0.0) -> CoefficientSet:
    dom = model.domain
    gtag = "C^inf" if np.isinf(classify_evenness(model)) else "C^{k-1}"
    n = model.n

    def b2(mu, lam_=lam):
        mu = np.asarray(mu, dtype=float)
        g = model.eval_gamma(mu)
        return ((lam_ / 4.0 + 1j) * mu / (1.0 + mu) - (1.0 + 1j) - 0.5j * g * (2.0 + mu)) / (1.0 + mu)

    return CoefficientSet(
        model=model,
        n=n,
        a2=CoefficientField(a2, "C^inf", dom, "a2"),
        b1=CoefficientField(lambda mu: 2j * model.eval_gamma(mu), gtag, dom, "b1"),
        b2=b2,
        c1=CoefficientField(lambda mu: 0.5 * (n - 1) * model.eval_gamma(mu), gtag, dom, "c1"),
        r2=CoefficientField(lambda mu: mu / (1.0 + mu), "C^inf", dom, "r2"),
        r1=CoefficientField(lambda mu: 1.0 / (1.0 + mu), "C^inf", dom, "r1"),
        r0=CoefficientField(lambda mu: 0.5 * model.eval_gamma(mu), gtag, dom, "r0"),
    )


def pencil_coefficients(model: WarpedMetricModel, mu, m: int, form: str = EXACT) -> Dict[str, Tuple]:
    """Coefficients (c2, c1, c0) of c2 d^2 + c1 d + c0 for each lambda power, d = d/dmu."""
    if form not in FORMS:
        raise BadParameters(f"unknown operator form {form!r}")
    mu = np.asarray(mu, dtype=float)
    g = model.eval_gamma(mu)
    f = model.eval_h(mu)
    zero = np.zeros_like(mu)
    c0_a = m * m / f + (0.5 * model.n * g if form == EXACT else 0.5 * (model.n - 1) * g)
    b0 = b2_lambda0(model, mu)
    if form == EXACT:
        b0 = b0 + 1.0 / (1.0 + mu)
    return {
        "A": (-4.0 * mu, -4.0 + 2.0 * g * mu, c0_a + 0j),
        "B": (zero, 4j * (1.0 + a2(mu)), b0),
        "C": (zero, zero, c_lambda2(mu, form) + 0j),
    }


def opvasy_coefficients(model: WarpedMetricModel, mu, m: int) -> Dict[str, Tuple]:
    """Coefficients of P~ = mu^{-1-beta} L mu^{beta}, before the (1+mu) conjugation."""
    mu = np.asarray(mu, dtype=float)
    g = model.eval_gamma(mu)
    f = model.eval_h(mu)
    zero = np.zeros_like(mu)
    return {
        "A": (-4.0 * mu, -4.0 + 2.0 * g * mu, m * m / f + 0.5 * model.n * g + 0j),
        "B": (zero, 4j + zero, -1j * g),
        "C": (zero, zero, zero + 0j),
    }


def _to_matrix(grid: SpectralGrid, coeffs: Tuple) -> np.ndarray:
    c2, c1, c0 = coeffs
    return c2[:, None] * grid.D2 + c1[:, None] * grid.D1 + np.diag(c0)


@dataclass
class OperatorPencil:
    """P(lambda) = A + lambda B + lambda^2 C with the inner closure in row 0."""
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    mode: int
    grid: SpectralGrid = field(repr=False)
    closure: str
    form: str = EXACT

    def at(self, lam: complex) -> np.ndarray:
        return self.A + lam * self.B + lam * lam * self.C

    def derivative(self, lam: complex) -> np.ndarray:
        return self.B + 2.0 * lam * self.C

    def with_absorption(self, triple) -> "OperatorPencil":
        Q0, Q1, Q2 = triple
        return OperatorPencil(self.A - 1j * Q0, self.B - 1j * Q1, self.C - 1j * Q2,
                              self.mode, self.grid, self.closure, self.form)


def _apply_closure(A, B, C, grid: SpectralGrid, bc: str) -> None:
    for M in (A, B, C):
        M[list(grid.constraint_rows), :] = 0.0
    if bc == DIRICHLET:
        A[0, 0] = 1.0
    elif bc == NEUMANN:
        A[0, :] = grid.D1[0, :]
    else:
        raise BadParameters(f"unknown inner_bc {bc!r}")
    if grid.layered:
        # the layer continues the solution from the interface: value and slope match there
        i = grid.layer_start
        A[i, i], A[i, i - 1] = 1.0, -1.0
        A[-1, :] = grid.D1[i, :] - grid.D1[i - 1, :]


def check_grid(model: WarpedMetricModel, grid: SpectralGrid) -> None:
    if abs(grid.delta0 - model.delta0) > 1e-14 or abs(grid.mu_max - model.mu_max) > 1e-14:
        raise GridModelMismatch(
            f"grid [{-grid.delta0}, {grid.mu_max}] does not match model [{-model.delta0}, {model.mu_max}]")


def assemble_pencil(model: WarpedMetricModel, grid: SpectralGrid, mode_m: int, absorption=None,
                    form: str = EXACT, open_edge: bool = False) -> OperatorPencil:
    """Quadratic pencil of P_lambda (minus i Q when an absorption triple is given).

    The edge mu = -delta0 must be handled one way or another: an absorbing layer on the grid,
    an absorption triple, or ``open_edge=True`` for the bare operator collocated up to the edge.
    """
    check_grid(model, grid)
    if mode_m < 0 or int(mode_m) != mode_m:
        raise BadParameters(f"mode must be a nonnegative integer, got {mode_m}")
    if absorption is None and not grid.layered and not open_edge:
        raise MissingAbsorptionAtEdge("pencil requested without absorption and without an edge closure")
    co = pencil_coefficients(model, grid.nodes, int(mode_m), form)
    A = _to_matrix(grid, co["A"]).astype(complex)
    B = _to_matrix(grid, co["B"]).astype(complex)
    C = _to_matrix(grid, co["C"]).astype(complex)
    if absorption is not None:
        Q0, Q1, Q2 = absorption
        A -= 1j * Q0
        B -= 1j * Q1
        C -= 1j * Q2
    _apply_closure(A, B, C, grid, model.inner_bc)
    return OperatorPencil(A, B, C, int(mode_m), grid, model.inner_bc, form)


def opvasy_pencil(model: WarpedMetricModel, grid: SpectralGrid, mode_m: int):
    """(A, B) of P~ = A + lambda B on the grid, no closure rows."""
    co = opvasy_coefficients(model, grid.nodes, int(mode_m))
    return _to_matrix(grid, co["A"]).astype(complex), _to_matrix(grid, co["B"]).astype(complex)


def principal_symbol(model: WarpedMetricModel, mu, xi, eta):
    mu = np.asarray(mu, dtype=float)
    lo, hi = model.domain
    # mu below the domain is allowed formally only for the constant warp
    if np.any(mu > hi + 1e-12) or (np.any(mu < lo - 1e-12) and not _is_constant_warp(model)):
        raise OutOfDomain("principal_symbol evaluated outside the model domain")
    f = model._f(mu)
    return 4.0 * mu * np.asarray(xi) ** 2 + np.asarray(eta) ** 2 / f


def _is_constant_warp(model: WarpedMetricModel) -> bool:
    return len(model.even_coeffs) == 1 and model.odd_amplitude == 0


def semiclassical_symbol(model: WarpedMetricModel, mu, xi, eta, z, form: str = DISPLAY):
    """4 mu xi^2 - 4(1+a2) z xi - z^2 + |eta|^2 (``display``).

    ``exact`` replaces -z^2 by z^2 C(mu), the lambda^2 coefficient of the exact pencil,
    which equals -1 at mu = 0.
    """
    mu = np.asarray(mu, dtype=float)
    f = model.eval_h(mu)
    xi = np.asarray(xi, dtype=float)
    quad = -1.0 if form == DISPLAY else c_lambda2(mu, EXACT)
    return 4.0 * mu * xi ** 2 - 4.0 * (1.0 + a2(mu)) * z * xi + quad * z * z + np.asarray(eta) ** 2 / f


def imaginary_part_identity(model: WarpedMetricModel, mu, xi, z):
    """-2 Im z [2(1+a2) xi + Re z]."""
    return -2.0 * np.imag(z) * (2.0 * (1.0 + a2(mu)) * np.asarray(xi) + np.real(z))


def interior_ellipticity(mu) -> np.ndarray:
    """4 mu^2 (d phi)^2 for e^phi = mu^{1/2}(1+mu)^{-1/4}; must stay below 1."""
    mu = np.asarray(mu, dtype=float)
    dphi = 0.5 / mu - 0.25 / (1.0 + mu)
    return 4.0 * mu ** 2 * dphi ** 2


def _x_operator(model: WarpedMetricModel, m: int, lam: complex, x: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Delta_g - n^2/4 - lambda^2 for mode m in x-coordinates on a collocation grid."""
    mu = x * x
    f = model._f(mu)
    df = model._df(mu)
    D2 = D @ D
    return (-(x ** 2)[:, None] * D2 - (x ** 3 * df / f)[:, None] * D
            + np.diag(x ** 2 * m * m / f - model.n ** 2 / 4.0 - lam * lam))


def x_grid(a: float, b: float, N: int) -> Tuple[np.ndarray, np.ndarray]:
    t, Dt = cheb_diff(N)
    x = 0.5 * (b - a) * t + 0.5 * (b + a)
    return x, Dt * (2.0 / (b - a))


def conjugation_roundtrip(model: WarpedMetricModel, lam: complex, manufactured_u: Callable = gaussian_bump,
                          grid: Optional[SpectralGrid] = None, mode_m: int = 0, N: int = 200) -> float:
    """Relative sup-norm gap between the pencil and the x-coordinate chain on a bump."""
    from .grid import build_grid

    if grid is None:
        grid = build_grid(N, model.delta0, model.mu_max)
    check_grid(model, grid)
    mu = grid.nodes
    u = np.asarray(manufactured_u(mu), dtype=complex)
    scale = np.max(np.abs(u))
    if scale == 0.0:
        return 0.0
    if np.any(np.abs(u[mu <= 0.0]) > 1e-10 * scale):
        raise SupportViolation("manufactured function touches mu <= 0")

    pencil = assemble_pencil(model, grid, mode_m, form=EXACT, open_edge=True)
    side_mu = pencil.at(lam) @ u

    # x-side: W = mu^beta (1+mu)^{i lam/4} u, L W, then weight back
    beta = 0.25 - 0.5j * lam
    x, Dx = x_grid(np.sqrt(model.delta0), np.sqrt(model.mu_max), grid.N)
    mx = x * x
    W = mx ** beta * (1.0 + mx) ** (0.25j * lam) * np.asarray(manufactured_u(mx), dtype=complex)
    LW = _x_operator(model, mode_m, lam, x, Dx) @ W
    back = mx ** (-1.0 - beta) * (1.0 + mx) ** (-0.25j * lam) * LW

    sel = (mu >= model.delta0) & (np.arange(grid.size) > 0)
    side_x = BarycentricInterpolator(x, back)(np.sqrt(mu[sel]))
    ref = np.max(np.abs(side_x))
    gap = np.max(np.abs(side_mu[sel] - side_x))
    residual = float(gap / ref) if ref > 0 else float(gap)
    log.debug("conjugation roundtrip lam=%s N=%d residual=%.3e", lam, grid.N, residual)
    return residual


def selfadjointness_defect(model: WarpedMetricModel, lam_real: complex, grid: SpectralGrid,
                           mode_m: int = 0, n_test: int = 4) -> float:
    """Hermitian defect of P~ compressed onto ``n_test`` bumps supported in mu > 0.

    This is a Galerkin compression of ||M - W^{-1} M^dagger W||, not the full matrix defect:
    with W = 1/2 f^{1/2} dmu and M_V = V^T W M V the value is ||M_V - M_V^H|| / ||M_V||.
    The test functions vanish at both ends, so boundary rows do not enter.
    """
    check_grid(model, grid)
    mu = grid.nodes
    A, B = opvasy_pencil(model, grid, mode_m)
    M = A + lam_real * B
    V = np.stack([gaussian_bump(mu) * np.cos(j * np.pi * mu) for j in range(n_test)], axis=1)
    w = grid.weights * 0.5 * np.sqrt(model.eval_h(mu))
    MV = V.T @ (w[:, None] * (M @ V))
    return float(linalg.norm(MV - MV.conj().T) / linalg.norm(MV))


def apply_pointwise(model: WarpedMetricModel, mu: float, m: int, lam: complex, u: Callable,
                    step: float, form: str = EXACT) -> complex:
    """(P(lambda) u)(mu) with five-point finite differences."""
    off = step * np.arange(-2, 3)
    vals = np.array([u(mu + o) for o in off])
    d1 = (vals[0] - 8 * vals[1] + 8 * vals[3] - vals[4]) / (12.0 * step)
    d2 = (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12.0 * step ** 2)
    co = pencil_coefficients(model, np.array([mu]), m, form)
    out = 0j
    for power, key in enumerate(("A", "B", "C")):
        c2, c1, c0 = (np.asarray(c)[0] for c in co[key])
        out += lam ** power * (c2 * d2 + c1 * d1 + c0 * vals[2])
    return out


def probe_symbol_consistency(model: WarpedMetricModel, mu: float, xi: float, eta: float, lam: complex) -> float:
    """|h^2 (P u)/u - p_{h,z}| for u = exp(i xi mu/h), mode eta/h, h = 1/|lambda|."""
    h = 1.0 / abs(lam)
    z = lam * h
    m = eta / h
    u = lambda s: np.exp(1j * xi * s / h)
    val = h * h * apply_pointwise(model, mu, m, lam, u, step=h / 40.0) / u(mu)
    return float(abs(val - semiclassical_symbol(model, mu, xi, eta, z, form=EXACT)))
