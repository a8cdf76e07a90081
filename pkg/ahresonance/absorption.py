from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import linalg

from .errors import BadParameters, BranchCut, SquareRootFailure
from .extended_operator import a2, semiclassical_symbol
from .grid import SpectralGrid, layered_grid
from .metric_model import WarpedMetricModel

log = logging.getLogger(__name__)

MATRIX_FUNCTION = "matrix_function"
PRINCIPAL_POLYNOMIAL = "principal_polynomial"
REALIZATIONS = (MATRIX_FUNCTION, PRINCIPAL_POLYNOMIAL)


@dataclass(frozen=True)
class AbsorptionSpec:
    """Complex absorption supported in mu < -eps1 with a unit plateau at mu = -delta0."""
    eps1: float
    delta0: float
    C_abs: float = 1.0
    sharpness: float = 1.0
    realization: str = PRINCIPAL_POLYNOMIAL
    amplitude: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.eps1 < self.delta0):
            raise BadParameters(f"eps1 must lie in (0, delta0={self.delta0}), got {self.eps1}")
        if self.C_abs <= 0:
            raise BadParameters("C_abs must be positive")
        if self.sharpness <= 0:
            raise BadParameters("sharpness must be positive")
        if self.realization not in REALIZATIONS:
            raise BadParameters(f"realization must be one of {REALIZATIONS}, got {self.realization!r}")
        if self.amplitude < 0:
            raise BadParameters("amplitude must be ≥ 0")

    def replace(self, **changes) -> "AbsorptionSpec":
        data = dict(eps1=self.eps1, delta0=self.delta0, C_abs=self.C_abs, sharpness=self.sharpness,
                    realization=self.realization, amplitude=self.amplitude)
        data.update(changes)
        return AbsorptionSpec(**data)

    def to_dict(self) -> Dict[str, Any]:
        return dict(eps1=self.eps1, C_abs=self.C_abs, sharpness=self.sharpness,
                    realization=self.realization, amplitude=self.amplitude)


def absorption_from_config(section: Dict[str, Any], model: WarpedMetricModel) -> AbsorptionSpec:
    return AbsorptionSpec(eps1=float(section["eps1"]), delta0=model.delta0, C_abs=float(section["C_abs"]),
                          sharpness=float(section["sharpness"]), realization=section["realization"],
                          amplitude=float(section["amplitude"]))


def other_realization(spec: AbsorptionSpec) -> AbsorptionSpec:
    swap = MATRIX_FUNCTION if spec.realization == PRINCIPAL_POLYNOMIAL else PRINCIPAL_POLYNOMIAL
    return spec.replace(realization=swap)


def chi_profile(mu, spec: AbsorptionSpec):
    """Smooth step: 0 for mu >= -eps1 (flat contact), 1 on mu <= -delta0."""
    mu = np.asarray(mu, dtype=float)
    t = (-spec.eps1 - mu) / (spec.delta0 - spec.eps1)
    out = np.zeros_like(t)
    inside = (t > 0) & (t < 1)
    ti = t[inside]
    e0 = np.exp(-spec.sharpness / ti)
    e1 = np.exp(-spec.sharpness / (1.0 - ti))
    out[inside] = e0 / (e0 + e1)
    out[t >= 1] = 1.0
    return spec.amplitude * out


def _on_cut(arg, tol: float = 1e-12) -> np.ndarray:
    arg = np.asarray(arg, dtype=complex)
    scale = np.maximum(1.0, np.abs(arg))
    return (np.abs(arg.imag) <= tol * scale) & (arg.real <= 0.0)


def q_symbol(model: WarpedMetricModel, spec: AbsorptionSpec, mu, xi, eta, z, h=0.0):
    """2[2(1+a2) xi + z] (xi^2 + |eta|^2 + z^2 + C^2 h^2)^{1/2} chi(mu), principal branch."""
    mu = np.asarray(mu, dtype=float)
    xi = np.asarray(xi, dtype=float)
    chi = chi_profile(mu, spec)
    arg = xi ** 2 + np.asarray(eta) ** 2 / model._f(mu) + z * z + (spec.C_abs * h) ** 2 + 0j
    cut = _on_cut(arg) & (chi > 0)
    if np.any(cut):
        raise BranchCut(f"square-root argument on the branch cut at {int(np.sum(cut))} point(s)")
    val = 2.0 * (2.0 * (1.0 + a2(mu)) * xi + z) * np.sqrt(arg) * chi
    return val if val.ndim else complex(val)


EIGENBASIS_TOL = 1e-8


def _layer_block(grid: SpectralGrid, spec: AbsorptionSpec) -> slice:
    if not grid.layered:
        raise BadParameters("absorption is assembled on a layered grid (see grid.layered_grid)")
    if grid.interface < -spec.eps1 - 1e-14:
        raise BadParameters(f"layer interface {grid.interface} lies below the absorption onset {-spec.eps1}")
    return grid.layer


def _weak_laplacian(grid: SpectralGrid, L: slice) -> np.ndarray:
    """W^{1/2}(W^{-1} D1^T W D1)W^{-1/2} on the layer patch, symmetric positive semidefinite."""
    sw = np.sqrt(grid.weights[L])
    E = sw[:, None] * grid.D1[L, L] / sw[None, :]
    return E.T @ E


def _modulus_operator(model: WarpedMetricModel, grid: SpectralGrid, L: slice, m: int) -> np.ndarray:
    return _weak_laplacian(grid, L) + np.diag(m * m / model.eval_h(grid.nodes[L]))


def _psd_eig(Ks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    try:
        lam, V = linalg.eigh(Ks)
    except (linalg.LinAlgError, ValueError) as e:
        raise SquareRootFailure(f"eigendecomposition of the modulus operator failed: {e}") from e
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(V))):
        raise SquareRootFailure("non-finite spectrum in the modulus operator")
    defect = float(np.max(np.abs(V.T @ V - np.eye(len(lam)))))
    if defect > EIGENBASIS_TOL:
        raise SquareRootFailure(f"eigenbasis of the modulus operator is not orthonormal (defect {defect:.2e})")
    return np.clip(lam, 0.0, None), V


def _modulus_eig(model: WarpedMetricModel, grid: SpectralGrid, L: slice, m: int):
    cache = grid.__dict__.setdefault("_modulus_eig", {})
    key = (m, model.model_hash)
    if key not in cache:
        cache[key] = _psd_eig(_modulus_operator(model, grid, L, m))
    return cache[key]


def _unweight(grid: SpectralGrid, L: slice, T: np.ndarray) -> np.ndarray:
    sw = np.sqrt(grid.weights[L])
    return T / sw[:, None] * sw[None, :]


def _regularized_modulus(model: WarpedMetricModel, grid: SpectralGrid, L: slice, m: int, C2: float):
    """K (K + C^2)^{-1/2} through a Schur square root, no eigenbasis needed."""
    Ks = _modulus_operator(model, grid, L, m)
    R = np.real(linalg.sqrtm(Ks + C2 * np.eye(Ks.shape[0])))
    return _unweight(grid, L, linalg.solve(R, Ks, assume_a="pos"))


def _sym_w(w: np.ndarray, T: np.ndarray) -> np.ndarray:
    return 0.5 * (T + (T.conj().T * w[None, :]) / w[:, None])


def _first_order_factor(spec: AbsorptionSpec, grid: SpectralGrid, L: slice):
    mu = grid.nodes[L]
    chi = chi_profile(mu, spec)
    T0 = (chi * 2.0 * (1.0 + a2(mu)))[:, None] * (-1j * grid.D1[L, L])
    return _sym_w(grid.weights[L], T0), np.diag(chi).astype(complex)


def support_mask(grid: SpectralGrid, spec: AbsorptionSpec) -> np.ndarray:
    """Rows where Q may be nonzero: mu < -eps1, minus the pencil's constraint rows."""
    mask = (grid.nodes < -spec.eps1).astype(float)
    mask[list(grid.constraint_rows)] = 0.0
    return mask


def _embed(grid: SpectralGrid, spec: AbsorptionSpec, L: slice, QL: np.ndarray) -> np.ndarray:
    rows = support_mask(grid, spec)[L]
    cols = (grid.nodes[L] < -spec.eps1).astype(float)
    Q = np.zeros((grid.size, grid.size), dtype=complex)
    Q[L, L] = rows[:, None] * QL * cols[None, :]
    return Q


def assemble_Q(model: WarpedMetricModel, spec: AbsorptionSpec, grid: SpectralGrid, mode_m: int,
               lam: complex = 0.0):
    """Matrix triple (Q0, Q1, Q2) with Q(lambda) = Q0 + lambda Q1 + lambda^2 Q2.

    Q acts inside the absorbing layer of ``grid`` only. principal_polynomial is affine in
    lambda; matrix_function is evaluated at ``lam`` and returned as a constant triple, falling
    back to principal_polynomial when the eigenbasis of the modulus operator is unusable.
    """
    L = _layer_block(grid, spec)
    n = grid.size
    zero = np.zeros((n, n), dtype=complex)
    if spec.amplitude == 0.0 or not support_mask(grid, spec).any():
        return zero, zero.copy(), zero.copy()
    S0, S1 = _first_order_factor(spec, grid, L)
    C2 = spec.C_abs ** 2
    if spec.realization == MATRIX_FUNCTION:
        try:
            lam_k, V = _modulus_eig(model, grid, L, mode_m)
        except SquareRootFailure as e:
            log.warning("matrix square root failed (%s); using principal_polynomial", e)
            Q0, Q1, _ = assemble_Q(model, spec.replace(realization=PRINCIPAL_POLYNOMIAL), grid, mode_m)
            return Q0 + lam * Q1, zero, zero.copy()
        arg = lam_k + lam * lam + C2 + 0j
        if np.any(_on_cut(arg)):
            raise BranchCut(f"lambda = {lam} puts the modulus square root on its cut")
        S = _unweight(grid, L, (V * np.sqrt(arg)[None, :]) @ V.T)
        return _embed(grid, spec, L, (S0 + lam * S1) @ S), zero, zero.copy()
    S = _regularized_modulus(model, grid, L, mode_m, C2).astype(complex)
    return _embed(grid, spec, L, S0 @ S), _embed(grid, spec, L, S1 @ S), zero


def is_polynomial(spec: AbsorptionSpec) -> bool:
    return spec.realization == PRINCIPAL_POLYNOMIAL or spec.amplitude == 0.0


def numerical_range_probe(model: WarpedMetricModel, spec: AbsorptionSpec, grid: SpectralGrid, lam: complex,
                          xi: float, center: float, width: float, mode_m: int = 0) -> float:
    """Re <Q v, v>_W / <v, v>_W for v a Gaussian wave packet of frequency xi.

    A single-patch grid is layered at -eps1 first.
    """
    if not grid.layered:
        grid = layered_grid(grid, -spec.eps1)
    mu = grid.nodes
    v = np.exp(-0.5 * ((mu - center) / width) ** 2 + 1j * xi * mu)
    Q0, Q1, Q2 = assemble_Q(model, spec, grid, mode_m, lam)
    Qv = (Q0 + lam * Q1 + lam * lam * Q2) @ v
    w = grid.weights
    return float(np.real(np.sum(w * np.conj(v) * Qv)) / np.real(np.sum(w * np.abs(v) ** 2)))


@dataclass
class SignConditionsReport:
    margin_elliptic: float
    margin_sign: float
    margin_edge: float
    branch_cut_points: int
    n_samples: int
    notes: list = field(default_factory=list)

    @property
    def all_positive(self) -> bool:
        return self.margin_elliptic > 0 and self.margin_sign >= 0 and self.margin_edge > 0 \
            and self.branch_cut_points == 0


def default_phase_grid(model: WarpedMetricModel, spec: AbsorptionSpec, n: int = 20, radius: float = 10.0):
    mu = np.linspace(-model.delta0, -spec.eps1, n)
    xi = np.concatenate([-np.geomspace(radius, 0.5, n // 2), np.geomspace(0.5, radius, n // 2)])
    eta = np.linspace(-radius, radius, n)
    return mu, xi, eta


def sign_conditions_report(model: WarpedMetricModel, spec: AbsorptionSpec, phase_grid, z: complex,
                           edge_fraction: float = 0.25) -> SignConditionsReport:
    """Ellipticity of p - i q near the edge and the sign of q on the characteristic set."""
    mu_v, xi_v, eta_v = (np.asarray(a, dtype=float) for a in phase_grid)
    MU, XI, ETA = (a.ravel() for a in np.meshgrid(mu_v, xi_v, eta_v, indexing="ij"))

    # characteristic completions: eta^2 = f(-4 mu xi^2 + 4(1+a2) z xi + z^2) when nonnegative
    mu2, xi2 = (a.ravel() for a in np.meshgrid(mu_v, xi_v, indexing="ij"))
    rhs = model._f(mu2) * (-4.0 * mu2 * xi2 ** 2 + 4.0 * (1.0 + a2(mu2)) * np.real(z) * xi2 + np.real(z) ** 2)
    ok = rhs >= 0
    char_mu, char_xi, char_eta = mu2[ok], xi2[ok], np.sqrt(rhs[ok])

    def _q(mu, xi, eta):
        arg = xi ** 2 + eta ** 2 / model._f(mu) + z * z + 0j
        cut = _on_cut(arg) & (chi_profile(mu, spec) > 0)
        q = np.full(mu.shape, np.nan, dtype=complex)
        good = ~cut
        q[good] = q_symbol(model, spec, mu[good], xi[good], eta[good], z)
        return q, int(np.sum(cut))

    q_all, cut_all = _q(MU, XI, ETA)
    q_char, cut_char = _q(char_mu, char_xi, char_eta)
    branch_points = cut_all + cut_char

    edge_cut = -model.delta0 + edge_fraction * (model.delta0 - spec.eps1)
    all_mu = np.concatenate([MU, char_mu])
    all_xi = np.concatenate([XI, char_xi])
    all_eta = np.concatenate([ETA, char_eta])
    all_q = np.concatenate([q_all, q_char])
    near = (all_mu <= edge_cut) & np.isfinite(all_q)
    p = semiclassical_symbol(model, all_mu[near], all_xi[near], all_eta[near], z)
    weight = all_xi[near] ** 2 + all_eta[near] ** 2 + 1.0
    margin_i = float(np.min(np.abs(p - 1j * all_q[near]) / weight)) if near.any() else float("nan")

    bracket = 2.0 * (1.0 + a2(char_mu)) * char_xi + np.real(z)
    finite = np.isfinite(q_char)
    signed = np.sign(bracket[finite]) * np.real(q_char[finite])
    margin_ii = float(np.min(signed)) if signed.size else float("nan")

    at_edge = np.isclose(char_mu, -model.delta0) & finite
    if at_edge.any():
        w_edge = char_xi[at_edge] ** 2 + char_eta[at_edge] ** 2 + 1.0
        margin_iii = float(np.min(np.abs(q_char[at_edge]) / w_edge))
    else:
        margin_iii = float("nan")

    report = SignConditionsReport(margin_i, margin_ii, margin_iii, branch_points, int(MU.size + char_mu.size))
    if branch_points:
        report.notes.append("square-root argument on the branch cut at some samples")
    log.info("sign conditions: elliptic=%.3e sign=%.3e edge=%.3e cut=%d",
             margin_i, margin_ii, margin_iii, branch_points)
    return report
