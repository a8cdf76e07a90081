"""Resonances as poles of (P_lambda - i Q_lambda)^{-1}: scans, polishing, contour moments,
semiclassical resolvent norms, and cross-checks against the x-coordinate oracles.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.interpolate import BarycentricInterpolator

from .absorption import AbsorptionSpec, assemble_Q, is_polynomial, other_realization
from .errors import (AtPole, BranchCut, ContourThroughPole, IndicialDegeneracy, NoConvergence,
                     RankDeficientProbe, SpuriousCandidate, SupportViolation)
from .extended_operator import OperatorPencil, assemble_pencil
from .grid import SobolevScale, SpectralGrid, build_grid, layered_grid
from .metric_model import WarpedMetricModel, strip_bound
from .shooting import direct_x_solve, oracle_shooting, secant_zero

log = logging.getLogger(__name__)

STRIP_MARGIN = 0.1
RANK_TOL = 1e-10


class FredholmFamily:
    """lambda -> M(lambda) = P(lambda) - i Q(lambda) on one grid and mode.

    With absorption the grid is layered at the absorption onset -eps1. The layer is solved as a
    continuation from the interface, so M is block lower triangular and its singular set on the
    main patch does not see Q.
    """

    def __init__(self, model: WarpedMetricModel, spec: Optional[AbsorptionSpec], grid: SpectralGrid, mode_m: int):
        self.model = model
        self.spec = spec
        if spec is not None and not grid.layered:
            grid = layered_grid(grid, -spec.eps1)
        self.grid = grid
        self.mode = int(mode_m)
        self.base = assemble_pencil(model, grid, mode_m, open_edge=spec is None)
        self.polynomial = spec is None or is_polynomial(spec)
        if spec is not None and self.polynomial:
            self.pencil = self.base.with_absorption(assemble_Q(model, spec, grid, mode_m))
        else:
            self.pencil = self.base

    @property
    def size(self) -> int:
        return self.grid.size

    def at(self, lam: complex) -> np.ndarray:
        if self.polynomial:
            return self.pencil.at(lam)
        Q, _, _ = assemble_Q(self.model, self.spec, self.grid, self.mode, lam)
        # Q vanishes on the constraint rows
        return self.base.at(lam) - 1j * Q

    __call__ = at

    def derivative(self, lam: complex) -> np.ndarray:
        if self.polynomial:
            return self.pencil.derivative(lam)
        h = 1e-6 * max(1.0, abs(lam))
        return (self.at(lam + h) - self.at(lam - h)) / (2.0 * h)

    def singular_values(self, lam: complex, s: float = 1.0) -> np.ndarray:
        """Singular values of W_{s-1} M W_s^{-1} in the weighted norm, h = 1, descending."""
        sc = SobolevScale(self.grid, s)
        M = sc.matrix(s - 1.0) @ self.at(lam) @ sc.matrix(-s)
        return linalg.svdvals(sc.weighted(M))

    def sigma_min(self, lam: complex, s: float = 1.0) -> float:
        return float(self.singular_values(lam, s)[-1])

    def relative_sigma_min(self, lam: complex, s: float = 1.0) -> float:
        sv = self.singular_values(lam, s)
        return float(sv[-1] / sv[0])


def assemble_full(model: WarpedMetricModel, spec: Optional[AbsorptionSpec], grid: SpectralGrid,
                  mode_m: int, lam: complex) -> np.ndarray:
    return FredholmFamily(model, spec, grid, mode_m).at(lam)


def linearized_eigenvalues(A: np.ndarray, B: np.ndarray, C: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Finite eigenpairs of A + lambda B + lambda^2 C via companion linearization."""
    n = A.shape[0]
    L0 = np.block([[np.zeros((n, n)), np.eye(n)], [-A, -B]])
    L1 = np.block([[np.eye(n), np.zeros((n, n))], [np.zeros((n, n)), C]])
    e, X = linalg.eig(L0, L1)
    finite = np.isfinite(e)
    return e[finite], X[:n, finite]


def pencil_eigenvalues(pencil: OperatorPencil, rect: Optional[Sequence[float]] = None) -> np.ndarray:
    e, _ = linearized_eigenvalues(pencil.A, pencil.B, pencil.C)
    if rect is not None:
        re_min, re_max, im_min, im_max = rect
        e = e[(e.real >= re_min) & (e.real <= re_max) & (e.imag >= im_min) & (e.imag <= im_max)]
    return np.sort_complex(e)


@dataclass
class ScanResult:
    re: np.ndarray
    im: np.ndarray
    sigma: np.ndarray  # shape (len(im), len(re))
    candidates: List[complex]
    threshold: float


def clip_to_strip(model: WarpedMetricModel, rect: Sequence[float], exploratory: bool = False) -> List[float]:
    re_min, re_max, im_min, im_max = map(float, rect)
    if not exploratory:
        im_min = max(im_min, strip_bound(model) + STRIP_MARGIN)
    return [re_min, re_max, im_min, im_max]


def sigma_min_scan(family: FredholmFamily, rect: Sequence[float], resolution: Sequence[int], s: float = 1.0,
                   percentile: float = 10.0, parallel_map: Callable = map,
                   sigma: Optional[np.ndarray] = None) -> ScanResult:
    """sigma_min over a rectangle; local minima below the percentile threshold are candidates.

    A precomputed ``sigma`` field (from the scan cache) skips the evaluation.
    """
    re_min, re_max, im_min, im_max = rect
    nx, ny = map(int, resolution)
    re = np.linspace(re_min, re_max, nx)
    im = np.linspace(im_min, im_max, ny)
    if sigma is None:
        sc = SobolevScale(family.grid, s)
        left, right = sc.matrix(s - 1.0), sc.matrix(-s)

        def one(lam):
            try:
                return float(linalg.svdvals(sc.weighted(left @ family.at(lam) @ right))[-1])
            except BranchCut:
                return np.nan
        pts = [complex(x, y) for y in im for x in re]
        sigma = np.array(list(parallel_map(one, pts)), dtype=float).reshape(ny, nx)
    finite = sigma[np.isfinite(sigma)]
    threshold = float(np.percentile(finite, percentile)) if finite.size else 0.0
    candidates = []
    for iy in range(1, ny - 1):
        for ix in range(1, nx - 1):
            v = sigma[iy, ix]
            if not np.isfinite(v) or v > threshold:
                continue
            block = sigma[iy - 1:iy + 2, ix - 1:ix + 2]
            if v <= np.nanmin(block) and np.sum(block == v) == 1:
                candidates.append(complex(re[ix], im[iy]))
    log.info("scan %dx%d: %d candidates below %.3g", nx, ny, len(candidates), threshold)
    return ScanResult(re, im, sigma, candidates, threshold)


@dataclass
class RefinedPole:
    lam: complex
    newton_residual: float
    iterations: int
    trace: List[float] = field(default_factory=list)
    sigma_min: float = math.nan
    multiplicity: int = 1


def refine_pole(family: FredholmFamily, lam0: complex, tol: float = 1e-10, max_iter: int = 50,
                radius: float = 0.5, s: float = 1.0) -> RefinedPole:
    """Newton on det M: lambda <- lambda - 1/tr(M^{-1} M')."""
    lam = complex(lam0)
    trace: List[float] = []
    rel0 = family.relative_sigma_min(lam0, s)
    for it in range(1, max_iter + 1):
        try:
            lu = linalg.lu_factor(family.at(lam), check_finite=True)
        except (linalg.LinAlgError, ValueError):
            return RefinedPole(lam, 0.0, it, trace, 0.0)
        t = np.trace(linalg.lu_solve(lu, family.derivative(lam)))
        if not np.isfinite(t):
            # M is exactly singular here
            return RefinedPole(lam, 0.0, it, trace, 0.0)
        if t == 0:
            raise NoConvergence(f"degenerate Newton step at {lam}", trace)
        step = -1.0 / t
        lam = lam + step
        trace.append(abs(step))
        if abs(lam - lam0) > radius:
            raise SpuriousCandidate(f"Newton from {lam0} left the radius {radius}")
        if abs(step) < tol * max(1.0, abs(lam)):
            sv = family.singular_values(lam, s)
            rel = float(sv[-1] / sv[0])
            if rel > 1e-3 * rel0 and rel > 1e-10:
                raise SpuriousCandidate(f"sigma_min did not drop at {lam} ({rel0:.3g} -> {rel:.3g})")
            log.debug("refined %s -> %s in %d steps", lam0, lam, it)
            return RefinedPole(lam, abs(step), it, trace, float(sv[-1]))
    raise NoConvergence(f"Newton did not converge from {lam0}", trace)


@dataclass
class BeynResult:
    eigenvalues: List[complex]
    vectors: List[np.ndarray] = field(repr=False)
    residuals: List[float]
    rank: int


def beyn_contour(matrix_fn: Callable[[complex], np.ndarray], center: complex, radius: float,
                 n_nodes: int = 64, moments: int = 2, probe_rank: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None, rank_tol: float = RANK_TOL,
                 contour_tol: float = 1e-12) -> BeynResult:
    """Block-Hankel contour moments of M^{-1} V on |lambda - center| = radius."""
    rng = rng or np.random.default_rng(0)
    M0 = matrix_fn(center + radius)
    n = M0.shape[0]
    L = min(n, probe_rank or 8)
    V = rng.standard_normal((n, L)) + 1j * rng.standard_normal((n, L))
    theta = 2.0 * np.pi * (np.arange(n_nodes) + 0.5) / n_nodes
    A = [np.zeros((n, L), dtype=complex) for _ in range(2 * moments)]
    scale = 0.0
    for th in theta:
        lam = center + radius * np.exp(1j * th)
        M = matrix_fn(lam)
        sv = linalg.svdvals(M)
        if sv[-1] <= contour_tol * sv[0]:
            raise ContourThroughPole(f"contour passes through a pole near {lam}")
        X = linalg.solve(M, V)
        scale = max(scale, float(np.abs(X).max()))
        for p in range(2 * moments):
            A[p] += np.exp(1j * (p + 1) * th) * X
    A = [radius * a / n_nodes for a in A]
    H0 = np.block([[A[i + j] for j in range(moments)] for i in range(moments)])
    H1 = np.block([[A[i + j + 1] for j in range(moments)] for i in range(moments)])
    U, sig, Wh = linalg.svd(H0, full_matrices=False)
    rank = int(np.sum(sig > rank_tol * radius * scale))
    if rank == 0:
        return BeynResult([], [], [], 0)
    if rank >= L * moments:
        raise RankDeficientProbe(f"moment rank saturated at {rank}; enlarge the probe")
    Ur, Sr, Wr = U[:, :rank], sig[:rank], Wh[:rank].conj().T
    Bm = Ur.conj().T @ H1 @ Wr / Sr[None, :]
    zeta, S = linalg.eig(Bm)
    lams, vecs, res = [], [], []
    for z, svec in zip(zeta, S.T):
        if abs(z) >= 1.0:
            continue
        lam = center + radius * z
        v = (Ur @ svec)[:n]
        M = matrix_fn(lam)
        nv = np.linalg.norm(v)
        lams.append(complex(lam))
        vecs.append(v / nv if nv else v)
        res.append(float(np.linalg.norm(M @ v) / (nv * np.linalg.norm(M, 2))) if nv else math.inf)
    log.debug("beyn around %s r=%g: rank %d, %d inside", center, radius, rank, len(lams))
    return BeynResult(lams, vecs, res, rank)


def multiplicity(family: FredholmFamily, lam: complex, radius: float = 0.05) -> int:
    """Rank of the contour moments around a polished pole; shrinks the circle if it hits a neighbour."""
    r = radius
    for _ in range(4):
        try:
            return max(1, beyn_contour(family.at, lam, r).rank)
        except ContourThroughPole:
            r *= 0.5
    return 1


def _interior_projector(grid: SpectralGrid) -> np.ndarray:
    P = np.eye(grid.size)
    for i in grid.constraint_rows:
        P[i, i] = 0.0
    return P


def resolvent_norm(family: FredholmFamily, lam: complex, s: float) -> float:
    """||M(lambda)^{-1}|| from H^{s-1}_h to H^s_h with h = 1/|lambda|."""
    h = min(1.0, 1.0 / abs(lam)) if lam != 0 else 1.0
    sc = SobolevScale(family.grid, s, h)
    M = family.at(lam)
    sv = linalg.svdvals(sc.weighted(M))
    if sv[-1] <= 1e-15 * sv[0]:
        raise AtPole(f"M({lam}) is numerically singular")
    rhs = _interior_projector(family.grid) @ sc.matrix(-(s - 1.0))
    try:
        R = sc.matrix(s) @ linalg.solve(M, rhs)
    except linalg.LinAlgError as e:
        raise AtPole(str(e)) from e
    return float(linalg.svdvals(sc.weighted(R))[0])


def resolvent_apply(family: FredholmFamily, lam: complex, rhs: Callable[[np.ndarray], np.ndarray],
                    support_tol: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """R(lambda) f at the nodes with mu > 0, through the weighted extended problem.

    ``rhs`` is f as a function of x; returns (x, u) with x descending.
    """
    grid, model = family.grid, family.model
    mu = grid.nodes
    pos = mu > 0
    x = np.sqrt(np.where(pos, mu, 1.0))
    f = np.where(pos, np.asarray(rhs(x), dtype=complex), 0.0)
    scale = np.max(np.abs(f)) if f.size else 0.0
    if scale == 0:
        return x[pos], np.zeros(int(pos.sum()), dtype=complex)
    if np.any(np.abs(f[mu <= model.delta0]) > support_tol * scale):
        raise SupportViolation(f"right-hand side must vanish for mu <= delta0 = {model.delta0}")
    g = np.where(pos, x ** (1j * lam) * (1.0 + mu) ** (-0.25j * lam) * x ** -2.5 * f, 0.0)
    g[list(grid.constraint_rows)] = 0.0
    M = family.at(lam)
    try:
        v = linalg.solve(M, g)
    except linalg.LinAlgError as e:
        raise AtPole(str(e)) from e
    u = x ** (0.5 - 1j * lam) * (1.0 + mu) ** (0.25j * lam) * v
    return x[pos], u[pos]


def resolvent_oracle_gap(family: FredholmFamily, lam: complex, rhs: Callable[[np.ndarray], np.ndarray],
                         x0: float = 1e-3, N: int = 160) -> float:
    """Relative sup gap between resolvent_apply and the direct x-coordinate solve on mu >= delta0."""
    x, u = resolvent_apply(family, lam, rhs)
    xd, ud = direct_x_solve(family.model, family.mode, lam, rhs, x0, N)
    interp = BarycentricInterpolator(np.log(xd), ud)
    sel = x >= math.sqrt(family.model.delta0)
    ref = interp(np.log(x[sel]))
    scale = np.max(np.abs(ref))
    return float(np.max(np.abs(u[sel] - ref)) / scale) if scale else float(np.max(np.abs(u[sel])))


def indicial_degenerate(lam: complex, tol: float = 1e-6) -> bool:
    """2 i lambda a nonnegative integer."""
    q = 2j * lam
    return abs(q.imag) < tol and q.real > -tol and abs(q.real - round(q.real)) < tol


@dataclass
class Resonance:
    lam: complex
    sigma_min: float
    newton_residual: float
    multiplicity: int
    grid_history: List[Tuple[float, float]]
    absorption_drift: float
    beyond_strip: bool
    oracle: Optional[complex] = None
    indicial: bool = False
    mu_max_drift: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "lambda_re": self.lam.real,
            "lambda_im": self.lam.imag,
            "sigma_min": self.sigma_min,
            "newton_residual": self.newton_residual,
            "multiplicity": self.multiplicity,
            "grid_history": [list(p) for p in self.grid_history],
            "absorption_drift": self.absorption_drift,
            "beyond_strip": self.beyond_strip,
        }


@dataclass
class ResonanceReport:
    mode: int
    strip_bound: float
    resonances: List[Resonance]
    rejected: List[Dict] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {"mode": self.mode, "strip_bound": self.strip_bound,
                "resonances": [r.to_dict() for r in self.resonances]}

    @property
    def oracle_mismatches(self) -> List[complex]:
        return [r.lam for r in self.resonances if not r.indicial and not r.beyond_strip and r.oracle is None]


def _drift(family: FredholmFamily, lam: complex, newton_tol: float, max_iter: int) -> float:
    try:
        return abs(refine_pole(family, lam, newton_tol, max_iter).lam - lam)
    except (NoConvergence, SpuriousCandidate, BranchCut) as e:
        log.warning("drift refinement at %s failed: %s", lam, e)
        return math.inf


def _candidates(family: FredholmFamily, rect: Sequence[float], resolution: Sequence[int], s: float,
                percentile: float, parallel_map: Callable, sigma: Optional[np.ndarray] = None) -> List[complex]:
    if family.polynomial and sigma is None:
        return list(pencil_eigenvalues(family.pencil, rect))
    return sigma_min_scan(family, rect, resolution, s, percentile, parallel_map, sigma).candidates


def resonance_report(model: WarpedMetricModel, spec: AbsorptionSpec, N: int, clustering: Optional[float],
                     mode_m: int, rect: Sequence[float], resolution: Sequence[int] = (64, 32), s: float = 1.0,
                     percentile: float = 10.0, newton_tol: float = 1e-10, max_iter: int = 50,
                     match_tol: float = 1e-4, drift_tol: float = 1e-6, contour_radius: float = 0.05,
                     check_mu_max: bool = False, exploratory: bool = False,
                     parallel_map: Callable = map, sigma: Optional[np.ndarray] = None) -> ResonanceReport:
    bound = strip_bound(model)
    rect = clip_to_strip(model, rect, exploratory)
    grid = build_grid(N, model.delta0, model.mu_max, clustering)
    family = FredholmFamily(model, spec, grid, mode_m)
    fine = FredholmFamily(model, spec, build_grid(2 * N, model.delta0, model.mu_max, clustering), mode_m)
    variants = [other_realization(spec), spec.replace(eps1=0.5 * spec.eps1), spec.replace(C_abs=2.0 * spec.C_abs)]
    var_families = [FredholmFamily(model, v, grid, mode_m) for v in variants]

    found: List[Resonance] = []
    rejected: List[Dict] = []
    for cand in _candidates(family, rect, resolution, s, percentile, parallel_map, sigma):
        try:
            pole = refine_pole(family, cand, newton_tol, max_iter, s=s)
        except (NoConvergence, SpuriousCandidate, BranchCut) as e:
            rejected.append({"candidate": [cand.real, cand.imag], "reason": type(e).__name__})
            continue
        lam = pole.lam
        re_min, re_max, im_min, im_max = rect
        if not (re_min <= lam.real <= re_max and im_min <= lam.imag <= im_max):
            continue
        if any(abs(lam - r.lam) < match_tol for r in found):
            continue
        try:
            lam_fine = refine_pole(fine, lam, newton_tol, max_iter).lam
            grid_drift = abs(lam_fine - lam)
        except (NoConvergence, SpuriousCandidate, BranchCut):
            lam_fine, grid_drift = lam, math.inf
        if grid_drift > drift_tol:
            rejected.append({"candidate": [lam.real, lam.imag], "reason": "grid_drift", "drift": grid_drift})
            if not exploratory:
                continue
        abs_drift = max(_drift(f, lam, newton_tol, max_iter) for f in var_families)
        if abs_drift > drift_tol:
            rejected.append({"candidate": [lam.real, lam.imag], "reason": "absorption_drift", "drift": abs_drift})
            if not exploratory:
                continue
        res = Resonance(lam, pole.sigma_min, pole.newton_residual, multiplicity(family, lam, contour_radius),
                        [(lam.real, lam.imag), (lam_fine.real, lam_fine.imag)], abs_drift,
                        lam.imag < bound + STRIP_MARGIN, indicial=indicial_degenerate(lam))
        if check_mu_max:
            wide = model.with_mu_max(1.5 * model.mu_max)
            wide_family = FredholmFamily(wide, spec, build_grid(N, wide.delta0, wide.mu_max, clustering), mode_m)
            res.mu_max_drift = _drift(wide_family, lam, newton_tol, max_iter)
        if not res.indicial:
            try:
                z = secant_zero(lambda q: oracle_shooting(model, mode_m, q), lam, lam + 1e-4)
                if abs(z - lam) < match_tol:
                    res.oracle = z
            except (NoConvergence, IndicialDegeneracy) as e:
                log.warning("oracle confirmation at %s failed: %s", lam, e)
        log.info("pole %s: mult %d, grid drift %.2g, absorption drift %.2g, oracle %s",
                 lam, res.multiplicity, grid_drift, abs_drift, "ok" if res.oracle is not None else "none")
        found.append(res)
    found.sort(key=lambda r: (-r.lam.imag, r.lam.real))
    return ResonanceReport(int(mode_m), bound, found, rejected)


def estimate_sweep(model: WarpedMetricModel, spec: AbsorptionSpec, re_values: Sequence[float], im_value: float,
                   s_values: Sequence[float], mode_m: int = 0, N: int = 200, points_per_wavelength: float = 6.0,
                   clustering: Optional[float] = 0.2, parallel_map: Callable = map) -> List[Dict]:
    """Rows (re_lambda, im_lambda, s, norm, lambda_times_norm) of the semiclassical resolvent bound."""
    def row_block(re):
        lam = complex(re, im_value)
        n = max(int(N), int(math.ceil(points_per_wavelength * abs(lam))))
        family = FredholmFamily(model, spec, build_grid(n, model.delta0, model.mu_max, clustering), mode_m)
        out = []
        for s in s_values:
            norm = resolvent_norm(family, lam, s)
            out.append({"re_lambda": float(re), "im_lambda": float(im_value), "s": float(s),
                        "norm": norm, "lambda_times_norm": abs(lam) * norm})
        log.info("estimate |lambda| = %.3g on N = %d", abs(lam), n)
        return out
    rows = []
    for block in parallel_map(row_block, list(re_values)):
        rows.extend(block)
    return rows


def estimate_spread(rows: Sequence[Dict]) -> Dict[float, float]:
    """max/median of |lambda| * norm for each s."""
    out = {}
    for s in sorted({r["s"] for r in rows}):
        v = np.array([r["lambda_times_norm"] for r in rows if r["s"] == s])
        out[s] = float(v.max() / np.median(v))
    return out
