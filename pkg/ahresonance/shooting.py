"""x-coordinate oracles for the mode-m radial equation.

In x (mu = x^2) the mode equation (Delta_g - 1/4 - lambda^2) W = 0 reads
    -x^2 W'' - x^3 (f'/f) W' + (x^2 m^2 / f - 1/4 - lambda^2) W = 0,
with indicial exponents 1/2 -+ i lambda at x = 0. None of this goes through the extended
operator; it exists to check it.
"""
from __future__ import annotations
import cmath
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.integrate import solve_ivp

from .errors import FrobeniusDivergence, IndicialDegeneracy, NoConvergence
from .grid import cheb_diff
from .metric_model import DIRICHLET, NEUMANN, WarpedMetricModel

log = logging.getLogger(__name__)

MATCH_X = 0.1
MIN_MATCH_X = 1e-3
MAX_TERMS = 2000
SERIES_TOL = 1e-16


def warp_in_x(model: WarpedMetricModel) -> np.ndarray:
    """Coefficients F_i of F(x) = f(x^2), an exact polynomial for x > 0."""
    even = list(model.even_coeffs)
    deg = 2 * (len(even) - 1)
    if model.k is not None and model.odd_amplitude:
        deg = max(deg, 2 * model.k + 1)
    F = np.zeros(deg + 1)
    for j, c in enumerate(even):
        F[2 * j] += c
    if model.k is not None and model.odd_amplitude:
        F[2 * model.k + 1] += model.odd_amplitude
    return F


def outgoing_exponent(lam: complex) -> complex:
    return 0.5 - 1j * lam


def frobenius_coefficients(F: np.ndarray, m: int, lam: complex, rho: complex, n_terms: int) -> np.ndarray:
    """Series coefficients a_l of x^rho sum a_l x^l, a_0 = 1."""
    lam = complex(lam)

    def g(j):
        return -(j + rho) * (j + rho - 1.0) - 0.25 - lam * lam

    a = np.zeros(n_terms, dtype=complex)
    a[0] = 1.0
    scale = 1.0 + abs(lam) ** 2
    for l in range(1, n_terms):
        num = 0j
        for i in range(1, min(l, F.size - 1) + 1):
            if F[i]:
                num += F[i] * a[l - i] * (g(l - i) - 0.5 * i * (l - i + rho))
        if l >= 2:
            num += m * m * a[l - 2]
        den = F[0] * g(l)
        if abs(den) < 1e-12 * scale:
            if abs(num) < 1e-300:
                continue
            raise IndicialDegeneracy(f"exponents differ by the integer {l} at lambda = {lam}")
        a[l] = -num / den
    return a


def _series(F: np.ndarray, m: int, lam: complex, rho: complex, x: float) -> Tuple[complex, complex]:
    """W and W' at x from the Frobenius series, adaptively truncated."""
    chunk = 64
    n = chunk
    while n <= MAX_TERMS:
        a = frobenius_coefficients(F, m, lam, rho, n)
        powers = x ** np.arange(n)
        terms = a * powers
        if not np.all(np.isfinite(terms)):
            break
        S = np.sum(terms)
        tail = np.max(np.abs(terms[-4:]))
        if tail <= SERIES_TOL * max(abs(S), 1e-300):
            l = np.arange(n)
            dS = np.sum(l[1:] * a[1:] * x ** (l[1:] - 1.0))
            xr = cmath.exp(rho * math.log(x))
            return xr * S, xr * (dS + rho * S / x)
        n *= 2
    raise FrobeniusDivergence(f"series at x = {x} did not converge in {MAX_TERMS} terms")


def _rhs(model: WarpedMetricModel, m: int, lam: complex):
    c = 0.25 + lam * lam

    def rhs(x, y):
        mu = x * x
        f = float(model._f(mu))
        df = float(model._df(mu))
        return [y[1], -x * df / f * y[1] + (m * m / f - c / (x * x)) * y[0]]
    return rhs


def outgoing_solution(model: WarpedMetricModel, m: int, lam: complex, x_match: float = MATCH_X,
                      x_end: Optional[float] = None, rho: Optional[complex] = None) -> Tuple[complex, complex]:
    """(W, W') at x_end of the Frobenius solution x^rho (1 + O(x))."""
    F = warp_in_x(model)
    rho = outgoing_exponent(lam) if rho is None else rho
    x_end = math.sqrt(model.mu_max) if x_end is None else x_end
    x0 = min(x_match, x_end)
    while True:
        try:
            w0, dw0 = _series(F, m, lam, rho, x0)
            break
        except FrobeniusDivergence:
            x0 *= 0.5
            if x0 < MIN_MATCH_X:
                raise
            log.debug("shrinking matching point to %g", x0)
    if x0 >= x_end:
        return w0, dw0
    sol = solve_ivp(_rhs(model, m, complex(lam)), (x0, x_end), np.array([w0, dw0], dtype=complex),
                    method="DOP853", rtol=1e-12, atol=1e-14)
    if sol.status != 0:
        raise NoConvergence(f"shooting integration failed: {sol.message}")
    return complex(sol.y[0, -1]), complex(sol.y[1, -1])


def oracle_shooting(model: WarpedMetricModel, mode_m: int, lam: complex, x_match: float = MATCH_X) -> complex:
    """Connection determinant: zero exactly when the outgoing solution meets the outer condition."""
    x_end = math.sqrt(model.mu_max)
    W, dW = outgoing_solution(model, mode_m, lam, x_match, x_end)
    if model.inner_bc == DIRICHLET:
        return W
    # u = G W with G = x^{-1/2 + i lam}(1 + x^2)^{-i lam/4}
    g_ratio = (-0.5 + 1j * lam) / x_end - 0.25j * lam * 2.0 * x_end / (1.0 + x_end ** 2)
    return -(dW + g_ratio * W)


def branch_wronskian(model: WarpedMetricModel, m: int, lam: complex, x: float) -> Tuple[complex, complex]:
    """Wronskian of the two Frobenius branches at x and the closed form (rho_- - rho_+) sqrt(F(0)/F(x))."""
    F = warp_in_x(model)
    rp, rm = 0.5 - 1j * lam, 0.5 + 1j * lam
    wp, dwp = _series(F, m, lam, rp, x)
    wm, dwm = _series(F, m, lam, rm, x)
    Fx = np.polynomial.polynomial.polyval(x, F)
    return wp * dwm - dwp * wm, (rm - rp) * math.sqrt(F[0] / Fx)


def secant_zero(fn: Callable[[complex], complex], z0: complex, z1: complex, tol: float = 1e-12,
                max_iter: int = 60) -> complex:
    f0, f1 = fn(z0), fn(z1)
    trace = []
    for _ in range(max_iter):
        if f1 == f0:
            break
        z2 = z1 - f1 * (z1 - z0) / (f1 - f0)
        trace.append(abs(z2 - z1))
        z0, f0 = z1, f1
        z1, f1 = z2, fn(z2)
        if abs(z1 - z0) < tol * max(1.0, abs(z1)):
            return z1
    raise NoConvergence(f"secant did not converge from {z0}", trace)


def find_oracle_zeros(model: WarpedMetricModel, mode_m: int, rect: Sequence[float],
                      grid: Tuple[int, int] = (24, 12), parallel_map: Callable = map) -> List[complex]:
    """Zeros of the shooting determinant in rect = (re_min, re_max, im_min, im_max).

    Cells are screened by the winding of the determinant along their boundary, sampled at corners
    and edge midpoints, then polished by secant steps.
    """
    re_min, re_max, im_min, im_max = rect
    nx, ny = grid
    xs = np.linspace(re_min, re_max, 2 * nx + 1)
    ys = np.linspace(im_min, im_max, 2 * ny + 1)
    pts = [complex(x, y) for y in ys for x in xs]

    def safe(z):
        try:
            return oracle_shooting(model, mode_m, z)
        except IndicialDegeneracy:
            return np.nan
    vals = np.array(list(parallel_map(safe, pts)), dtype=complex).reshape(ys.size, xs.size)

    zeros: List[complex] = []
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    for iy in range(ny):
        for ix in range(nx):
            r0, c0 = 2 * iy, 2 * ix
            ring = ([vals[r0, c0 + k] for k in range(3)] + [vals[r0 + k, c0 + 2] for k in (1, 2)]
                    + [vals[r0 + 2, c0 + 2 - k] for k in (1, 2)] + [vals[r0 + 1, c0]] + [vals[r0, c0]])
            ring = np.asarray(ring)
            if not np.all(np.isfinite(ring)) or np.any(ring == 0):
                continue
            winding = np.sum(np.angle(ring[1:] / ring[:-1])) / (2.0 * np.pi)
            if abs(winding) < 0.5:
                continue
            center = complex(xs[c0 + 1], ys[r0 + 1])
            try:
                z = secant_zero(lambda q: oracle_shooting(model, mode_m, q), center, center + 0.25 * complex(hx, hy))
            except (NoConvergence, IndicialDegeneracy):
                continue
            if all(abs(z - w) > 1e-8 for w in zeros):
                zeros.append(z)
    log.info("oracle: %d zeros in %s", len(zeros), list(rect))
    return sorted(zeros, key=lambda z: (z.real, z.imag))


def _log_grid(x_min: float, x_max: float, N: int):
    t, Dt = cheb_diff(N)
    a, b = math.log(x_min), math.log(x_max)
    s = 0.5 * (b - a) * t + 0.5 * (b + a)
    return np.exp(s), Dt * (2.0 / (b - a))


def _log_operator(model: WarpedMetricModel, m: int, x: np.ndarray, Ds: np.ndarray) -> np.ndarray:
    """Delta_g for mode m in s = log x: -d_s^2 + (1 - x^2 f'/f) d_s + x^2 m^2/f."""
    mu = x * x
    f = model._f(mu)
    df = model._df(mu)
    return -Ds @ Ds + (1.0 - mu * df / f)[:, None] * Ds + np.diag(mu * m * m / f)


def direct_x_solve(model: WarpedMetricModel, m: int, lam: complex, rhs: Callable[[np.ndarray], np.ndarray],
                   x0: float = 1e-3, N: int = 160) -> Tuple[np.ndarray, np.ndarray]:
    """(Delta_g - 1/4 - lambda^2) u = rhs on [x0, sqrt(mu_max)] with u = 0 at both ends.

    Returns (x nodes, u), nodes descending.
    """
    x, Ds = _log_grid(x0, math.sqrt(model.mu_max), N)
    L = _log_operator(model, m, x, Ds).astype(complex) - (0.25 + lam * lam) * np.eye(x.size)
    b = np.asarray(rhs(x), dtype=complex).copy()
    L[0, :] = 0.0
    L[-1, :] = 0.0
    if model.inner_bc == NEUMANN:
        L[0, :] = Ds[0]
    else:
        L[0, 0] = 1.0
    L[-1, -1] = 1.0
    b[0] = b[-1] = 0.0
    return x, linalg.solve(L, b)


def truncated_eigenvalues(model: WarpedMetricModel, m: int, N: int = 160, x_min: float = 1e-6) -> List[complex]:
    """lambda = i sqrt(1/4 - E) for eigenvalues E < 1/4 of the truncated Dirichlet problem."""
    x, Ds = _log_grid(x_min, math.sqrt(model.mu_max), N)
    L = _log_operator(model, m, x, Ds)
    if model.inner_bc == NEUMANN:
        # eliminate the boundary value through the Neumann row
        row = Ds[0]
        elim = -row[1:-1] / row[0]
        inner = L[1:-1, 1:-1] + np.outer(L[1:-1, 0], elim)
    else:
        inner = L[1:-1, 1:-1]
    E = linalg.eigvals(inner)
    out = []
    for e in E:
        if abs(e.imag) < 1e-8 * max(1.0, abs(e)) and e.real < 0.25 - 1e-12:
            out.append(1j * math.sqrt(0.25 - e.real))
    return sorted(out, key=lambda z: -z.imag)
