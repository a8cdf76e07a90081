from __future__ import annotations
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .errors import BadParameters

log = logging.getLogger(__name__)

MIN_N = 16
LAYER_MIN_N = 16
LAYER_FRACTION = 4


def cheb_diff(N: int) -> Tuple[np.ndarray, np.ndarray]:
    """Chebyshev-Lobatto nodes cos(pi j/N) (descending) and the differentiation matrix."""
    j = np.arange(N + 1)
    t = np.cos(np.pi * j / N)
    c = np.hstack((2.0, np.ones(N - 1), 2.0)) * (-1.0) ** j
    dT = t[:, None] - t[None, :]
    D = np.outer(c, 1.0 / c) / (dT + np.eye(N + 1))
    # negative-sum trick: rows annihilate constants
    D = D - np.diag(D.sum(axis=1))
    return t, D


def clenshaw_curtis(N: int) -> np.ndarray:
    theta = np.pi * np.arange(N + 1) / N
    w = np.zeros(N + 1)
    ii = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N ** 2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k ** 2 - 1)
        v -= np.cos(N * theta[ii]) / (N ** 2 - 1)
    else:
        w[0] = w[N] = 1.0 / N ** 2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k ** 2 - 1)
    w[ii] = 2.0 * v / N
    return w


def _sinh_map(t: np.ndarray, delta0: float, mu_max: float, eps: float):
    A = np.arcsinh(mu_max / eps)
    B = -np.arcsinh(delta0 / eps)
    a = 0.5 * (A - B)
    b = 1.0 - A / a
    mu = eps * np.sinh(a * (t - b))
    dmu = eps * a * np.cosh(a * (t - b))
    return mu, dmu


def _patch(N: int, lo: float, hi: float, clustering: Optional[float]):
    """Nodes (descending), d/dmu and quadrature weights of one Chebyshev patch on [lo, hi]."""
    t, Dt = cheb_diff(N)
    if clustering is None or lo >= 0.0:
        mu = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
        dmu = np.full_like(t, 0.5 * (hi - lo))
    else:
        mu, dmu = _sinh_map(t, -lo, hi, float(clustering))
    mu[0], mu[-1] = hi, lo
    return t, mu, Dt / dmu[:, None], clenshaw_curtis(N) * dmu


@dataclass
class SpectralGrid:
    """Mapped Chebyshev-Lobatto grid on [-delta0, mu_max], nodes descending.

    A layered grid carries a second, affine patch on [-delta0, interface]; the interface node
    appears in both patches and the differentiation matrices are block diagonal.
    """
    N: int
    delta0: float
    mu_max: float
    clustering: Optional[float]
    nodes: np.ndarray = field(repr=False)
    D1: np.ndarray = field(repr=False)
    D2: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    interface: Optional[float] = None
    layer_start: Optional[int] = None

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def key(self) -> Tuple:
        return (self.N, self.delta0, self.mu_max, self.clustering, self.interface)

    @property
    def layered(self) -> bool:
        return self.layer_start is not None

    @property
    def layer(self) -> slice:
        return slice(self.layer_start, self.size) if self.layered else slice(0, 0)

    @property
    def constraint_rows(self) -> Tuple[int, ...]:
        """Rows the pencil replaces: the closure at mu_max and, on a layered grid, the two
        interface matching rows (value at the layer's first node, slope at its last)."""
        if not self.layered:
            return (0,)
        return (0, self.layer_start, self.size - 1)

    def check(self) -> dict:
        """Residuals of the grid identities."""
        one = np.ones(self.size)
        return {
            "d1_const": float(np.max(np.abs(self.D1 @ one))),
            "d1_linear": float(np.max(np.abs(self.D1 @ self.nodes - 1.0))),
            "d2_square": float(np.max(np.abs(self.D2 - self.D1 @ self.D1))),
            "quad_one": float(abs(self.weights.sum() - (self.mu_max + self.delta0))),
        }

    def integrate(self, values: np.ndarray) -> complex:
        return self.weights @ values

    @cached_property
    def laplacian_eig(self) -> Tuple[np.ndarray, np.ndarray]:
        """Eigenpairs of the symmetrized weak Laplacian W^{1/2}(W^{-1} D1^T W D1)W^{-1/2}."""
        sw = np.sqrt(self.weights)
        E = sw[:, None] * self.D1 / sw[None, :]
        lam, V = linalg.eigh(E.T @ E)
        return np.clip(lam, 0.0, None), V


def _validate(N, delta0, mu_max, clustering) -> None:
    if int(N) != N or N < MIN_N:
        raise BadParameters(f"grid size N must be an integer ≥ {MIN_N}, got {N}")
    if not (delta0 > 0 and mu_max > 0):
        raise BadParameters("delta0 and mu_max must be positive")
    if clustering is not None and clustering <= 0:
        raise BadParameters("clustering must be positive or null")


def build_grid(N: int, delta0: float, mu_max: float, clustering: Optional[float] = 0.2) -> SpectralGrid:
    _validate(N, delta0, mu_max, clustering)
    N = int(N)
    t, mu, D1, w = _patch(N, -delta0, mu_max, clustering)
    grid = SpectralGrid(N, float(delta0), float(mu_max), clustering, mu, D1, D1 @ D1, w, t)
    log.debug("Built grid N=%d on [%g, %g] clustering=%s", N, -delta0, mu_max, clustering)
    return grid


def layered_grid(grid: SpectralGrid, interface: float, layer_N: Optional[int] = None) -> SpectralGrid:
    """Same N on [interface, mu_max] plus an absorbing-layer patch on [-delta0, interface]."""
    if not (-grid.delta0 < interface < 0.0):
        raise BadParameters(f"layer interface must lie in (-delta0, 0), got {interface}")
    n_layer = int(layer_N or max(LAYER_MIN_N, grid.N // LAYER_FRACTION))
    _validate(n_layer, grid.delta0, grid.mu_max, grid.clustering)
    t0, mu0, D0, w0 = _patch(grid.N, interface, grid.mu_max, grid.clustering)
    t1, mu1, D1, w1 = _patch(n_layer, -grid.delta0, interface, None)
    Dl = linalg.block_diag(D0, D1)
    out = SpectralGrid(grid.N, grid.delta0, grid.mu_max, grid.clustering, np.concatenate([mu0, mu1]), Dl,
                       Dl @ Dl, np.concatenate([w0, w1]), np.concatenate([t0, t1]),
                       interface=float(interface), layer_start=grid.N + 1)
    log.debug("Layered grid N=%d + %d, interface %g", grid.N, n_layer, interface)
    return out


class SobolevScale:
    """Discrete (1 + (hD)^dagger (hD))^{s/2} on a grid.

    Norms are taken in the quadrature-weighted l2 space, so the weighted form of a matrix
    is W^{1/2} M W^{-1/2}.
    """

    def __init__(self, grid: SpectralGrid, s: float, h: float = 1.0):
        if not (0 < h <= 1.0):
            raise BadParameters(f"semiclassical h must lie in (0, 1], got {h}")
        self.grid = grid
        self.s = float(s)
        self.h = float(h)
        self._sw = np.sqrt(grid.weights)

    def _symmetric(self, s: float) -> np.ndarray:
        lam, V = self.grid.laplacian_eig
        g = (1.0 + self.h ** 2 * lam) ** (0.5 * s)
        return (V * g[None, :]) @ V.T

    def matrix(self, s: Optional[float] = None) -> np.ndarray:
        s = self.s if s is None else s
        return self._symmetric(s) * (1.0 / self._sw)[:, None] * self._sw[None, :]

    @property
    def W(self) -> np.ndarray:
        return self.matrix(self.s)

    @property
    def W_inv(self) -> np.ndarray:
        return self.matrix(-self.s)

    def weighted(self, M: np.ndarray) -> np.ndarray:
        """W^{1/2} M W^{-1/2}: the operator as seen in the weighted l2 norm."""
        return self._sw[:, None] * M / self._sw[None, :]

    def norm(self, u: np.ndarray, s: Optional[float] = None) -> float:
        s = self.s if s is None else s
        return float(np.linalg.norm(self._symmetric(s) @ (self._sw * u)))
