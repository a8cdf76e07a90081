"""Periodic-grid probes of the calculus for symbols with finitely many Sobolev derivatives.

Symbols are finite sums of separable terms c(z) p(j) on the N-point grid z_k = 2 pi k / N,
with integer frequencies j. Everything is one-dimensional: the rough variable is the only
direction probed.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sfft
from scipy import linalg

from .errors import BadParameters

log = logging.getLogger(__name__)

BOUNDED = "bounded"
GROWING = "growing"
INCONCLUSIVE = "inconclusive"

DECAY_EXTRA = 0.05
DEFAULT_N = (32, 64, 128, 256)
GROWTH_RATIO = 1.3
BOUND_RATIO = 2.0


def frequencies(N: int) -> np.ndarray:
    return sfft.fftfreq(N, d=1.0 / N)


def japanese(N: int, s: float) -> np.ndarray:
    """<j>^s = (1 + j^2)^{s/2} on the frequency grid."""
    j = frequencies(N)
    return (1.0 + j * j) ** (0.5 * s)


def _check_N(N: int) -> None:
    if N < 4 or N & (N - 1):
        raise BadParameters(f"grid size must be a power of two, got {N}")


def make_rough_coefficient(r: float, seed: int, N: int, scale: float = 1.0) -> np.ndarray:
    """Real random Fourier series with |c_j| = |j|^{-r-1/2-0.05}.

    Phases are drawn in increasing |j|, so two grid sizes share their low modes.
    """
    if r <= 0:
        raise BadParameters(f"regularity must be positive, got {r}")
    _check_N(N)
    half = N // 2
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, half - 1)
    j = np.arange(1, half)
    amp = scale * j ** (-(r + 0.5 + DECAY_EXTRA))
    chat = np.zeros(N, dtype=complex)
    chat[1:half] = amp * np.exp(1j * phases)
    chat[N - half + 1:] = np.conj(chat[1:half][::-1])
    return np.real(sfft.ifft(chat) * N)


def coefficient_abs_sum(r: float, N: int) -> float:
    j = np.arange(1, N // 2)
    return float(2.0 * np.sum(j ** (-(r + 0.5 + DECAY_EXTRA))))


def smooth_coefficient(N: int) -> np.ndarray:
    """A trigonometric polynomial; stands in for r = infinity."""
    z = grid_points(N)
    return 0.5 * np.cos(z) + 0.25 * np.sin(2.0 * z)


def grid_points(N: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(N) / N


def sobolev_norm(u: np.ndarray, s: float) -> float:
    """(sum_j <j>^{2s} |u_j|^2)^{1/2} with u_j the Fourier coefficients of u."""
    uhat = sfft.fft(u) / u.size
    return float(np.sqrt(np.sum(japanese(u.size, 2.0 * s) * np.abs(uhat) ** 2)))


@dataclass
class RoughSymbol:
    """sum_t c_t(z) p_t(j); ``order`` and ``regularity`` are labels carried for reports."""
    N: int
    terms: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    order: float = 0.0
    regularity: float = np.inf

    @classmethod
    def separable(cls, coefficient, profile: Callable[[np.ndarray], np.ndarray], N: int,
                  order: float = 0.0, regularity: float = np.inf) -> "RoughSymbol":
        c = np.broadcast_to(np.asarray(coefficient, dtype=complex), (N,)).copy()
        p = np.broadcast_to(np.asarray(profile(frequencies(N)), dtype=complex), (N,)).copy()
        return cls(N, [(c, p)], order, regularity)

    @classmethod
    def fiber_only(cls, profile: Callable[[np.ndarray], np.ndarray], N: int, order: float = 0.0) -> "RoughSymbol":
        return cls.separable(1.0, profile, N, order)

    @classmethod
    def coefficient_only(cls, coefficient: np.ndarray, regularity: float = np.inf) -> "RoughSymbol":
        c = np.asarray(coefficient)
        return cls.separable(c, lambda j: np.ones_like(j), c.size, 0.0, regularity)

    def __add__(self, other: "RoughSymbol") -> "RoughSymbol":
        if other.N != self.N:
            raise BadParameters("symbols live on different grids")
        return RoughSymbol(self.N, self.terms + other.terms, max(self.order, other.order),
                           min(self.regularity, other.regularity))

    def __mul__(self, other: "RoughSymbol") -> "RoughSymbol":
        if other.N != self.N:
            raise BadParameters("symbols live on different grids")
        terms = [(c1 * c2, p1 * p2) for c1, p1 in self.terms for c2, p2 in other.terms]
        return RoughSymbol(self.N, terms, self.order + other.order, min(self.regularity, other.regularity))

    def conj(self) -> "RoughSymbol":
        return RoughSymbol(self.N, [(np.conj(c), np.conj(p)) for c, p in self.terms], self.order, self.regularity)

    def values(self) -> np.ndarray:
        """a(z_k, j) as an N x N array."""
        out = np.zeros((self.N, self.N), dtype=complex)
        for c, p in self.terms:
            out += np.outer(c, p)
        return out


@dataclass
class QuantizedOperator:
    matrix: np.ndarray
    symbol: RoughSymbol = field(repr=False)

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Transform path: sum_t c_t * ifft(p_t * fft(u))."""
        uhat = sfft.fft(u)
        out = np.zeros(self.symbol.N, dtype=complex)
        for c, p in self.symbol.terms:
            out += c * sfft.ifft(p * uhat)
        return out


def fourier_multiplier(p: np.ndarray) -> np.ndarray:
    N = p.size
    if np.all(p == p[0]):
        return p[0] * np.eye(N, dtype=complex)
    return sfft.ifft(p[:, None] * sfft.fft(np.eye(N), axis=0), axis=0)


def quantize(symbol: RoughSymbol) -> QuantizedOperator:
    """Kohn-Nirenberg matrix (1/N) sum_j a(z_k, j) e^{i j (z_k - z_l)}."""
    N = symbol.N
    A = np.zeros((N, N), dtype=complex)
    for c, p in symbol.terms:
        M = fourier_multiplier(p)
        A += M if np.all(c == 1) else c[:, None] * M
    return QuantizedOperator(A, symbol)


def lambda_power(N: int, s: float) -> np.ndarray:
    return fourier_multiplier(japanese(N, s).astype(complex))


def operator_norm(A: np.ndarray, source: float, target: float) -> float:
    """Norm of A as a map H^source -> H^target."""
    N = A.shape[0]
    M = lambda_power(N, target) @ A @ lambda_power(N, -source)
    return float(linalg.svdvals(M)[0])


def verdict(norms: Sequence[float]) -> str:
    norms = np.asarray(norms, dtype=float)
    ratios = norms[1:] / np.maximum(norms[:-1], 1e-300)
    if np.all(ratios > GROWTH_RATIO):
        return GROWING
    if norms[-1] < BOUND_RATIO * max(norms[0], 1e-300):
        return BOUNDED
    return INCONCLUSIVE


def majority(verdicts: Sequence[str]) -> Tuple[str, int]:
    counts = {v: list(verdicts).count(v) for v in set(verdicts)}
    best = max(sorted(counts), key=lambda v: counts[v])
    return best, counts[best]


@dataclass
class ProbeResult:
    probe: str
    params: Dict[str, float]
    N_list: Tuple[int, ...]
    norms: Dict[int, List[float]]
    verdicts: Dict[int, str]

    @property
    def verdict(self) -> str:
        return majority(list(self.verdicts.values()))[0]

    @property
    def agreement(self) -> int:
        return majority(list(self.verdicts.values()))[1]

    def rows(self) -> List[Dict]:
        out = []
        for seed, norms in self.norms.items():
            for N, value in zip(self.N_list, norms):
                out.append({"probe": self.probe, "m": self.params.get("m", np.nan),
                            "r": self.params.get("r", np.nan), "s": self.params.get("s", np.nan),
                            "tau": self.params.get("tau", np.nan), "N": N, "seed": seed,
                            "norm": value, "verdict": self.verdicts[seed]})
        return out


def _sweep(probe: str, params: Dict[str, float], norm_at: Callable[[int, int], float],
           N_list: Sequence[int], seeds: Sequence[int], parallel_map: Callable = map) -> ProbeResult:
    cells = [(seed, N) for seed in seeds for N in N_list]
    values = list(parallel_map(lambda cell: norm_at(*cell), cells))
    norms: Dict[int, List[float]] = {}
    for (seed, _), v in zip(cells, values):
        norms.setdefault(seed, []).append(v)
    verdicts = {seed: verdict(n) for seed, n in norms.items()}
    res = ProbeResult(probe, params, tuple(N_list), norms, verdicts)
    log.debug("%s %s -> %s (%d/%d)", probe, params, res.verdict, res.agreement, len(seeds))
    return res


def _bracket(m: float):
    return lambda j: (1.0 + j * j) ** (0.5 * m)


def mapping_bound_probe(m: float, r: float, s: float, N_list: Sequence[int] = DEFAULT_N,
                        seeds: Sequence[int] = range(5), parallel_map: Callable = map) -> ProbeResult:
    """Norm of Op(c(z)<j>^m) as a map H^{s+m} -> H^s."""
    def norm_at(seed, N):
        c = make_rough_coefficient(r, seed, N)
        A = quantize(RoughSymbol.separable(c, _bracket(m), N, m, r)).matrix
        return operator_norm(A, s + m, s)
    return _sweep("mapping", {"m": m, "r": r, "s": s}, norm_at, N_list, seeds, parallel_map)


def composition_remainder(a: RoughSymbol, b: RoughSymbol) -> np.ndarray:
    return quantize(a).matrix @ quantize(b).matrix - quantize(a * b).matrix


def composition_remainder_probe(m1: float, m2: float, r: float, tau: float, s: float,
                                N_list: Sequence[int] = DEFAULT_N, seeds: Sequence[int] = range(5),
                                smooth: bool = False, parallel_map: Callable = map) -> ProbeResult:
    """Norm of Op(a)Op(b) - Op(ab) as a map H^{s+m1+m2-tau} -> H^s."""
    if tau > 1:
        raise BadParameters("tau must be at most 1")

    def norm_at(seed, N):
        if smooth:
            c1 = smooth_coefficient(N)
            c2 = np.roll(c1, N // 4)
        else:
            c1 = make_rough_coefficient(r, seed, N)
            c2 = make_rough_coefficient(r, seed + 7919, N)
        a = RoughSymbol.separable(c1, _bracket(m1), N, m1, r)
        b = RoughSymbol.separable(c2, _bracket(m2), N, m2, r)
        return operator_norm(composition_remainder(a, b), s + m1 + m2 - tau, s)
    params = {"m": m1 + m2, "r": np.inf if smooth else r, "s": s, "tau": tau}
    return _sweep("composition", params, norm_at, N_list, seeds, parallel_map)


def adjoint_defect(a: RoughSymbol) -> np.ndarray:
    return quantize(a).matrix.conj().T - quantize(a.conj()).matrix


def adjoint_defect_probe(m: float, r: float, tau: float, s: float, N_list: Sequence[int] = DEFAULT_N,
                         seeds: Sequence[int] = range(5), parallel_map: Callable = map) -> ProbeResult:
    """Norm of Op(a)* - Op(conj a) as a map H^{s+m-tau} -> H^s."""
    def norm_at(seed, N):
        c = make_rough_coefficient(r, seed, N)
        return operator_norm(adjoint_defect(RoughSymbol.separable(c, _bracket(m), N, m, r)), s + m - tau, s)
    return _sweep("adjoint", {"m": m, "r": r, "s": s, "tau": tau}, norm_at, N_list, seeds, parallel_map)


@dataclass
class GardingResult:
    m: float
    l: float
    N_list: Tuple[int, ...]
    lambda_min: List[float]
    rayleigh_min: List[float]

    @property
    def C1(self) -> List[float]:
        return [max(0.0, -v) for v in self.lambda_min]

    @property
    def stable(self) -> bool:
        c = self.C1
        return c[-1] <= BOUND_RATIO * max(c[0], 1e-8)

    @property
    def verdict(self) -> str:
        return BOUNDED if self.stable else GROWING


def garding_probe(m: float, l: float, N_list: Sequence[int] = DEFAULT_N, seed: int = 0, trials: int = 200,
                  amplitude: float = 1.0) -> GardingResult:
    """Lower bound of Re<Op(p)u, u> for p = amplitude <j>^m (c(z) - min c) >= 0.

    c has regularity l + 1/2 and is scaled so that |c| <= 1/2 on every grid of the sweep. The symbol
    vanishes at one node of each grid, so C1 measures the sharp inequality, not ellipticity.
    """
    if l <= 0:
        raise BadParameters("coefficient regularity l must be positive")
    r = l + 0.5
    scale = 0.5 / coefficient_abs_sum(r, max(N_list))
    rng = np.random.default_rng(seed + 104729)
    lam_min, ray_min = [], []
    for N in N_list:
        c = make_rough_coefficient(r, seed, N, scale)
        A = quantize(RoughSymbol.separable(amplitude * (c - c.min()), _bracket(m), N, m, r)).matrix
        H = 0.5 * (A + A.conj().T)
        lam_min.append(float(linalg.eigvalsh(H)[0]))
        U = rng.standard_normal((N, trials)) + 1j * rng.standard_normal((N, trials))
        U /= np.linalg.norm(U, axis=0)
        ray_min.append(float(np.min(np.real(np.einsum("ij,ij->j", U.conj(), H @ U)))))
    return GardingResult(m, l, tuple(N_list), lam_min, ray_min)


def default_cells(r: float) -> List[Dict]:
    """Probe cells run by the calculus command: inside and outside each window."""
    return [
        {"probe": "mapping", "m": 0.0, "s": 1.0},
        {"probe": "mapping", "m": 0.0, "s": r + 1.0},
        {"probe": "mapping", "m": 1.0, "s": 0.0},
        {"probe": "composition", "m1": 1.0, "m2": 1.0, "tau": 1.0, "s": 0.5},
        {"probe": "composition", "m1": 1.0, "m2": 1.0, "tau": 1.0, "s": r - 0.5},
        {"probe": "adjoint", "m": 1.0, "tau": 1.0, "s": 0.5},
        {"probe": "adjoint", "m": 1.0, "tau": 1.0, "s": r + 0.5},
    ]


def run_cell(cell: Dict, r: float, N_list: Sequence[int], seeds: Sequence[int],
             parallel_map: Callable = map) -> ProbeResult:
    kind = cell["probe"]
    if kind == "mapping":
        return mapping_bound_probe(cell["m"], r, cell["s"], N_list, seeds, parallel_map)
    if kind == "composition":
        return composition_remainder_probe(cell["m1"], cell["m2"], r, cell["tau"], cell["s"], N_list, seeds,
                                           parallel_map=parallel_map)
    if kind == "adjoint":
        return adjoint_defect_probe(cell["m"], r, cell["tau"], cell["s"], N_list, seeds, parallel_map)
    raise BadParameters(f"unknown probe {kind!r}")
