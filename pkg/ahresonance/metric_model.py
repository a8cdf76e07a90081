from __future__ import annotations
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import BadDomain, BadEvenness, BadParameters, NonPositiveWarp, OutOfDomain

log = logging.getLogger(__name__)

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
INNER_BCS = (DIRICHLET, NEUMANN)

# dense sampling used to certify f > 0 on the model domain
_POSITIVITY_SAMPLES = 4001


@dataclass(frozen=True)
class CoefficientField:
    """A coefficient mu -> value with its smoothness tag and domain."""
    fn: Any
    smoothness: str
    domain: Tuple[float, float]
    name: str = ""

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=float)
        lo, hi = self.domain
        if np.any(mu < lo - 1e-12) or np.any(mu > hi + 1e-12):
            raise OutOfDomain(f"{self.name or 'coefficient'} evaluated outside [{lo}, {hi}]")
        return self.fn(mu)


@dataclass(frozen=True)
class WarpedMetricModel:
    """g = (dx^2 + f(x^2) dtheta^2)/x^2 written in mu = x^2.

    ``k is None`` encodes infinite evenness order (no odd part).
    """
    even_coeffs: Tuple[float, ...]
    k: Optional[int]
    odd_amplitude: float
    delta0: float
    mu_max: float
    inner_bc: str = DIRICHLET
    n: int = 1
    gamma_sign: float = 1.0

    @property
    def domain(self) -> Tuple[float, float]:
        return (-self.delta0, self.mu_max)

    @property
    def model_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "even_coeffs": list(self.even_coeffs),
            "k": "inf" if self.k is None else self.k,
            "odd_amplitude": self.odd_amplitude,
            "delta0": self.delta0,
            "mu_max": self.mu_max,
            "inner_bc": self.inner_bc,
            "n": self.n,
            "gamma_sign": self.gamma_sign,
        }

    def _check(self, mu: np.ndarray) -> None:
        lo, hi = self.domain
        if np.any(mu < lo - 1e-12) or np.any(mu > hi + 1e-12):
            raise OutOfDomain(f"mu outside model domain [{lo}, {hi}]")

    def _odd_power(self) -> float:
        return self.k + 0.5

    # raw evaluations without domain check; used by the extension and probes
    def _f(self, mu):
        mu = np.asarray(mu, dtype=float)
        val = np.polynomial.polynomial.polyval(mu, self.even_coeffs)
        if self.k is not None and self.odd_amplitude:
            val = val + self.odd_amplitude * np.abs(mu) ** self._odd_power()
        return val

    def _df(self, mu):
        mu = np.asarray(mu, dtype=float)
        deriv = np.polynomial.polynomial.polyder(np.asarray(self.even_coeffs, dtype=float))
        val = np.polynomial.polynomial.polyval(mu, deriv) if deriv.size else np.zeros_like(mu)
        if self.k is not None and self.odd_amplitude:
            p = self._odd_power()
            val = val + self.odd_amplitude * p * np.abs(mu) ** (p - 1.0) * np.sign(mu)
        return val + np.zeros_like(mu)

    def eval_h(self, mu):
        mu = np.asarray(mu, dtype=float)
        self._check(mu)
        return self._f(mu)

    def eval_dh(self, mu):
        mu = np.asarray(mu, dtype=float)
        self._check(mu)
        return self._df(mu)

    def eval_gamma(self, mu):
        mu = np.asarray(mu, dtype=float)
        self._check(mu)
        return -self.gamma_sign * self._df(mu) / self._f(mu)

    def eval_dinv_h(self, mu):
        """d/dmu (1/f)."""
        mu = np.asarray(mu, dtype=float)
        self._check(mu)
        f = self._f(mu)
        return -self._df(mu) / (f * f)

    def with_mu_max(self, mu_max: float) -> "WarpedMetricModel":
        return build_model(self.even_coeffs, self.k, self.odd_amplitude, self.delta0, mu_max,
                           self.inner_bc, n=self.n, gamma_sign=self.gamma_sign)


def _parse_k(k) -> Optional[int]:
    if k is None:
        return None
    if isinstance(k, str):
        if k.strip().lower() in ("inf", "infinity", "oo"):
            return None
        try:
            k = int(k)
        except ValueError as e:
            raise BadEvenness(f"evenness order must be an integer or 'inf', got {k!r}") from e
    if isinstance(k, float):
        if math.isinf(k):
            return None
        if not k.is_integer():
            raise BadEvenness(f"evenness order must be an integer, got {k}")
        k = int(k)
    return int(k)


def build_model(even_coeffs: Sequence[float], k, odd_amplitude: float, delta0: float,
                mu_max: float, inner_bc: str = DIRICHLET, n: int = 1,
                gamma_sign: float = 1.0) -> WarpedMetricModel:
    coeffs = tuple(float(c) for c in even_coeffs)
    if not coeffs:
        raise BadParameters("even_coeffs must be nonempty")
    if n != 1:
        raise BadParameters(f"only boundary dimension n = 1 is supported, got n = {n}")
    kk = _parse_k(k)
    if kk is not None and kk < 2:
        raise BadEvenness("evenness order must be ≥ 2")
    if odd_amplitude < 0:
        raise BadParameters("odd_amplitude must be ≥ 0")
    if kk is None and odd_amplitude > 0:
        raise BadEvenness("k = inf requires odd_amplitude = 0")
    if not (0.0 < delta0 < 1.0):
        raise BadDomain(f"delta0 must lie in (0, 1), got {delta0}")
    if mu_max < 4.0 * delta0:
        raise BadDomain(f"mu_max = {mu_max} must be ≥ 4*delta0 = {4.0 * delta0}")
    bc = str(inner_bc).lower()
    if bc not in INNER_BCS:
        raise BadParameters(f"inner_bc must be one of {INNER_BCS}, got {inner_bc!r}")
    if gamma_sign not in (1.0, -1.0):
        raise BadParameters("gamma_sign must be ±1")
    if coeffs[0] <= 0:
        raise NonPositiveWarp(f"f0 = {coeffs[0]} must be positive")

    model = WarpedMetricModel(coeffs, kk, float(odd_amplitude), float(delta0), float(mu_max),
                              bc, n, float(gamma_sign))
    mu = np.linspace(-delta0, mu_max, _POSITIVITY_SAMPLES)
    f = model._f(mu)
    if np.any(f <= 0) or not np.all(np.isfinite(f)):
        bad = mu[np.argmin(f)]
        raise NonPositiveWarp(f"f({bad:.6g}) = {model._f(bad):.6g} is not positive")
    log.debug("Built model f=%s k=%s eps=%s domain=[%s, %s]", coeffs, kk, odd_amplitude, -delta0, mu_max)
    return model


def model_from_config(section: Dict[str, Any], flip_gamma_sign: bool = False) -> WarpedMetricModel:
    return build_model(section["even_coeffs"], section["k"], section["odd_amplitude"],
                       section["delta0"], section["mu_max"], section["inner_bc"],
                       gamma_sign=-1.0 if flip_gamma_sign else 1.0)


def classify_evenness(model: WarpedMetricModel):
    if model.k is None or model.odd_amplitude == 0:
        return math.inf
    return model.k


def strip_bound(model: WarpedMetricModel) -> float:
    """Lower edge -1/2 - k of the continuation strip."""
    k = classify_evenness(model)
    return -math.inf if math.isinf(k) else -0.5 - k


def gamma_coefficient(model: WarpedMetricModel, smoothness_tag: str = "") -> CoefficientField:
    tag = "C^inf" if math.isinf(classify_evenness(model)) else "C^{k-1}"
    return CoefficientField(model.eval_gamma, smoothness_tag or tag, model.domain, "gamma")


def gamma_fd_check(model: WarpedMetricModel, mu: float, deltas: Sequence[float]) -> np.ndarray:
    """|gamma + (f(mu+d) - f(mu-d))/(2 d f(mu))| for each d."""
    g = float(model.eval_gamma(mu))
    f = float(model.eval_h(mu))
    out = []
    for d in deltas:
        fd = (float(model.eval_h(mu + d)) - float(model.eval_h(mu - d))) / (2.0 * d * f)
        out.append(abs(g + model.gamma_sign * fd))
    return np.asarray(out)


def evenness_signature(model: WarpedMetricModel, levels: int = 6, mu_start: float = 0.05) -> np.ndarray:
    """(k+1)-th forward difference quotient of f at mu_j = mu_start 2^-j.

    For an odd part eps|mu|^{k+1/2} the values grow like |mu|^{-1/2}, i.e. by sqrt(2) per level.
    """
    k = classify_evenness(model)
    order = 3 if math.isinf(k) else int(k) + 1
    weights = np.array([(-1) ** (order - i) * math.comb(order, i) for i in range(order + 1)], dtype=float)
    values = []
    for j in range(levels):
        mu = mu_start * 2.0 ** (-j)
        step = mu / 16.0
        pts = mu + step * np.arange(order + 1)
        values.append(float(weights @ model._f(pts)) / step ** order)
    return np.asarray(values)
