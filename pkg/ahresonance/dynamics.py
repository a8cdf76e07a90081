"""Classical and semiclassical bicharacteristic flows of the extended operator.

Flows are integrated in the original coordinates (mu, y, xi, eta) while |xi| is moderate and in
projective coordinates (mu, y, rho = 1/|xi|, eta_hat = eta/|xi|) near fiber infinity, where the
field is rescaled by 1/|xi|. The radial sets L_+ / L_- sit at mu = 0, eta_hat = 0, rho = 0.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BadParameters, NonRealZ, NotCharacteristic, OutsideNeighborhood, StepFailure, WindowViolation
from .extended_operator import a2, da2
from .metric_model import WarpedMetricModel

log = logging.getLogger(__name__)

TO_L_PLUS = "ToLPlus"
TO_L_MINUS = "ToLMinus"
EXIT_INNER = "ExitInner"
EXIT_OUTER = "ExitOuter"
UNDECIDED = "Undecided"
TAGS = (TO_L_PLUS, TO_L_MINUS, EXIT_INNER, EXIT_OUTER, UNDECIDED)

DIRECT = "direct"
ADJOINT = "adjoint"
SEMICLASSICAL = "semiclassical"
VARIANTS = (DIRECT, ADJOINT, SEMICLASSICAL)

CAPTURE = 1e-10
XI_SWITCH = 1e3
RTOL = 1e-12
ATOL = 1e-14
MAX_SEGMENTS = 50
# relative tolerance for p = 0 on seeds
CHAR_TOL = 1e-9


@dataclass(frozen=True)
class PhasePoint:
    mu: float
    y: float
    xi: float
    eta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.y, self.xi, self.eta], dtype=float)


@dataclass(frozen=True)
class ProjectivePoint:
    mu: float
    y: float
    rho: float
    eta_hat: float
    sgn: int

    def rho0(self, model: WarpedMetricModel) -> float:
        """|eta_hat|^2 + rho^4 with the metric norm |eta_hat|^2 = eta_hat^2/f."""
        return float(self.eta_hat ** 2 / model._f(self.mu) + self.rho ** 4)

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.y, self.rho, self.eta_hat], dtype=float)


def to_projective(p: PhasePoint) -> ProjectivePoint:
    if p.xi == 0:
        raise NotCharacteristic("projective coordinates need xi != 0")
    a = abs(p.xi)
    return ProjectivePoint(p.mu, p.y, 1.0 / a, p.eta / a, 1 if p.xi > 0 else -1)


def to_phase(q: ProjectivePoint) -> PhasePoint:
    if q.rho <= 0:
        raise NotCharacteristic("rho = 0 lies on fiber infinity")
    return PhasePoint(q.mu, q.y, q.sgn / q.rho, q.eta_hat / q.rho)


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # rows (mu, y, xi, eta)
    p_values: np.ndarray
    exit: Optional[str] = None

    @property
    def energy_drift(self) -> float:
        p0 = self.p_values[0]
        return float(np.max(np.abs(self.p_values - p0)) / (1.0 + abs(p0)))

    @property
    def scaled_residual(self) -> np.ndarray:
        """p / (1 + xi^2 + eta^2) along the trajectory."""
        return self.p_values / (1.0 + self.states[:, 2] ** 2 + self.states[:, 3] ** 2)

    def rows(self) -> List[Tuple[float, ...]]:
        res = self.scaled_residual
        return [(float(t), *map(float, s), float(r)) for t, s, r in zip(self.t, self.states, res)]


@dataclass
class FlowClassification:
    tag: str
    time: float
    sgn_xi: int
    trajectory: Optional[Trajectory] = None
    segments: int = 0

    def to_dict(self) -> Dict:
        return {"tag": self.tag, "time": self.time, "sgn_xi": self.sgn_xi}


def _inv_f_prime(model: WarpedMetricModel, mu):
    f = model._f(mu)
    return -model._df(mu) / (f * f)


def _check_mu(model: WarpedMetricModel, mu) -> None:
    # the model checks its own domain
    model.eval_h(mu)


def hamiltonian_field(model: WarpedMetricModel, p: PhasePoint) -> np.ndarray:
    _check_mu(model, p.mu)
    return semiclassical_field(model, p, 0.0)


def semiclassical_field(model: WarpedMetricModel, p: PhasePoint, z) -> np.ndarray:
    """Hamilton field of 4 mu xi^2 - 4(1+a2) z xi - z^2 + eta^2/f at real z."""
    if np.imag(z) != 0:
        raise NonRealZ(f"semiclassical flow needs real z, got {z}")
    _check_mu(model, p.mu)
    return _orig_field(model, float(np.real(z)), p.as_array())


def _orig_field(model: WarpedMetricModel, z: float, Y: np.ndarray) -> np.ndarray:
    mu, _, xi, eta = Y
    f = float(model._f(mu))
    return np.array([
        4.0 * (2.0 * mu * xi - (1.0 + float(a2(mu))) * z),
        2.0 * eta / f,
        -(4.0 * xi * xi - 4.0 * z * xi * float(da2(mu)) + eta * eta * float(_inv_f_prime(model, mu))),
        0.0,
    ])


def _symbol(model: WarpedMetricModel, z: float, mu, xi, eta):
    return 4.0 * mu * xi ** 2 - 4.0 * (1.0 + a2(mu)) * z * xi - z * z + eta ** 2 / model._f(mu)


def _proj_field(model: WarpedMetricModel, z: float, sgn: int, Y: np.ndarray) -> np.ndarray:
    """W = |xi|^{-1} H_p in (mu, y, rho, eta_hat, t); the last entry is dt/ds = rho."""
    mu, _, rho, eh = Y[:4]
    f = float(model._f(mu))
    rdot = sgn * (4.0 + eh * eh * float(_inv_f_prime(model, mu))) - 4.0 * z * float(da2(mu)) * rho
    return np.array([
        8.0 * sgn * mu - 4.0 * (1.0 + float(a2(mu))) * z * rho,
        2.0 * eh / f,
        rho * rdot,
        eh * rdot,
        rho,
    ])


def rescaled_field(model: WarpedMetricModel, q: ProjectivePoint, z: float = 0.0) -> np.ndarray:
    """(mu', y', H_p rho, (|eta_hat|^2)') of the W-flow; equals (0, 0, +-4, 0) at L_+-."""
    _check_mu(model, q.mu)
    mu, eh, rho, sgn = q.mu, q.eta_hat, q.rho, q.sgn
    f = float(model._f(mu))
    ifp = float(_inv_f_prime(model, mu))
    dmu, dy, _, deh, _ = _proj_field(model, z, sgn, np.array([mu, q.y, rho, eh, 0.0]))
    hp_rho = sgn * (4.0 + eh * eh * ifp) - 4.0 * z * float(da2(mu)) * rho
    dn = 2.0 * eh * deh / f + eh * eh * ifp * dmu
    return np.array([dmu, dy, hp_rho, dn])


def _w_rho0(model: WarpedMetricModel, q: ProjectivePoint) -> float:
    """W applied to rho0 = |eta_hat|^2 + rho^4."""
    _, _, hp_rho, dn = rescaled_field(model, q)
    return float(dn + 4.0 * q.rho ** 4 * hp_rho)


def integrate_flow(model: WarpedMetricModel, p0: PhasePoint, t_span: Tuple[float, float],
                   tol: float = 1e-10, z: float = 0.0) -> Trajectory:
    if tol <= 0:
        raise StepFailure("tolerance must be positive")
    _check_mu(model, p0.mu)
    lo, hi = model.domain

    def inner(t, Y):
        return Y[0] - lo
    inner.terminal, inner.direction = True, -1

    def outer(t, Y):
        return Y[0] - hi
    outer.terminal, outer.direction = True, 1

    rtol = min(RTOL, tol)
    sol = solve_ivp(lambda t, Y: _orig_field(model, z, Y), t_span, p0.as_array(), method="DOP853",
                    rtol=rtol, atol=ATOL, events=(inner, outer), dense_output=False)
    if sol.status == -1:
        raise StepFailure(sol.message)
    states = sol.y.T
    p = _symbol(model, z, states[:, 0], states[:, 2], states[:, 3])
    exit_tag = None
    if sol.status == 1:
        exit_tag = EXIT_INNER if sol.t_events[0].size else EXIT_OUTER
    traj = Trajectory(sol.t, states, np.asarray(p, dtype=float), exit_tag)
    log.debug("integrate_flow: %d steps, drift %.3g, exit %s", len(sol.t), traj.energy_drift, exit_tag)
    return traj


def radial_inequality_margin(model: WarpedMetricModel, q: ProjectivePoint, constant: float = 16.0,
                             r0: float = 0.1) -> float:
    """sgn(xi) W rho0 - constant * rho0 near L_+-."""
    rho0 = q.rho0(model)
    if rho0 > r0 or abs(q.mu) > math.sqrt(rho0) + 1e-12:
        raise OutsideNeighborhood(f"rho0 = {rho0:.3g}, mu = {q.mu:.3g} outside the neighborhood of L")
    return q.sgn * _w_rho0(model, q) - constant * rho0


def projective_samples(model: WarpedMetricModel, count: int, rng: np.random.Generator,
                       rho0_range: Tuple[float, float] = (1e-6, 1e-2)) -> List[ProjectivePoint]:
    """Random points near L_+- with |mu| <= rho0^{1/2}."""
    lo, hi = model.domain
    out = []
    logs = rng.uniform(math.log(rho0_range[0]), math.log(rho0_range[1]), count)
    for lr in logs:
        rho0 = math.exp(lr)
        theta = rng.uniform()
        mu = float(np.clip(rng.uniform(-1.0, 1.0) * math.sqrt(rho0), lo, hi))
        n_hat = theta * rho0
        eh = rng.choice((-1.0, 1.0)) * math.sqrt(n_hat * float(model._f(mu)))
        rho = ((1.0 - theta) * rho0) ** 0.25
        out.append(ProjectivePoint(mu, 0.0, rho, eh, int(rng.choice((-1, 1)))))
    return out


@dataclass
class RadialInequalityReport:
    n_samples: int
    fitted: Dict[float, Tuple[float, float]]
    holds: Dict[float, bool]
    min_margin: Dict[float, float]

    def to_dict(self) -> Dict:
        return {
            "n_samples": self.n_samples,
            "constants": {str(c): {"C_outer": a, "C_inner": b, "holds": self.holds[c],
                                   "min_margin": self.min_margin[c]}
                          for c, (a, b) in self.fitted.items()},
        }


OUTER_BAND = (1e-3, 1e-2)
INNER_BAND = (1e-5, 1e-4)


def radial_inequality_report(model: WarpedMetricModel, samples: int, rng: np.random.Generator,
                             constants: Sequence[float] = (16.0, 8.0)) -> RadialInequalityReport:
    half = samples // 2
    points = (projective_samples(model, half, rng, OUTER_BAND)
              + projective_samples(model, samples - half, rng, INNER_BAND))
    rho0 = np.array([q.rho0(model) for q in points])
    w = np.array([q.sgn * _w_rho0(model, q) for q in points])
    fitted, holds, mins = {}, {}, {}
    for c in constants:
        margin = w - c * rho0
        ratio = -margin / rho0 ** 1.5
        outer = rho0 >= INNER_BAND[1]
        c_out = float(max(ratio[outer].max(initial=0.0), 0.0))
        c_in = float(max(ratio[~outer].max(initial=0.0), 0.0))
        fitted[c] = (c_out, c_in)
        holds[c] = c_in <= 3.0 * max(c_out, 1.0)
        mins[c] = float(margin.min())
        log.info("radial inequality constant %g: C %.3g -> %.3g (%s)", c, c_out, c_in,
                 "holds" if holds[c] else "fails")
    return RadialInequalityReport(len(points), fitted, holds, mins)


def _capture_value(model: WarpedMetricModel, Y: np.ndarray) -> float:
    mu, _, rho, eh = Y[:4]
    return float(eh * eh / model._f(mu) + rho ** 4 + mu * mu)


def _hybrid_classify(model: WarpedMetricModel, start, z: float, eps0: float, T_max: float,
                     direction: int, capture: float, keep_trajectory: bool) -> FlowClassification:
    """Integrate with coordinate switches until capture, exit, or horizon."""
    hi = model.mu_max
    used = 0.0
    clock = 0.0
    ts: List[np.ndarray] = []
    rows: List[np.ndarray] = []

    if isinstance(start, ProjectivePoint):
        mode, sgn = "proj", start.sgn
        Y = np.array([start.mu, start.y, start.rho, start.eta_hat, 0.0])
    else:
        mode, sgn = "orig", (1 if start.xi > 0 else -1) if start.xi != 0 else 1
        Y = start.as_array()

    def done(tag, segs):
        traj = None
        if keep_trajectory and ts:
            t_all = np.concatenate(ts)
            st = np.vstack(rows)
            p = _symbol(model, z, st[:, 0], st[:, 2], st[:, 3])
            traj = Trajectory(t_all, st, np.asarray(p, dtype=float), tag)
        return FlowClassification(tag, clock, sgn, traj, segs)

    def exits():
        def inner(s, Y):
            return Y[0] + eps0
        inner.terminal, inner.direction = True, -1

        def outer(s, Y):
            return Y[0] - hi
        outer.terminal, outer.direction = True, 1
        return [inner, outer]

    for seg in range(MAX_SEGMENTS):
        remaining = T_max - used
        if remaining <= 0:
            return done(UNDECIDED, seg)
        if mode == "proj":
            if _capture_value(model, Y) < capture:
                return done(TO_L_PLUS if sgn > 0 else TO_L_MINUS, seg)

            def cap(s, Y):
                return _capture_value(model, Y) - capture
            cap.terminal, cap.direction = True, -1

            def back(s, Y):
                return Y[2] - 2.0 / XI_SWITCH
            back.terminal, back.direction = True, 1

            events = exits() + [cap, back]
            sol = solve_ivp(lambda s, Y, sg=sgn: direction * _proj_field(model, z, sg, Y), (0.0, remaining),
                            Y, method="DOP853", rtol=RTOL, atol=ATOL, events=events)
            if sol.status == -1:
                raise StepFailure(sol.message)
            if keep_trajectory:
                rho = np.maximum(sol.y[2], 1e-300)
                ts.append(clock + sol.y[4])
                rows.append(np.column_stack([sol.y[0], sol.y[1], sgn / rho, sol.y[3] / rho]))
            used += sol.t[-1]
            Yend = sol.y[:, -1]
            clock += Yend[4] - Y[4]
            if sol.status == 0:
                return done(UNDECIDED, seg + 1)
            hit = [i for i, te in enumerate(sol.t_events) if te.size]
            if 0 in hit:
                return done(EXIT_INNER, seg + 1)
            if 1 in hit:
                return done(EXIT_OUTER, seg + 1)
            if 2 in hit:
                return done(TO_L_PLUS if sgn > 0 else TO_L_MINUS, seg + 1)
            mode = "orig"
            Y = np.array([Yend[0], Yend[1], sgn / Yend[2], Yend[3] / Yend[2]])
        else:
            def grow(s, Y):
                return abs(Y[2]) - XI_SWITCH
            grow.terminal, grow.direction = True, 1

            events = exits() + [grow]
            sol = solve_ivp(lambda t, Y: direction * _orig_field(model, z, Y), (0.0, remaining), Y,
                            method="DOP853", rtol=RTOL, atol=ATOL, events=events)
            if sol.status == -1:
                raise StepFailure(sol.message)
            if keep_trajectory:
                ts.append(clock + direction * sol.t)
                rows.append(sol.y.T.copy())
            used += sol.t[-1]
            clock += direction * sol.t[-1]
            Yend = sol.y[:, -1]
            if sol.status == 0:
                return done(UNDECIDED, seg + 1)
            hit = [i for i, te in enumerate(sol.t_events) if te.size]
            if 0 in hit:
                return done(EXIT_INNER, seg + 1)
            if 1 in hit:
                return done(EXIT_OUTER, seg + 1)
            sgn = 1 if Yend[2] > 0 else -1
            a = abs(Yend[2])
            mode = "proj"
            Y = np.array([Yend[0], Yend[1], 1.0 / a, Yend[3] / a, 0.0])
    return done(UNDECIDED, MAX_SEGMENTS)


def _require_characteristic(model: WarpedMetricModel, p: PhasePoint, z: float) -> None:
    _check_mu(model, p.mu)
    if p.xi == 0 and p.eta == 0 and z == 0:
        raise NotCharacteristic("zero section")
    val = float(_symbol(model, z, p.mu, p.xi, p.eta))
    if abs(val) > CHAR_TOL * (1.0 + p.xi ** 2 + p.eta ** 2):
        raise NotCharacteristic(f"p = {val:.3g} at {p}")


def classify_trajectory(model: WarpedMetricModel, p0, eps0: Optional[float] = None, T_max: float = 200.0,
                        direction: int = 1, capture: float = CAPTURE,
                        keep_trajectory: bool = False) -> FlowClassification:
    eps0 = model.delta0 if eps0 is None else eps0
    if isinstance(p0, PhasePoint):
        _require_characteristic(model, p0, 0.0)
    return _hybrid_classify(model, p0, 0.0, eps0, T_max, direction, capture, keep_trajectory)


def semiclassical_classify(model: WarpedMetricModel, p0, z_real: float, eps0: Optional[float] = None,
                           T_max: float = 200.0, direction: int = 1, capture: float = CAPTURE,
                           keep_trajectory: bool = False) -> FlowClassification:
    if np.imag(z_real) != 0:
        raise NonRealZ(f"semiclassical flow needs real z, got {z_real}")
    z = float(np.real(z_real))
    eps0 = model.delta0 if eps0 is None else eps0
    if isinstance(p0, PhasePoint):
        _require_characteristic(model, p0, z)
    return _hybrid_classify(model, p0, z, eps0, T_max, direction, capture, keep_trajectory)


def semiclassical_side(mu, xi, z: float) -> int:
    """+1 on Sigma_{h,+}, -1 on Sigma_{h,-}: the sign of 2(1+a2) xi + Re z."""
    return 1 if 2.0 * (1.0 + float(a2(mu))) * xi + z > 0 else -1


def semiclassical_seed(model: WarpedMetricModel, mu: float, z: float, side: int) -> PhasePoint:
    """Point of Sigma_h at eta = 0 on the requested side."""
    _check_mu(model, mu)
    b = 1.0 + float(a2(mu))
    if mu == 0:
        roots = [-z / (4.0 * b)]
    else:
        disc = b * b + mu
        if disc < 0:
            raise NotCharacteristic(f"no real characteristic xi at mu = {mu}")
        r = math.sqrt(disc)
        roots = [z * (b + r) / (2.0 * mu), z * (b - r) / (2.0 * mu)]
    for xi in roots:
        if semiclassical_side(mu, xi, z) == side:
            return PhasePoint(float(mu), 0.0, float(xi), 0.0)
    raise NotCharacteristic(f"no point of side {side} at mu = {mu}, z = {z}")


def characteristic_seeds(model: WarpedMetricModel, count: int, rng: np.random.Generator,
                         side: int, mu_range: Optional[Tuple[float, float]] = None) -> List[PhasePoint]:
    """Points of the classical characteristic set with sgn(xi) = side."""
    lo, hi = mu_range or (-model.delta0, -1e-3)
    out = []
    for _ in range(count):
        mu = float(rng.uniform(lo, hi))
        axi = float(math.exp(rng.uniform(0.0, math.log(100.0))))
        eta = float(rng.choice((-1.0, 1.0))) * math.sqrt(-4.0 * mu * float(model._f(mu))) * axi
        out.append(PhasePoint(mu, float(rng.uniform(0, 2 * math.pi)), side * axi, eta))
    return out


def sign_law_margins(model: WarpedMetricModel, seeds: Iterable[PhasePoint]) -> np.ndarray:
    """-+ mu_dot on Sigma_+-; nonnegative everywhere for the classical flow."""
    out = []
    for p in seeds:
        mudot = hamiltonian_field(model, p)[0]
        out.append(-mudot if p.xi > 0 else mudot)
    return np.asarray(out)


def nontrapping_diagnostic(model: WarpedMetricModel, n: int = 30, T_max: float = 200.0,
                           eps0: Optional[float] = None, parallel_map: Callable = map) -> Dict[str, int]:
    """Classify forward null trajectories seeded on an n x n (mu, xi) grid."""
    eps0 = model.delta0 if eps0 is None else eps0
    mus = np.linspace(-0.95 * eps0, -1e-3, n)
    xis = np.concatenate([-np.geomspace(100.0, 0.1, n // 2), np.geomspace(0.1, 100.0, n - n // 2)])
    seeds = []
    for mu in mus:
        for xi in xis:
            eta = math.sqrt(-4.0 * mu * float(model._f(mu))) * abs(xi)
            seeds.append(PhasePoint(float(mu), 0.0, float(xi), eta))
    results = list(parallel_map(lambda p: classify_trajectory(model, p, eps0, T_max).tag, seeds))
    counts = {tag: 0 for tag in TAGS}
    for tag in results:
        counts[tag] += 1
    log.info("non-trapping diagnostic: %s", counts)
    return counts


def field_lipschitz(model: WarpedMetricModel, spacings: Sequence[float], xi: float = 1.0,
                    eta: float = 0.5) -> np.ndarray:
    """Finite-difference Lipschitz constant of the field across mu = 0 for each spacing."""
    out = []
    for h in spacings:
        mus = np.linspace(-4 * h, 4 * h, 9)
        F = np.array([_orig_field(model, 0.0, np.array([m, 0.0, xi, eta])) for m in mus])
        out.append(float(np.max(np.abs(np.diff(F, axis=0))) / h))
    return np.asarray(out)


@dataclass
class ImSignReport:
    z: complex
    n_samples: int
    worst_margin: float
    im_abs_max: float

    @property
    def holds(self) -> bool:
        if np.imag(self.z) == 0:
            return self.im_abs_max == 0.0
        return self.worst_margin >= 0.0


def im_symbol_sign_report(model: WarpedMetricModel, z: complex,
                          sample_region: Optional[Dict[str, Sequence[float]]] = None) -> ImSignReport:
    """Checks sgn(xi) Im p <= 0 for Im z > 0 and >= 0 for Im z < 0 near fiber infinity."""
    region = sample_region or {"mu": np.linspace(-model.delta0, model.mu_max, 21),
                               "rho": np.geomspace(1e-4, 1e-2, 9)}
    mu = np.asarray(region["mu"], dtype=float)[:, None, None]
    rho = np.asarray(region["rho"], dtype=float)[None, :, None]
    sgn = np.array([-1.0, 1.0])[None, None, :]
    _check_mu(model, mu)
    xi = sgn / rho
    im_p = -2.0 * np.imag(z) * (2.0 * (1.0 + a2(mu)) * xi + np.real(z))
    signed = sgn * im_p
    margin = -np.sign(np.imag(z)) * signed
    return ImSignReport(complex(z), int(signed.size), float(margin.min()), float(np.abs(im_p).max()))


def commutant_profile(t, r0: float = 0.1) -> Tuple[np.ndarray, np.ndarray]:
    """phi(t) = exp(-t/(r0 - t)) on [0, r0), zero beyond, and phi'."""
    t = np.asarray(t, dtype=float)
    inside = t < r0
    d = np.where(inside, r0 - t, 1.0)
    phi = np.where(inside, np.exp(-t / d), 0.0)
    dphi = np.where(inside, -r0 / d ** 2 * phi, 0.0)
    return phi, dphi


def _delta_term(delta: float, eps: float, rho):
    rho = np.asarray(rho, dtype=float)
    if eps == 0:
        return np.where(rho == 0, delta, 0.0)
    return delta * eps / (rho + eps)


@dataclass
class CommutantReport:
    variant: str
    s: float
    im_lambda: float
    delta: float
    values: np.ndarray = field(repr=False)
    phi_prime_terms: np.ndarray = field(repr=False)
    support_ok: bool = True

    @property
    def worst(self) -> float:
        return float(self.values.max()) if self.variant != ADJOINT else float(self.values.min())

    @property
    def margin(self) -> float:
        return -self.worst if self.variant != ADJOINT else self.worst

    @property
    def holds(self) -> bool:
        return self.margin >= -1e-12

    def to_dict(self) -> Dict:
        return {"variant": self.variant, "s": self.s, "im_lambda": self.im_lambda, "delta": self.delta,
                "margin": self.margin, "holds": self.holds, "support_ok": self.support_ok}


def commutant_symbol_margin(model: WarpedMetricModel, s: float, im_lambda: float, delta: float, eps: float,
                            phase_samples: Sequence[ProjectivePoint], variant: str = DIRECT,
                            r0: float = 0.1, z_re: float = 1.0) -> CommutantReport:
    """Principal symbol of the commutator, divided by rho^{-2s}(1 + eps/rho)^{-2 delta}.

    The adjoint variant leaves out the phi' term; ``support_ok`` then reports whether that term is
    confined to rho0 >= eps or has the sign that only lowers the margin.
    """
    if variant not in VARIANTS:
        raise BadParameters(f"unknown commutant variant {variant!r}")
    if variant == ADJOINT:
        if not s < 0.5 + im_lambda:
            raise WindowViolation(f"adjoint estimate needs s < 1/2 + Im lambda, got s={s}, Im={im_lambda}")
    elif not s - 0.5 + im_lambda - delta > 0:
        raise WindowViolation(f"need s - 1/2 + Im lambda - delta > 0, got {s - 0.5 + im_lambda - delta:.3g}")

    rho = np.array([q.rho for q in phase_samples], dtype=float)
    sgn = np.array([q.sgn for q in phase_samples], dtype=float)
    dterm = _delta_term(delta, eps, rho)
    if variant == SEMICLASSICAL:
        t = rho ** 4 + rho ** 2
        phi, dphi = commutant_profile(t, r0)
        rdot = 4.0 * sgn - 4.0 * z_re * float(da2(0.0)) * rho
        flow = rho * (4.0 * rho ** 3 + 2.0 * rho) * rdot
        dterm_part = (8.0 + 4.0 * sgn * rho * z_re) * (-im_lambda + 0.5 - s + dterm) * phi ** 2
        pp = 2.0 * sgn * dphi * phi * flow
        support = bool(np.all((sgn * flow)[dphi != 0] >= 0))
        return CommutantReport(variant, s, im_lambda, delta, dterm_part + pp, pp, support)

    rho0 = np.array([q.rho0(model) for q in phase_samples])
    w = np.array([q.sgn * _w_rho0(model, q) for q in phase_samples])
    phi, dphi = commutant_profile(rho0, r0)
    pp = 2.0 * w * dphi * phi
    support = bool(np.all(w[(dphi != 0) & (rho0 > 0)] >= 0))
    if variant == DIRECT:
        values = 8.0 * (-im_lambda + 0.5 - s + dterm) * phi ** 2 + pp
    else:
        values = 8.0 * (im_lambda + 0.5 - s + dterm) * phi ** 2
        # the dropped phi' term must sit in F_eps = {rho0 >= eps} unless it can only lower the margin
        near = (dphi != 0) & (rho0 < eps)
        support = bool(np.all(pp[near] <= 0.0))
    return CommutantReport(variant, s, im_lambda, delta, values, pp, support)


def commutant_report(model: WarpedMetricModel, s_values: Sequence[float], im_values: Sequence[float],
                     delta: float, eps: float, samples: Sequence[ProjectivePoint],
                     variants: Sequence[str] = VARIANTS) -> Dict:
    cells, skipped = [], []
    for variant in variants:
        for s in s_values:
            for im in im_values:
                try:
                    rep = commutant_symbol_margin(model, s, im, delta, eps, samples, variant)
                except WindowViolation as e:
                    skipped.append({"variant": variant, "s": s, "im_lambda": im, "reason": str(e)})
                    continue
                cells.append(rep.to_dict())
    return {"cells": cells, "skipped": skipped,
            "all_hold": all(c["holds"] and c["support_ok"] for c in cells)}
