from __future__ import annotations
import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .absorption import absorption_from_config, is_polynomial
from .config import RunConfig
from .dynamics import (ADJOINT, DIRECT, TO_L_MINUS, TO_L_PLUS, TAGS, characteristic_seeds, classify_trajectory,
                       commutant_report, im_symbol_sign_report, projective_samples, radial_inequality_report,
                       sign_law_margins)
from .errors import AhResonanceError, ConfigError, OracleFailure, exit_code_for
from .extended_operator import conjugation_roundtrip, selfadjointness_defect
from .fredholm_solver import (FredholmFamily, clip_to_strip, estimate_spread, estimate_sweep, resonance_report,
                              sigma_min_scan)
from .grid import build_grid
from .jobqueue import WorkerPool
from .logging_setup import setup_logging
from .metric_model import classify_evenness, evenness_signature, gamma_fd_check, model_from_config
from .results import (CALCULUS_COLUMNS, ESTIMATE_COLUMNS, SCAN_COLUMNS, TRAJECTORY_COLUMNS, read_scan_cache,
                      scan_cache_key, scan_rows, write_csv, write_json, write_scan_cache)
from .rough_calculus import default_cells, garding_probe, run_cell
from .state import State

log = logging.getLogger(__name__)

ROUNDTRIP_LAMBDAS = (0.0, 2.0 + 0.3j, 5.0 - 0.4j)
ROUNDTRIP_TOL = 1e-8
SELFADJOINT_LAMBDAS = (1.0, 3.0)
SELFADJOINT_TOL = 1e-6
RADIAL_SAMPLES = 10000
SIGN_Z = (0.3j + 1.0, -0.3j + 1.0)
COMMUTANT_S = (0.6, 1.0, 2.0)
COMMUTANT_IM = (0.0, 0.2, -0.2)
COMMUTANT_DELTA = (0.0, 0.1)
GAMMA_FD_DELTAS = (1e-2, 1e-3)
GAMMA_FD_RATIO = (50.0, 200.0)
GAMMA_FD_FLOOR = 1e-10
EVENNESS_RATIO_TOL = 1e-2
SIGN_LAW_TOL = 1e-12


class Run:
    """Everything a command needs: config, model, absorption, pool and state."""
    def __init__(self, cfg: RunConfig, pool: WorkerPool):
        self.cfg = cfg
        self.pool = pool
        model = model_from_config(cfg["model"], bool(cfg["debug"]["flip_gamma_sign"]))
        if cfg["grid"]["mu_max"] is not None:
            model = model.with_mu_max(float(cfg["grid"]["mu_max"]))
        self.model = model
        self.spec = absorption_from_config(cfg["absorption"], model)
        self.out = cfg.out_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.state = State(str(self.out / "state.db"))
        self.hash = cfg.config_hash

    @property
    def parallel_map(self) -> Callable:
        return self.pool.map

    def grid(self, N: Optional[int] = None):
        g = self.cfg["grid"]
        return build_grid(int(N or g["N"]), self.model.delta0, self.model.mu_max, g["clustering"])

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, stream])


def gamma_fd_ok(err: np.ndarray) -> bool:
    """Central differences of the warp must converge at second order, or already sit at roundoff."""
    if err[-1] < GAMMA_FD_FLOOR:
        return bool(err[0] < GAMMA_FD_FLOOR * 1e2)
    lo, hi = GAMMA_FD_RATIO
    return bool(lo < err[0] / err[-1] < hi)


def evenness_ok(model, signature: np.ndarray) -> bool:
    """A finite order grows by sqrt(2) per level; an even warp does not grow."""
    if math.isinf(classify_evenness(model)):
        return bool(np.all(np.abs(signature) <= 2.0 * abs(signature[0]) + EVENNESS_RATIO_TOL))
    ratios = signature[1:] / signature[:-1]
    return bool(np.allclose(ratios[-2:], math.sqrt(2.0), rtol=EVENNESS_RATIO_TOL))


def cmd_model_check(run: Run) -> int:
    model = run.model
    grid = run.grid()
    roundtrip = {str(lam): conjugation_roundtrip(model, lam, grid=grid) for lam in ROUNDTRIP_LAMBDAS}
    selfadj = {str(lam): selfadjointness_defect(model, lam, grid) for lam in SELFADJOINT_LAMBDAS}
    roundtrip_ok = all(v < ROUNDTRIP_TOL for v in roundtrip.values())
    selfadj_ok = all(v < SELFADJOINT_TOL for v in selfadj.values())
    k = classify_evenness(model)
    gamma_fd = gamma_fd_check(model, 0.3 * model.mu_max, GAMMA_FD_DELTAS)
    signature = evenness_signature(model)
    fd_ok = gamma_fd_ok(gamma_fd)
    even_ok = evenness_ok(model, signature)
    report = {
        "model": model.to_dict(),
        "model_hash": model.model_hash,
        "evenness": "inf" if k == float("inf") else k,
        "gamma_fd": gamma_fd.tolist(),
        "evenness_signature": signature.tolist(),
        "conjugation_roundtrip": roundtrip,
        "selfadjointness_defect": selfadj,
        "roundtrip_ok": roundtrip_ok,
        "selfadjoint_ok": selfadj_ok,
        "gamma_fd_ok": fd_ok,
        "evenness_ok": even_ok,
        "passed": roundtrip_ok and selfadj_ok and fd_ok and even_ok,
    }
    write_json(run.out / "model_check.json", report, run.hash)
    if not report["passed"]:
        raise OracleFailure(f"model check failed: roundtrip {roundtrip}, self-adjointness {selfadj}, "
                            f"gamma fd {report['gamma_fd']}, evenness signature {report['evenness_signature']}")
    log.info("model check passed")
    return 0


def cmd_flow(run: Run) -> int:
    fc = run.cfg["flow"]
    model = run.model
    rng = run.rng(1)
    half = int(fc["seeds"]) // 2
    minus = characteristic_seeds(model, half, rng, -1)
    plus = characteristic_seeds(model, int(fc["seeds"]) - half, rng, +1)
    jobs = [(i, p, 1, TO_L_MINUS) for i, p in enumerate(minus)]
    jobs += [(half + i, p, -1, TO_L_PLUS) for i, p in enumerate(plus)]

    def one(job):
        idx, p, direction, _ = job
        return classify_trajectory(model, p, fc["eps0"], float(fc["T_max"]), direction,
                                   float(fc["capture"]), keep_trajectory=True)
    results = run.parallel_map(one, jobs)

    classifications, drifts, mismatched = [], [], 0
    counts = {tag: 0 for tag in TAGS}
    for (idx, p, direction, expected), res in zip(jobs, results):
        counts[res.tag] += 1
        if res.tag != expected:
            mismatched += 1
        if res.trajectory is not None and res.trajectory.p_values.size:
            drifts.append(float(np.max(np.abs(res.trajectory.scaled_residual))))
        entry = res.to_dict()
        entry["seed"] = idx
        classifications.append(entry)
        if idx < int(fc["write_trajectories"]) or half <= idx < half + int(fc["write_trajectories"]):
            if res.trajectory is not None:
                rows = [dict(zip(TRAJECTORY_COLUMNS, r)) for r in res.trajectory.rows()]
                write_csv(run.out / "trajectories" / f"seed_{idx:05d}.csv", rows, TRAJECTORY_COLUMNS, run.hash)

    sign_law = sign_law_margins(model, minus + plus)
    radial = radial_inequality_report(model, RADIAL_SAMPLES, run.rng(2))
    signs = {str(z): im_symbol_sign_report(model, z) for z in SIGN_Z}
    samples = projective_samples(model, 200, run.rng(3))
    commutant = {str(d): commutant_report(model, COMMUTANT_S, COMMUTANT_IM, d, 0.05, samples, (DIRECT, ADJOINT))
                 for d in COMMUTANT_DELTA}
    summary = {
        "counts": counts,
        "mismatched": mismatched,
        "max_energy_drift": max(drifts) if drifts else 0.0,
        "min_sign_law_margin": float(sign_law.min()) if sign_law.size else 0.0,
        "radial_inequality": radial.to_dict(),
        "im_sign": {k: {"worst_margin": v.worst_margin, "holds": v.holds} for k, v in signs.items()},
        "commutant": commutant,
    }
    write_json(run.out / "flow.json", {"classifications": classifications, "summary": summary}, run.hash)
    log.info("flow: %s, %d mismatched", counts, mismatched)
    if mismatched or summary["min_sign_law_margin"] < -SIGN_LAW_TOL:
        raise OracleFailure(f"flow: {mismatched} mismatched classifications, "
                            f"min sign-law margin {summary['min_sign_law_margin']:.3e}")
    return 0


def _cached_scan(run: Run, family: FredholmFamily, rect: Sequence[float], resolution: Sequence[int],
                 s: float, percentile: float):
    g = run.cfg["grid"]
    key = scan_cache_key(run.model.model_hash, family.grid.N, g["clustering"], family.mode, rect,
                         resolution, s, run.spec.to_dict())
    use_cache = bool(run.cfg["runtime"]["cache"])
    path = run.state.cache_path(key) if use_cache else None
    if path is not None:
        log.info("scan cache hit %s", key[:12])
        _, _, _, sigma = read_scan_cache(Path(path))
        return sigma_min_scan(family, rect, resolution, s, percentile, sigma=sigma)
    scan = sigma_min_scan(family, rect, resolution, s, percentile, run.parallel_map)
    if use_cache:
        target = run.out / "cache" / f"{key}.bin"
        write_scan_cache(target, family.grid.N, rect, resolution, scan.sigma)
        run.state.record_cache(key, str(target))
    return scan


def cmd_scan(run: Run) -> int:
    sc = run.cfg["scan"]
    rect = clip_to_strip(run.model, sc["rect"], bool(sc["exploratory"]))
    family = FredholmFamily(run.model, run.spec, run.grid(), int(sc["mode"]))
    scan = _cached_scan(run, family, rect, sc["resolution"], float(sc["s"]), float(sc["percentile"]))
    write_csv(run.out / f"scan_mode{int(sc['mode'])}.csv", scan_rows(scan.re, scan.im, scan.sigma),
              SCAN_COLUMNS, run.hash)
    log.info("scan: %d candidates", len(scan.candidates))
    return 0


def cmd_resonances(run: Run) -> int:
    rc, sc, g = run.cfg["resonances"], run.cfg["scan"], run.cfg["grid"]
    mismatches: List[complex] = []
    for mode in rc["modes"]:
        rect = clip_to_strip(run.model, sc["rect"], bool(sc["exploratory"]))
        sigma = None
        if not is_polynomial(run.spec):
            family = FredholmFamily(run.model, run.spec, run.grid(), int(mode))
            sigma = _cached_scan(run, family, rect, sc["resolution"], float(sc["s"]), float(sc["percentile"])).sigma
        report = resonance_report(
            run.model, run.spec, int(g["N"]), g["clustering"], int(mode), rect,
            resolution=sc["resolution"], s=float(sc["s"]), percentile=float(sc["percentile"]),
            newton_tol=float(rc["newton_tol"]), max_iter=int(rc["max_iter"]), match_tol=float(rc["match_tol"]),
            drift_tol=float(rc["drift_tol"]), contour_radius=float(rc["contour_radius"]),
            check_mu_max=bool(rc["check_mu_max"]), exploratory=bool(sc["exploratory"]),
            parallel_map=run.parallel_map, sigma=sigma)
        write_json(run.out / f"resonances_mode{int(mode)}.json", report.to_dict(), run.hash)
        mismatches.extend(report.oracle_mismatches)
    if mismatches:
        raise OracleFailure(f"{len(mismatches)} poles without a shooting zero: {mismatches}")
    return 0


def cmd_estimate(run: Run) -> int:
    ec, g = run.cfg["estimate"], run.cfg["grid"]
    rows = estimate_sweep(run.model, run.spec, ec["re_lambda"], float(ec["im_lambda"]), ec["s"],
                          int(ec["mode"]), int(g["N"]), float(ec["points_per_wavelength"]), g["clustering"],
                          run.parallel_map)
    write_csv(run.out / "estimate.csv", rows, ESTIMATE_COLUMNS, run.hash)
    log.info("estimate max/median per s: %s", estimate_spread(rows))
    return 0


def cmd_calculus(run: Run) -> int:
    cc = run.cfg["calculus"]
    r = float(cc["r"])
    N_list = [int(n) for n in cc["N"]]
    seeds = [run.cfg.seed + i for i in range(int(cc["seeds"]))]
    rows: List[Dict] = []
    for cell in default_cells(r):
        res = run_cell(cell, r, N_list, seeds, run.parallel_map)
        log.info("%s %s: %s (%d/%d)", res.probe, res.params, res.verdict, res.agreement, len(seeds))
        rows.extend(res.rows())
    g = garding_probe(1.0, r, N_list, seed=run.cfg.seed)
    for N, c1 in zip(g.N_list, g.C1):
        rows.append({"probe": "garding", "m": g.m, "r": g.l + 0.5, "s": np.nan, "tau": np.nan, "N": N,
                     "seed": run.cfg.seed, "norm": c1, "verdict": g.verdict})
    write_csv(run.out / "calculus.csv", rows, CALCULUS_COLUMNS, run.hash)
    return 0


COMMANDS: Dict[str, Callable[[Run], int]] = {
    "model-check": cmd_model_check,
    "flow": cmd_flow,
    "scan": cmd_scan,
    "resonances": cmd_resonances,
    "estimate": cmd_estimate,
    "calculus": cmd_calculus,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", default=None, help="Path to config.yaml")
    common.add_argument("--out", default=None, help="Output directory (runtime.out)")
    common.add_argument("--seed", type=int, default=None, help="Seed for all randomness (runtime.seed)")
    common.add_argument("--workers", type=int, default=None, help="Worker threads (runtime.workers)")
    common.add_argument("--no-cache", action="store_true", help="Ignore and do not write the scan cache")
    ap = argparse.ArgumentParser(prog="ahresonance", description="Resonance lab for warped hyperbolic ends")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return ap


def load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config)
    if args.out is not None:
        cfg.override("runtime.out", args.out)
    if args.workers is not None:
        cfg.override("runtime.workers", args.workers)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError(f"seed must fit in an unsigned 64-bit integer, got {args.seed}")
        cfg.override("runtime.seed", args.seed)
    if args.no_cache:
        cfg.override("runtime.cache", False)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:2] == ["model", "check"]:
        argv = ["model-check"] + argv[2:]
    args = build_parser().parse_args(argv)

    run_id = None
    run: Optional[Run] = None
    try:
        cfg = load_config(args)
        setup_logging(cfg.logging_section())
        log.info("Starting %s with config: %s (hash %s)", args.command, args.config, cfg.config_hash[:12])
        with WorkerPool(cfg["runtime"]["workers"]) as pool:
            run = Run(cfg, pool)
            run_id = run.state.start_run(run.hash, args.command)
            code = COMMANDS[args.command](run)
        run.state.finish_run(run_id, code == 0)
        return code
    except AhResonanceError as e:
        log.error("%s: %s", type(e).__name__, e)
        print(f"error: {e}", file=sys.stderr)
        if run is not None and run_id is not None:
            run.state.finish_run(run_id, False)
        return exit_code_for(e)
    except Exception as e:
        log.exception("unexpected failure")
        print(f"error: {e}", file=sys.stderr)
        return 1
    finally:
        if run is not None:
            run.state.close()


if __name__ == "__main__":
    sys.exit(main())
