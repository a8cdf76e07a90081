from __future__ import annotations
import copy
import hashlib
import json
import yaml
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from .errors import ConfigError

# sections and keys the loader accepts; values are the defaults
DEFAULTS: Dict[str, Any] = {
    "model": {
        "even_coeffs": [1.0],
        "k": "inf",
        "odd_amplitude": 0.0,
        "delta0": 0.05,
        "mu_max": 1.0,
        "inner_bc": "dirichlet",
    },
    "grid": {"N": 200, "clustering": 0.2, "mu_max": None},
    "absorption": {
        "eps1": 0.02,
        "C_abs": 1.0,
        "sharpness": 1.0,
        "realization": "principal_polynomial",
        "amplitude": 1.0,
    },
    "scan": {
        "mode": 0,
        "rect": [-6.0, 6.0, -2.0, 0.5],
        "resolution": [64, 32],
        "s": 1.0,
        "percentile": 10.0,
        "exploratory": False,
    },
    "resonances": {
        "modes": [0, 1],
        "match_tol": 1e-4,
        "drift_tol": 1e-6,
        "newton_tol": 1e-10,
        "max_iter": 50,
        "contour_radius": 0.05,
        "check_mu_max": False,
    },
    "flow": {"seeds": 1000, "T_max": 200.0, "eps0": None, "capture": 1e-10, "z": 1.0,
             "write_trajectories": 5},
    "estimate": {
        "re_lambda": [8, 16, 32, 64, 128, 256],
        "im_lambda": 0.2,
        "s": [0, 1, 2],
        "mode": 0,
        "points_per_wavelength": 6,
    },
    "calculus": {"seeds": 5, "N": [32, 64, 128, 256], "r": 2.0},
    "debug": {"flip_gamma_sign": False},
    "runtime": {"out": "results", "workers": 1, "cache": True, "seed": 0},
    "logging": {
        "level": "INFO",
        "file": None,
        "rotate": {"when": "midnight", "backupCount": 5},
        "console": True,
        "json": False,
    },
}

UNHASHED = ("runtime", "logging")


def _merge(base: Dict[str, Any], override: Dict[str, Any], path: str = "") -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        dotted = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {dotted!r} must be a mapping")
            out[key] = _merge(base[key], value, dotted + ".")
        else:
            out[key] = value
    return out


@dataclass
class RunConfig:
    data: Dict[str, Any]

    @classmethod
    def load(cls, path: Optional[str]) -> "RunConfig":
        if path is None:
            return cls(data=copy.deepcopy(DEFAULTS))
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        with open(p, "r", encoding="utf-8") as f:
            try:
                raw = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"invalid YAML in {path}: {e}") from e
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        return cls(data=_merge(DEFAULTS, raw))

    def __getitem__(self, item):
        return self.data[item]

    def get(self, key, default=None):
        return self.data.get(key, default)

    def override(self, dotted: str, value: Any) -> None:
        *parents, key = dotted.split(".")
        node = self.data
        for part in parents:
            node = node.get(part) if isinstance(node, dict) else None
            if not isinstance(node, dict):
                raise ConfigError(f"unknown config key {dotted!r}")
        if not parents or key not in node or isinstance(node[key], dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node[key] = value

    @property
    def out_dir(self) -> Path:
        return Path(self.data["runtime"]["out"])

    @property
    def seed(self) -> int:
        return int(self.data["runtime"]["seed"])

    def hash_payload(self) -> Dict[str, Any]:
        payload = {k: v for k, v in self.data.items() if k not in UNHASHED}
        payload["seed"] = self.seed
        return payload

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.hash_payload(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def logging_section(self) -> Dict[str, Any]:
        cfg = copy.deepcopy(self.data["logging"])
        if not cfg.get("file"):
            cfg["file"] = str(self.out_dir / "run.log")
        return cfg
