"""Artifact writers. Every file carries the config hash; none carries a timestamp."""
from __future__ import annotations
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from filelock import FileLock

from .errors import ConfigError

log = logging.getLogger(__name__)

CACHE_VERSION = 1
_HEADER_BYTES = 4 + 4 + 4 * 8 + 2 * 4

ESTIMATE_COLUMNS = ["re_lambda", "im_lambda", "s", "norm", "lambda_times_norm"]
TRAJECTORY_COLUMNS = ["t", "mu", "y", "xi", "eta", "p_residual"]
CALCULUS_COLUMNS = ["probe", "m", "r", "s", "tau", "N", "seed", "norm", "verdict"]
SCAN_COLUMNS = ["re_lambda", "im_lambda", "sigma_min"]


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: Path, payload: Dict[str, Any], config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(_jsonable(payload))
    body["config_hash"] = config_hash
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("wrote %s", path)
    return path


def write_csv(path: Path, rows: Iterable[Dict[str, Any]], columns: Sequence[str], config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(list(rows), columns=list(columns))
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# config_hash={config_hash}\n")
        df.to_csv(f, index=False, float_format="%.12g")
    log.info("wrote %s (%d rows)", path, len(df))
    return path


def read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def csv_config_hash(path: Path) -> Optional[str]:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
    return first.split("=", 1)[1] if first.startswith("# config_hash=") else None


def scan_rows(re: np.ndarray, im: np.ndarray, sigma: np.ndarray):
    for iy, y in enumerate(im):
        for ix, x in enumerate(re):
            yield {"re_lambda": float(x), "im_lambda": float(y), "sigma_min": float(sigma[iy, ix])}


# --- scan cache ---

def scan_cache_key(model_hash: str, N: int, clustering, mode: int, rect: Sequence[float],
                   resolution: Sequence[int], s: float, absorption: Dict[str, Any]) -> str:
    payload = {
        "model": model_hash, "N": int(N), "clustering": clustering, "mode": int(mode),
        "rect": [float(v) for v in rect], "resolution": [int(v) for v in resolution], "s": float(s),
        "absorption": absorption,
    }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def encode_scan(N: int, rect: Sequence[float], resolution: Sequence[int], sigma: np.ndarray) -> bytes:
    nx, ny = map(int, resolution)
    sigma = np.asarray(sigma, dtype="<f8")
    if sigma.shape != (ny, nx):
        raise ConfigError(f"scan field shape {sigma.shape} does not match resolution {(ny, nx)}")
    header = (np.array([CACHE_VERSION, int(N)], dtype="<u4").tobytes()
              + np.asarray(rect, dtype="<f8").tobytes()
              + np.array([nx, ny], dtype="<u4").tobytes())
    return header + np.ascontiguousarray(sigma).tobytes()


def decode_scan(data: bytes) -> Tuple[int, Tuple[float, ...], Tuple[int, int], np.ndarray]:
    if len(data) < _HEADER_BYTES:
        raise ConfigError("scan cache file truncated")
    version, N = np.frombuffer(data, dtype="<u4", count=2)
    if int(version) != CACHE_VERSION:
        raise ConfigError(f"scan cache version {int(version)} is not {CACHE_VERSION}")
    rect = tuple(float(v) for v in np.frombuffer(data, dtype="<f8", count=4, offset=8))
    nx, ny = (int(v) for v in np.frombuffer(data, dtype="<u4", count=2, offset=40))
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER_BYTES)
    if body.size != nx * ny:
        raise ConfigError("scan cache body does not match its header")
    return int(N), rect, (nx, ny), body.reshape(ny, nx).copy()


def write_scan_cache(path: Path, N: int, rect, resolution, sigma: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with FileLock(str(path) + ".lock"):
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(encode_scan(N, rect, resolution, sigma))
        tmp.replace(path)
    return path


def read_scan_cache(path: Path):
    path = Path(path)
    with FileLock(str(path) + ".lock"):
        return decode_scan(path.read_bytes())
