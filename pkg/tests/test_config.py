import pytest
import yaml

from ahresonance.config import DEFAULTS, RunConfig
from ahresonance.errors import ConfigError


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def test_defaults_without_file():
    cfg = RunConfig.load(None)
    assert cfg["model"]["even_coeffs"] == [1.0]
    assert cfg.seed == 0
    cfg["model"]["even_coeffs"].append(2.0)
    assert DEFAULTS["model"]["even_coeffs"] == [1.0]


def test_partial_file_is_merged(tmp_path):
    cfg = RunConfig.load(write_yaml(tmp_path / "c.yaml", {"model": {"mu_max": 2.0}, "grid": {"N": 64}}))
    assert cfg["model"]["mu_max"] == 2.0
    assert cfg["model"]["delta0"] == 0.05
    assert cfg["grid"]["N"] == 64


def test_unknown_key_names_dotted_path(tmp_path):
    with pytest.raises(ConfigError, match="model.mu_maximum"):
        RunConfig.load(write_yaml(tmp_path / "c.yaml", {"model": {"mu_maximum": 2.0}}))
    with pytest.raises(ConfigError, match="logging.rotate.interval"):
        RunConfig.from_dict({"logging": {"rotate": {"interval": 3}}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"model": 3})


def test_missing_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        RunConfig.load(str(tmp_path / "nope.yaml"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid YAML"):
        RunConfig.load(str(bad))


def test_hash_ignores_runtime_but_not_seed():
    a = RunConfig.load(None)
    b = RunConfig.load(None)
    b.override("runtime.workers", 8)
    b.override("runtime.out", "elsewhere")
    b.override("logging.level", "DEBUG")
    assert a.config_hash == b.config_hash
    b.override("runtime.seed", 7)
    assert a.config_hash != b.config_hash
    c = RunConfig.load(None)
    c.override("grid.N", 100)
    assert a.config_hash != c.config_hash
    with pytest.raises(ConfigError):
        c.override("grid.size", 1)


def test_override_reaches_nested_keys():
    cfg = RunConfig.load(None)
    cfg.override("logging.rotate.backupCount", 9)
    assert cfg["logging"]["rotate"] == {"when": "midnight", "backupCount": 9}
    for bad in ("logging.rotate.size", "logging.level.name", "logging.rotate", "runtime"):
        with pytest.raises(ConfigError, match="unknown config key"):
            cfg.override(bad, 1)


def test_log_file_defaults_under_out():
    cfg = RunConfig.from_dict({"runtime": {"out": "runs/x"}})
    assert cfg.logging_section()["file"].replace("\\", "/") == "runs/x/run.log"
    assert cfg["logging"]["file"] is None
