"""TOML configuration: ``[model]``, ``[rho]`` and ``[g]`` tables."""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import InvalidModel
from .mc import BumpDensity
from .model import ModelSpec, cir_rate_logprice, custom, heston

_COMMON = {"preset", "lambda", "horizon_T", "r_max"}
_PRESET_KEYS = {
    "heston": {"a", "b", "sigma"},
    "cir-rate-logprice": {"a", "b", "sigma", "nu"},
    "custom": {"beta1", "beta2", "sigma1", "sigma2", "params"},
}
_BUMP_KEYS = ("y_center", "y_half", "z_center", "z_half")


def load_toml(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise InvalidModel(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidModel(f"{path}: {exc}") from exc


def model_from_table(table: Mapping[str, Any]) -> ModelSpec:
    """Build a model from a ``[model]`` table."""
    preset = table.get("preset")
    if preset not in _PRESET_KEYS:
        raise InvalidModel(f"[model] preset must be one of {sorted(_PRESET_KEYS)}, got {preset!r}")
    unknown = set(table) - _COMMON - _PRESET_KEYS[preset]
    if unknown:
        raise InvalidModel(f"[model] unknown keys for preset {preset}: {sorted(unknown)}")
    missing = _PRESET_KEYS[preset] - {"params"} - set(table)
    if missing:
        raise InvalidModel(f"[model] missing keys: {sorted(missing)}")
    lam = float(table.get("lambda", 0.0))
    horizon = float(table.get("horizon_T", 1.0))
    r_max = table.get("r_max")
    r_max = None if r_max is None else float(r_max)
    if preset == "heston":
        return heston(float(table["a"]), float(table["b"]), float(table["sigma"]), lam, horizon, r_max)
    if preset == "cir-rate-logprice":
        return cir_rate_logprice(float(table["a"]), float(table["b"]), float(table["sigma"]),
                                 float(table["nu"]), lam, horizon, r_max)
    params = {str(k): float(v) for k, v in dict(table.get("params", {})).items()}
    return custom(str(table["beta1"]), str(table["beta2"]), str(table["sigma1"]), str(table["sigma2"]),
                  lam, horizon, params, r_max)


def bump_from_table(table: Mapping[str, Any], name: str) -> BumpDensity:
    missing = [k for k in _BUMP_KEYS if k not in table]
    if missing:
        raise InvalidModel(f"[{name}] missing keys: {missing}")
    return BumpDensity(*(float(table[k]) for k in _BUMP_KEYS))


def load_model(path: str | Path) -> tuple[ModelSpec, dict]:
    data = load_toml(path)
    if "model" not in data:
        raise InvalidModel(f"{path}: no [model] table")
    return model_from_table(data["model"]), data


def load_bump(path: str | Path, name: str) -> tuple[BumpDensity, dict]:
    data = load_toml(path)
    if name not in data:
        raise InvalidModel(f"{path}: no [{name}] table")
    return bump_from_table(data[name], name), data


def config_hash(*parts: Any) -> str:
    """SHA-256 of the canonical JSON form of ``parts``."""
    text = json.dumps(parts, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
