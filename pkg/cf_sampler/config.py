"""Configuration: YAML defaults, .env, then CFSAMPLER_* environment overrides."""

import copy
import logging
import os
import pathlib
from typing import Any, Dict, Optional, Union

import yaml
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

ROOT = pathlib.Path(__file__).resolve().parents[1]
CFG = ROOT / "config" / "cf_sampler.yaml"

DEFAULTS: Dict[str, Any] = {
    "seed": 42,
    "tol": 1e-10,
    "n": 1000,
    "m_rule": "star",
    "format": "csv",
    "threads": None,
    "log_level": "INFO",
    "validate": {
        "n": 100_000,
        "level": 0.001,
        "se_multiplier": 3.0,
        "domination_width": 12.0,
    },
}


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: Optional[Union[str, pathlib.Path]] = None) -> Dict[str, Any]:
    load_dotenv()
    path = pathlib.Path(path or os.getenv("CFSAMPLER_CONFIG") or CFG)
    cfg = copy.deepcopy(DEFAULTS)
    if path.exists():
        with open(path, "r") as f:
            cfg = _merge(cfg, yaml.safe_load(f) or {})
    else:
        logger.debug(f"No config at {path}; using built-in defaults")

    # env overrides
    if os.getenv("CFSAMPLER_THREADS"):
        cfg["threads"] = int(os.environ["CFSAMPLER_THREADS"])
    if os.getenv("CFSAMPLER_LOG_LEVEL"):
        cfg["log_level"] = os.environ["CFSAMPLER_LOG_LEVEL"]
    if os.getenv("CFSAMPLER_SEED"):
        cfg["seed"] = int(os.environ["CFSAMPLER_SEED"])
    return cfg
