"""Configuration: .env defaults, the flat key = value config file and flag precedence.

Precedence is explicit CLI flag > config file > bench preset > built-in default.
"""
from __future__ import annotations

import logging
import os
from typing import Any, Mapping

import dotenv
from pydantic import ValidationError

from .errors import InvalidConfig
from .structure import ExperimentConfig

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "SPECTRAL_ENSEMBLE_OUTPUT_DIR"
LOG_LEVEL_ENV = "SPECTRAL_ENSEMBLE_LOG_LEVEL"

PRESET_DEFAULTS: dict[str, dict[str, Any]] = {
    "fig2a": {"M": 100, "S": 600, "b": 0.0, "pi_min": 0.3, "pi_max": 0.8, "cartel_r": 0.0},
    "fig2b": {"M": 100, "S": 600, "b": 0.0, "pi_min": 0.3, "pi_max": 0.8, "cartel_r": 1 / 3, "pi_c": 0.5,
              "xi": 0.7},
    "figS2": {"M": 100, "S": 600, "b": 0.0, "pi_min": 0.3, "pi_max": 0.8, "cartel_r": 0.0},
    "figS3": {"M": 100, "S": 600, "b": 0.0, "pi_min": 0.3, "pi_max": 0.8, "cartel_r": 0.0},
    "figS6": {"M": 100, "S": 600, "b": 0.0, "pi_min": 0.55, "pi_max": 0.8, "pi_c": 0.5, "xi": 0.7, "runs": 100},
    "figS1": {"runs": 1},
    "lemma": {"runs": 1, "lemma_m": 9, "psi": 0.6},
}


def load_env() -> None:
    if os.path.exists('.env'):
        dotenv.load_dotenv()


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "output")


def default_log_level() -> str:
    return os.environ.get(LOG_LEVEL_ENV, "INFO").upper()


def read_config_file(path: str) -> dict[str, str]:
    """Parse a flat ``key = value`` file; keys are flag names with dashes as underscores."""
    if not os.path.exists(path):
        raise InvalidConfig(f"config file not found: {path}")
    values = {key.strip().replace("-", "_"): value for key, value in dotenv.dotenv_values(path).items()}
    unknown = sorted(set(values) - set(ExperimentConfig.model_fields) - {"mode"})
    if unknown:
        raise InvalidConfig(f"unknown keys in {path}: {', '.join(unknown)}")
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise InvalidConfig(f"keys without a value in {path}: {', '.join(missing)}")
    return values


def build_config(mode: str, explicit: Mapping[str, Any], config_file: str | None = None) -> ExperimentConfig:
    """Merge flags, config file and preset defaults into a validated ExperimentConfig."""
    from_file = read_config_file(config_file) if config_file else {}
    preset = explicit.get("preset") or from_file.get("preset")
    merged: dict[str, Any] = {"out_dir": default_output_dir()}
    merged.update(PRESET_DEFAULTS.get(preset, {}) if mode == "bench" else {})
    merged.update(from_file)
    merged.update({key: value for key, value in explicit.items() if value is not None})
    merged["mode"] = mode
    try:
        config = ExperimentConfig(**merged)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
                             for err in e.errors())
        raise InvalidConfig(problems) from e
    logger.debug("configuration: %s", config.model_dump())
    return config
