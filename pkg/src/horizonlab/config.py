"""YAML experiment configuration.

The file is a flat mapping of sections to key-value pairs; every key has a
default, unknown keys are rejected. See configs/ for annotated examples and
the README for the full schema.
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path
from typing import Optional

import yaml

from .camera import CameraModel
from .controller import ThrustMap
from .dynamics import PlantParams, ReferenceConfig
from .errors import ConfigError
from .harness import DelayConfig, EstimatorConfig, ExperimentConfig, GainSpec

_SECTION_TYPES = {
    "reference": ReferenceConfig,
    "plant": PlantParams,
    "camera": CameraModel,
    "thrust_map": ThrustMap,
    "delays": DelayConfig,
    "gains": GainSpec,
    "estimator": EstimatorConfig,
}


def _build(cls, mapping, where: str):
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**mapping)


def load_config(path: str | Path, seed: Optional[int] = None,
                **overrides) -> ExperimentConfig:
    """Parse a YAML file into an ExperimentConfig; keyword overrides win."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")

    kwargs = {}
    top_level = {f.name for f in fields(ExperimentConfig)} - set(_SECTION_TYPES)
    for key, value in raw.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _build(_SECTION_TYPES[key], value, key)
        elif key in top_level:
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if seed is not None:
        kwargs["seed"] = seed
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg
