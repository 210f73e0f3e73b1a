"""YAML configuration for experiments.

The file is a mapping whose keys mirror :class:`~oio.harness.TrialConfig`.
Nested parameter groups (``plume``, ``environment``, ``mox``, ``ec``,
``limits``, ``drift``, ``envelope``, ``grid``, ``rl``) are mappings of their
own; anything left out keeps its default. Unknown keys are rejected so a
typo cannot silently fall back to a default::

    algorithm: belief_map
    sensor_kind: EC
    trials: 50
    plume:
      wind_mean: [0.0, 0.05, 0.0]
    ec:
      response_time_constant: 2.0
"""
from __future__ import annotations

import dataclasses
import enum
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigurationError
from .harness import TrialConfig


def _coerce(current: Any, value: Any, where: str) -> Any:
    if dataclasses.is_dataclass(current):
        if not isinstance(value, Mapping):
            raise ConfigurationError(f"{where} must be a mapping")
        return _apply(current, value, where)
    if isinstance(current, enum.Enum):
        try:
            return type(current)(str(value).upper())
        except ValueError:
            raise ConfigurationError(f"{where}: invalid value {value!r}") from None
    if isinstance(current, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"{where} must be a list")
        return tuple(value)
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{where} must be true or false")
        return value
    if isinstance(current, int) and not isinstance(value, bool) and isinstance(value, int):
        return value
    if isinstance(current, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if current is None or isinstance(current, str):
        return value
    raise ConfigurationError(f"{where}: expected {type(current).__name__}, got {type(value).__name__}")


def _apply(obj, overrides: Mapping[str, Any], where: str = ""):
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, value in overrides.items():
        path = f"{where}.{key}" if where else str(key)
        if key not in names:
            raise ConfigurationError(f"unknown configuration key {path!r}")
        changes[key] = _coerce(getattr(obj, key), value, path)
    try:
        return dataclasses.replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{where or 'config'}: {exc}") from exc


def config_from_mapping(data: Mapping[str, Any] | None, base: TrialConfig | None = None) -> TrialConfig:
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigurationError("configuration must be a mapping at the top level")
    return _apply(base or TrialConfig(), data)


def load_config(path, base: TrialConfig | None = None) -> TrialConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{p} is not valid YAML: {exc}") from exc
    return config_from_mapping(data, base)


def config_to_mapping(cfg: TrialConfig) -> dict:
    """Plain-data view of a configuration, suitable for ``yaml.safe_dump``."""

    def plain(v):
        if dataclasses.is_dataclass(v):
            return {f.name: plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
        if isinstance(v, enum.Enum):
            return v.value
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        return v

    return plain(cfg)
