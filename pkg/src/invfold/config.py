"""Strict dataclass <-> dict conversion for config files and checkpoints."""

from __future__ import annotations

import dataclasses
import typing

import numpy as np


class ConfigError(ValueError):
    pass


def _coerce_scalar(cls, name, tp, value):
    """Check scalar field types, allowing int -> float widening and numeric
    strings (YAML 1.1 reads unquoted "1e-4" as a string)."""
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(f"{cls.__name__}.{name} must be a number, got {value!r}")
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{cls.__name__}.{name} must be a number, got {value!r}") from None
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            raise ConfigError(f"{cls.__name__}.{name} must be an integer, got {value!r}")
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"{cls.__name__}.{name} must be an integer, got {value!r}") from None
    if tp is bool and not isinstance(value, bool):
        raise ConfigError(f"{cls.__name__}.{name} must be a boolean, got {value!r}")
    if tp is str and not isinstance(value, str):
        raise ConfigError(f"{cls.__name__}.{name} must be a string, got {value!r}")
    return value


def from_dict(cls, data):
    """Build a (possibly nested) dataclass from a mapping, rejecting unknown
    keys. Lists are coerced to tuples where the field type is a tuple."""
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    field_map = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(field_map))
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} key(s): {', '.join(unknown)}")
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for name, value in data.items():
        tp = hints.get(name)
        origin = typing.get_origin(tp)
        if origin is typing.Union:
            args = [a for a in typing.get_args(tp) if a is not type(None)]
            if value is None and len(args) < len(typing.get_args(tp)):
                kwargs[name] = None
                continue
            tp = args[0] if len(args) == 1 else tp
            origin = typing.get_origin(tp)
        if dataclasses.is_dataclass(tp) and isinstance(value, dict):
            value = from_dict(tp, value)
        elif origin is tuple and isinstance(value, list):
            value = tuple(value)
        elif tp in (int, float, bool, str):
            value = _coerce_scalar(cls, name, tp, value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {cls.__name__}: {exc}") from exc


def to_jsonable(obj):
    """Recursively convert dataclasses/arrays/tuples to JSON-compatible data."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    return obj
