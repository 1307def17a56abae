"""JSON run configuration: parsing with validation, overrides, serialization.

A document is a JSON object whose keys mirror :class:`RunConfig` (nested
sections are nested objects).  Omitted keys take the defaults; unknown keys,
wrong types and out-of-range values raise :class:`ConfigError` naming the key.
"""
from __future__ import annotations

import dataclasses
import json
import typing
from enum import Enum
from types import NoneType, UnionType

from .experiment import RunConfig


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


def _convert(tp, value, key, base=None):
    origin = typing.get_origin(tp)
    if origin in (UnionType, typing.Union):
        args = typing.get_args(tp)
        if value is None and NoneType in args:
            return None
        (inner,) = [a for a in args if a is not NoneType]
        return _convert(inner, value, key, base)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, "expected a list")
        (inner, _) = typing.get_args(tp)
        return tuple(_convert(inner, v, f"{key}[{i}]") for i, v in enumerate(value))
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, key, base)
    if isinstance(tp, type) and issubclass(tp, Enum):
        try:
            return tp(value)
        except ValueError:
            choices = ", ".join(m.value for m in tp)
            raise ConfigError(key, f"expected one of {choices}, got {value!r}") from None
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(key, "expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, "expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, "expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(key, "expected a string")
        return value
    raise TypeError(f"unsupported config type {tp!r}")  # programming error


def _default(f):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    return None


def _build(cls, doc, prefix="", base=None):
    """``base`` (an instance of ``cls``) supplies values for omitted keys."""
    if not isinstance(doc, dict):
        raise ConfigError(prefix, "expected an object")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    names = set(fields)
    kwargs = {} if base is None else {n: getattr(base, n) for n in names}
    for k, v in doc.items():
        key = f"{prefix}.{k}" if prefix else k
        if k not in names:
            raise ConfigError(key, "unknown key")
        nested_base = kwargs.get(k, _default(fields[k]))
        kwargs[k] = _convert(hints[k], v, key, nested_base)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        # validators phrase errors as "<field> must ...": point at that field
        field_name = str(exc).split()[0]
        key = field_name if field_name in names else ""
        if prefix:
            key = f"{prefix}.{key}" if key else prefix
        raise ConfigError(key, str(exc)) from None


def parse_config(document) -> RunConfig:
    """Build a RunConfig from JSON text or an already-decoded mapping."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"malformed JSON: {exc}") from None
    return _build(RunConfig, document)


def config_to_dict(config: RunConfig) -> dict:
    def plain(v):
        if isinstance(v, Enum):
            return v.value
        if isinstance(v, (list, tuple)):
            return [plain(x) for x in v]
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        return v

    return plain(dataclasses.asdict(config))


def dump_config(config: RunConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n"


def apply_overrides(document: dict, overrides) -> dict:
    """Apply ``key.sub=value`` strings to a decoded document (copy returned).

    Values are read as JSON when they parse, otherwise as plain strings, so
    ``condition=full_hybrid`` and ``hyper.gamma=0.9`` both work.
    """
    doc = json.loads(json.dumps(document))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        path, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = path.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(path, "cannot override inside a non-object")
        node[parts[-1]] = value
    return doc
