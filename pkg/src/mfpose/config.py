"""The run configuration document: strict YAML/JSON loading and ``key=value`` overrides.

Document layout (schema 1)::

    schema: 1
    output: runs/demo          # optional; defaults to $MFPOSE_OUT or ./runs
    train:   {batch_size, epochs, lr, ..., model: {backbone: {...}, msff: {...}, ...}}
    data:    {seed, eval_seed, eval_videos, spec: {num_videos, frames_per_video, ...}}
    metrics: {threshold}

Unknown keys anywhere are rejected with their dotted path.
"""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from mfpose.data.synthetic import DatasetSpec
from mfpose.errors import ConfigError
from mfpose.metrics import DEFAULT_THRESHOLD
from mfpose.train.engine import TrainConfig

SCHEMA = 1


@dataclass(frozen=True)
class DataConfig:
    spec: DatasetSpec = field(default_factory=DatasetSpec)
    seed: int = 1
    eval_seed: int = 2
    eval_videos: int = 30

    def eval_spec(self) -> DatasetSpec:
        return dataclasses.replace(self.spec, num_videos=self.eval_videos)


@dataclass(frozen=True)
class MetricsConfig:
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not self.threshold > 0:
            raise ConfigError("metrics.threshold must be > 0")


@dataclass(frozen=True)
class RunConfig:
    schema: int = SCHEMA
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    output: typing.Optional[str] = None

    def __post_init__(self):
        if self.schema != SCHEMA:
            raise ConfigError(f"schema: unsupported version {self.schema!r} (expected {SCHEMA})")

    def to_dict(self) -> dict:
        return _to_plain(self)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _coerce(value, tp, path: str):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return build(tp, value, path)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path)
    if tp is tuple or origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return tuple(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, str):
            # YAML 1.1 reads exponent forms like 5e-6 as strings
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def build(cls, data, path: str = ""):
    """Instantiate dataclass ``cls`` from nested dicts, rejecting unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError(f"unknown config key {where!r}")
    kwargs = {k: _coerce(v, hints[k], f"{path}.{k}" if path else k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from None


def parse_override(item: str) -> tuple[list, object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {item!r} has an empty key")
    return key.split("."), yaml.safe_load(raw) if raw.strip() else ""


def apply_overrides(doc: dict, overrides) -> dict:
    """Set dotted keys in a plain dict; later overrides win."""
    for item in overrides or ():
        parts, value = parse_override(item)
        node = doc
        for part in parts[:-1]:
            nxt = node.get(part)
            if nxt is None:
                nxt = node[part] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {item!r}: {part!r} is not a section")
            node = nxt
        node[parts[-1]] = value
    return doc


def read_document(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot parse ({exc})") from None
    return doc or {}


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the file (if any), then overrides; the result is validated as a whole."""
    doc = RunConfig().to_dict()
    if path is not None:
        _merge(doc, read_document(path), "")
    apply_overrides(doc, overrides)
    return build(RunConfig, doc)


def _merge(base: dict, update: dict, path: str) -> None:
    if not isinstance(update, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping")
    for key, value in update.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _merge(base[key], value, where)
        else:
            base[key] = value
