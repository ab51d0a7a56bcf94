"""Run configuration: nested defaults, JSON round-trip, dotted-path overrides.

Every field has a default so an empty config document is valid; stage seeds
derive from the global seed unless pinned explicitly.
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass
class FilterSettings:
    enabled: bool = True
    window: int = 11
    order: int = 3


@dataclass
class PreprocessSettings:
    deduplicate: bool = True
    filter: FilterSettings = field(default_factory=FilterSettings)
    train_fraction: float = 0.8
    stratify_bins: int = 10
    seed: int | None = None  # defaults to the global seed


@dataclass
class OptimizerSettings:
    memory: int = 10
    max_iterations: int = 200
    gradient_tolerance: float = 1e-6
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search_steps: int = 40


@dataclass
class GpSettings:
    ard: bool = True
    restarts: int = 3
    seed: int | None = None  # defaults to global seed + 1
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)


@dataclass
class LimeSettings:
    n_samples: int = 1000
    kernel_width: float | None = None  # None: 0.75 * sqrt(d)
    distribution: str = "gaussian"
    scale: float = 1.0
    l1_penalty: float = 0.01
    rank_by: str = "mean_abs"
    seed: int | None = None  # defaults to global seed + 2


@dataclass
class SelectionSettings:
    strategy: str = "elbow"
    threshold: float = 0.90
    bootstrap_samples: int = 100
    inclusion_threshold: float = 0.7
    improvement_floor: float = 0.01  # relative RMSE gain required to keep adding
    seed: int | None = None  # defaults to global seed + 3


@dataclass
class RunConfig:
    input_path: str = "data.csv"
    schema_path: str | None = None  # None: built-in drilling schema
    output_dir: str = "out"
    seed: int = 42
    preprocess: PreprocessSettings = field(default_factory=PreprocessSettings)
    gp: GpSettings = field(default_factory=GpSettings)
    lime: LimeSettings = field(default_factory=LimeSettings)
    select: SelectionSettings = field(default_factory=SelectionSettings)

    @property
    def split_seed(self) -> int:
        return self.preprocess.seed if self.preprocess.seed is not None else self.seed

    @property
    def fit_seed(self) -> int:
        return self.gp.seed if self.gp.seed is not None else self.seed + 1

    @property
    def lime_seed(self) -> int:
        return self.lime.seed if self.lime.seed is not None else self.seed + 2

    @property
    def select_seed(self) -> int:
        return self.select.seed if self.select.seed is not None else self.seed + 3


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def _coerce(raw, annotation, key: str):
    origin = typing.get_origin(annotation)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if raw is None:
            return None
        if isinstance(raw, str) and raw.lower() in ("none", "null"):
            return None
        return _coerce(raw, args[0], key)
    if annotation is bool:
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw.lower() in ("true", "false", "1", "0", "yes", "no"):
            return raw.lower() in ("true", "1", "yes")
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if annotation is int:
        if isinstance(raw, bool):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
        try:
            value = int(str(raw))
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
        return value
    if annotation is float:
        try:
            return float(str(raw))
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if annotation is str:
        return str(raw)
    raise ConfigError(f"{key}: unsupported value {raw!r}")


def _build(cls, doc: dict, prefix: str = ""):
    if not isinstance(doc, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object, got {type(doc).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config key {prefix}{sorted(unknown)[0]!r}")
    kwargs = {}
    hints = typing.get_type_hints(cls)
    for name, f in fields.items():
        if name not in doc:
            continue
        annotation = hints[name]
        if dataclasses.is_dataclass(annotation):
            kwargs[name] = _build(annotation, doc[name], prefix=f"{prefix}{name}.")
        else:
            kwargs[name] = _coerce(doc[name], annotation, f"{prefix}{name}")
    return cls(**kwargs)


def config_from_dict(doc: dict) -> RunConfig:
    return _build(RunConfig, doc)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def apply_overrides(cfg: RunConfig, overrides: dict[str, object]) -> RunConfig:
    """Return a copy of cfg with dotted-path overrides applied, e.g. gp.restarts=5."""
    doc = config_to_dict(cfg)
    for dotted, raw in overrides.items():
        parts = dotted.split(".")
        node = doc
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"unknown config key {dotted!r}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node[parts[-1]] = raw
    return config_from_dict(doc)


def parse_set_option(pairs) -> dict[str, str]:
    """Parse repeated ``key=value`` strings from the command line."""
    overrides: dict[str, str] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        overrides[key] = value
    return overrides
