"""Run configuration: INI-style file sections merged with command-line overrides."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .data import SynthConfig
from .graph import SubgraphSpec
from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


@dataclass(frozen=True)
class GraphConfig:
    span_audio: int = 3
    dilation_audio: int = 1
    span_video: int = 1
    dilation_video: int = 1

    def specs(self, n_audio: int, n_video: int) -> tuple[SubgraphSpec, SubgraphSpec]:
        return (SubgraphSpec(n_audio, self.span_audio, self.dilation_audio),
                SubgraphSpec(n_video, self.span_video, self.dilation_video))


@dataclass(frozen=True)
class DataConfig:
    path: str = ""
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    graph: GraphConfig = field(default_factory=GraphConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    # "section.key" names set by a file or a flag rather than left at default
    explicit: frozenset = field(default=frozenset(), compare=False)

    def as_dict(self) -> dict:
        out = {name: asdict(getattr(self, name)) for name in _SECTIONS}
        out["data"]["split"] = list(self.data.split)
        return out

    def is_set(self, section: str, key: str) -> bool:
        return f"{section}.{key}" in self.explicit


_SECTIONS = {"graph": GraphConfig, "model": ModelConfig, "train": TrainConfig,
             "data": DataConfig, "synth": SynthConfig}


def _coerce(cls, key: str, raw):
    kinds = {f.name: f.type for f in fields(cls)}
    if key not in kinds:
        raise ConfigError(f"unknown key {key!r} in [{_section_name(cls)}]")
    default = getattr(cls(), key)
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            return str(raw).strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = raw if isinstance(raw, (list, tuple)) else str(raw).split(",")
            return tuple(float(p) for p in parts)
        return str(raw).strip()
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {raw!r} for [{_section_name(cls)}] {key}") from None


def _section_name(cls) -> str:
    return next(name for name, c in _SECTIONS.items() if c is cls)


def build_config(path: str | Path | None = None,
                 overrides: dict[str, dict] | None = None,
                 defaults: dict[str, dict] | None = None) -> RunConfig:
    """Merge defaults, a config file and overrides (later wins), then validate.

    ``overrides`` and ``defaults`` map section name to ``{key: value}``;
    ``None`` values are ignored so unset command-line flags fall through.
    """
    values: dict[str, dict] = {name: {} for name in _SECTIONS}
    explicit: set[str] = set()
    for section, items in (defaults or {}).items():
        for key, raw in items.items():
            if raw is not None:
                values[section][key] = _coerce(_SECTIONS[section], key, raw)
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if parser.defaults():
            raise ConfigError(f"keys outside a section in {path}: {sorted(parser.defaults())}")
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}] in {path}")
            for key, raw in parser.items(section):
                values[section][key] = _coerce(_SECTIONS[section], key, raw)
                explicit.add(f"{section}.{key}")
    for section, items in (overrides or {}).items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section {section!r}")
        for key, raw in items.items():
            if raw is not None:
                values[section][key] = _coerce(_SECTIONS[section], key, raw)
                explicit.add(f"{section}.{key}")
    try:
        built = {name: cls(**values[name]) for name, cls in _SECTIONS.items()}
        # builds the subgraph specs once to validate span/dilation
        built["graph"].specs(built["model"].n_audio, built["model"].n_video)
        split = built["data"].split
        if len(split) != 3 or any(f < 0 for f in split) or abs(sum(split) - 1) > 1e-9:
            raise ValueError(f"split fractions must be three non-negatives summing to 1: {split}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(**built, explicit=frozenset(explicit))


def with_section(cfg: RunConfig, section: str, **changes) -> RunConfig:
    return replace(cfg, **{section: replace(getattr(cfg, section), **changes)})
