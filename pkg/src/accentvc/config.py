"""Run configuration files.

One YAML document with five sections (world, corpus, recognizer, train,
eval), each mapping onto a dataclass.  Unknown sections or keys are hard
errors so a typo can never fall back to a silent default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace

import yaml

from .errors import ConfigError
from .recognizer import RecognizerConfig
from .training import TrainConfig
from .world import WorldSpec


@dataclass(frozen=True)
class CorpusParams:
    n_target_utts: int = 200
    n_source_utts: int = 30
    n_sources: int = 9
    train_fraction: float = 0.9


@dataclass(frozen=True)
class EvalConfig:
    probe_utts_per_cell: int = 20      # per (speaker, accent) judge cell
    conversion_utts: int = 30          # source utterances converted per system
    parallel_groups: int = 24          # content groups for encoder geometry
    probe_fit_groups: int = 12         # groups the h-level probe is fitted on
    h_probe_epochs: int = 80           # budgeted on purpose: the metric is
                                       # accessibility, not asymptotic fit
    bn_probe_utts_per_cell: int = 10   # bottleneck accent-probe corpus size
    bn_probe_epochs: int = 20          # same budgeting rationale as above
    accent_judge_epochs: int = 100     # partial-offset renders should grade,
                                       # not snap to the nearest class
    seeds: tuple = (1, 2, 3, 4, 5)     # ablation seed suite


@dataclass(frozen=True)
class RunConfig:
    world: WorldSpec = field(default_factory=WorldSpec)
    corpus: CorpusParams = field(default_factory=CorpusParams)
    recognizer: RecognizerConfig = field(default_factory=RecognizerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


_SECTIONS = {"world": WorldSpec, "corpus": CorpusParams,
             "recognizer": RecognizerConfig, "train": TrainConfig,
             "eval": EvalConfig}


def _build_section(name: str, cls, data: dict):
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section {name!r}; "
                          f"known keys: {sorted(known)}")
    coerced = {}
    for key, value in data.items():
        if key == "seeds":
            value = tuple(value)
        coerced[key] = value
    try:
        built = cls(**coerced)
    except TypeError as e:
        raise ConfigError(f"bad value in section {name!r}: {e}") from None
    if hasattr(built, "validate"):
        built.validate()
    return built


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config section(s) {unknown}; "
                          f"known sections: {sorted(_SECTIONS)}")
    parts = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name, {})
        if section is None:
            section = {}
        if not isinstance(section, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        parts[name] = _build_section(name, cls, section)
    return RunConfig(**parts)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if data is None:
        data = {}
    return config_from_dict(data)


def config_to_dict(config: RunConfig) -> dict:
    """Plain nested dict; tuples become lists so the result round-trips
    through JSON and YAML unchanged."""
    out = {}
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(config, name))
        for key, value in section.items():
            if isinstance(value, tuple):
                section[key] = list(value)
        out[name] = section
    return out


def save_config(path, config: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config_to_dict(config), f, sort_keys=True)


def with_overrides(config: RunConfig, system: str | None = None,
                   seed: int | None = None) -> RunConfig:
    """Apply the command-line --system / --seed flags onto the train section."""
    train = config.train
    if system is not None:
        train = replace(train, system=system)
    if seed is not None:
        train = replace(train, seed=seed)
    return replace(config, train=train)
