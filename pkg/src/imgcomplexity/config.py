"""Run configuration: a YAML file plus command-line overrides."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .embed import EmbedConfig
from .entropy import EntropyConfig

DEFAULT_NEIGHBORS = (2, 20, 100, 500)


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    id: str
    root: str


@dataclass(frozen=True)
class IntdimConfig:
    mode: str = "flat_pixels"
    side: int = 32
    glcm_levels: int = 32
    k1: int = 10
    k2: int = 20


@dataclass(frozen=True)
class EmbedSweep:
    neighbors: tuple[int, ...] = DEFAULT_NEIGHBORS
    glcm_levels: int = 32
    min_dist: float = 0.1
    spread: float = 1.0
    n_epochs: int | None = None
    negative_samples: int = 5
    learning_rate: float = 1.0
    init: str = "spectral"
    seed: int = 0

    def config_for(self, n_neighbors: int) -> EmbedConfig:
        return EmbedConfig(n_neighbors=n_neighbors, min_dist=self.min_dist, spread=self.spread,
                           n_epochs=self.n_epochs, negative_samples=self.negative_samples,
                           learning_rate=self.learning_rate, init=self.init, seed=self.seed)


@dataclass
class RunConfig:
    datasets: list[DatasetSpec] = field(default_factory=list)
    entropy: EntropyConfig = field(default_factory=EntropyConfig)
    intdim: IntdimConfig = field(default_factory=IntdimConfig)
    embed: EmbedSweep = field(default_factory=EmbedSweep)
    output_dir: str = "runs"
    threads: int = 0

    def __post_init__(self):
        ids = [d.id for d in self.datasets]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"dataset ids must be unique, got {ids}")

    @property
    def workers(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["entropy"] = self.entropy.to_dict()
        d["embed"]["neighbors"] = list(self.embed.neighbors)
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        # worker count and output location never change results
        d.pop("threads")
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _build(cls, raw: dict | None, section: str):
    raw = raw or {}
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return raw


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw or {})
    unknown = set(raw) - {"datasets", "entropy", "intdim", "embed", "output_dir", "threads"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        datasets = [DatasetSpec(str(d["id"]), str(d["root"])) for d in raw.get("datasets", [])]
        entropy = EntropyConfig.from_dict(_build(EntropyConfig, raw.get("entropy"), "entropy"))
        intdim = IntdimConfig(**_build(IntdimConfig, raw.get("intdim"), "intdim"))
        embed_raw = dict(_build(EmbedSweep, raw.get("embed"), "embed"))
        if "neighbors" in embed_raw:
            embed_raw["neighbors"] = tuple(int(k) for k in embed_raw["neighbors"])
        embed = EmbedSweep(**embed_raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return RunConfig(datasets, entropy, intdim, embed,
                     str(raw.get("output_dir", "runs")), int(raw.get("threads", 0)))


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(yaml.safe_load(text) or {})


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)
