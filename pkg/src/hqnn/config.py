"""Experiment configuration files (YAML).

Example::

    seed: 7
    output_dir: runs/ra
    dataset:
      kind: synthetic          # or "directory" / "csv"
      n_classes: 4
      n_per_class: 50
      image_size: 16
      train_fraction: 0.8
    model:
      kind: real_amplitudes    # no_entanglement | bellman | real_amplitudes | classical_v1 | classical_v2
      cnn: default             # or a list of layer dicts
    train:
      epochs: 50
      lr: 0.001
      batch_size: 4

Command-line ``--set section.key=value`` overrides are applied before
validation; values are parsed as YAML scalars.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError
from .hybrid import DEFAULT_CLUSTERS, MODEL_KINDS

DATASET_KINDS = ("synthetic", "directory", "csv")


@dataclass
class DatasetConfig:
    kind: str = "synthetic"
    path: str | None = None
    image_size: int = 64
    train_fraction: float = 0.8
    per_class: int | None = None  # stratified cap for real datasets
    n_classes: int = 4
    n_per_class: int = 50
    noise: float = 0.1
    class_names: list[str] | None = None


@dataclass
class ModelConfig:
    kind: str = "real_amplitudes"
    cnn: Any = "default"
    freeze_quantum_weights: bool = False
    readout_init_scale: float = 1.0


@dataclass
class TrainSection:
    epochs: int = 50
    lr: float = 0.0002
    batch_size: int = 32


@dataclass
class CoarseToFineConfig:
    clusters: dict[str, list[str]] = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_CLUSTERS.items()})
    coarse_checkpoint: str | None = None
    fine_checkpoints: dict[str, str] = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)
    coarse2fine: CoarseToFineConfig = field(default_factory=CoarseToFineConfig)
    output_dir: str = "runs/default"
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def validate(self, check_paths: bool = True) -> "ExperimentConfig":
        ds = self.dataset
        if ds.kind not in DATASET_KINDS:
            raise ConfigurationError(f"dataset.kind must be one of {DATASET_KINDS}, got {ds.kind!r}")
        if ds.kind != "synthetic":
            if not ds.path:
                raise ConfigurationError(f"dataset.path is required for a {ds.kind} dataset")
            if check_paths and not Path(ds.path).exists():
                raise ConfigurationError(f"dataset.path {ds.path} does not exist")
        if not 0 < ds.train_fraction < 1:
            raise ConfigurationError("dataset.train_fraction must lie in (0, 1)")
        if ds.image_size < 1 or ds.n_classes < 2 or ds.n_per_class < 2:
            raise ConfigurationError("dataset sizes are out of range")
        if self.model.kind not in MODEL_KINDS:
            raise ConfigurationError(f"model.kind must be one of {MODEL_KINDS}, got {self.model.kind!r}")
        if not (self.model.cnn == "default" or isinstance(self.model.cnn, list)):
            raise ConfigurationError("model.cnn must be 'default' or a list of layer definitions")
        if not self.model.readout_init_scale > 0:
            raise ConfigurationError("model.readout_init_scale must be positive")
        tr = self.train
        if tr.epochs <= 0 or tr.lr < 0 or tr.batch_size <= 0:
            raise ConfigurationError("train.epochs/batch_size must be positive and train.lr non-negative")
        if not isinstance(self.coarse2fine.clusters, dict) or not self.coarse2fine.clusters:
            raise ConfigurationError("coarse2fine.clusters must be a non-empty mapping")
        return self


_SECTIONS = {"dataset": DatasetConfig, "model": ModelConfig, "train": TrainSection, "coarse2fine": CoarseToFineConfig}
_TOP_LEVEL = {"output_dir", "seed"}


def from_dict(raw: dict | None) -> ExperimentConfig:
    raw = copy.deepcopy(raw or {})
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be a mapping")
    unknown = set(raw) - set(_SECTIONS) - _TOP_LEVEL
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {k: raw[k] for k in _TOP_LEVEL if k in raw}
    for name, cls in _SECTIONS.items():
        section = raw.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigurationError(f"section {name!r} must be a mapping")
        try:
            kwargs[name] = cls(**section)
        except TypeError as exc:
            raise ConfigurationError(f"bad keys in section {name!r}: {exc}") from exc
    try:
        cfg = ExperimentConfig(**kwargs)
        cfg.seed = int(cfg.seed)
        cfg.output_dir = str(cfg.output_dir)
        for sec, attrs in (("dataset", ("image_size", "n_classes", "n_per_class")), ("train", ("epochs", "batch_size"))):
            for a in attrs:
                setattr(getattr(cfg, sec), a, int(getattr(getattr(cfg, sec), a)))
        cfg.train.lr = float(cfg.train.lr)
        cfg.model.readout_init_scale = float(cfg.model.readout_init_scale)
        cfg.dataset.train_fraction = float(cfg.dataset.train_fraction)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid config value: {exc}") from exc
    return cfg


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``a.b=value`` strings to a raw config mapping."""
    raw = copy.deepcopy(raw or {})
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {item!r} descends into a non-mapping")
        node[parts[-1]] = yaml.safe_load(value)
    return raw


def load(path, overrides: list[str] | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from exc
    return from_dict(apply_overrides(raw, overrides or []))


def loads(text: str) -> ExperimentConfig:
    return from_dict(yaml.safe_load(text) or {})
