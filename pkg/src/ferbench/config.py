"""Run configuration (YAML)."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .normalize.frames import STRATEGIES
from .training.trainer import TrainingConfig

OUT_ENV = "FERBENCH_OUT"
ADAPTER_ROLES = ("detector", "landmarks", "age_gender")


@dataclass
class DatasetConfig:
    name: str
    root: Path
    layout: str = "synthetic"
    provenance: str = "lab_controlled"
    sampling: str = "passthrough"


@dataclass
class RunConfig:
    datasets: dict[str, DatasetConfig]
    output_root: Path
    seed: int = 0
    class_map_path: Path | None = None
    adapters: dict[str, str] = field(default_factory=lambda: {r: "stub" for r in ADAPTER_ROLES})
    architectures: list[str] = field(default_factory=lambda: ["swin_t", "convnext_tiny"])
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def validate(self) -> None:
        problems = []
        for ds in self.datasets.values():
            if not ds.root.exists():
                problems.append(f"dataset {ds.name}: root {ds.root} does not exist")
            if ds.sampling not in STRATEGIES:
                problems.append(f"dataset {ds.name}: unknown sampling {ds.sampling!r}")
        if self.class_map_path is not None and not self.class_map_path.exists():
            problems.append(f"class map {self.class_map_path} does not exist")
        for role in self.adapters:
            if role not in ADAPTER_ROLES:
                problems.append(f"unknown adapter role {role!r}")
        if problems:
            raise ConfigError("; ".join(problems))

    def with_seed(self, seed: int) -> RunConfig:
        self.seed = seed
        self.training.seed = seed
        return self


def load_config(path, validate: bool = True) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    base = path.parent

    def resolve(p):
        p = Path(os.path.expanduser(str(p)))
        return p if p.is_absolute() else (base / p)

    datasets = {}
    for name, entry in (raw.get("datasets") or {}).items():
        if isinstance(entry, str):
            entry = {"root": entry}
        datasets[name] = DatasetConfig(
            name=name,
            root=resolve(entry["root"]),
            layout=entry.get("layout", "synthetic"),
            provenance=entry.get("provenance", "lab_controlled"),
            sampling=entry.get("sampling", "passthrough"),
        )
    out = os.environ.get(OUT_ENV) or raw.get("output_root", "out")
    seed = int(raw.get("seed", 0))
    training_raw = dict(raw.get("training") or {})
    architectures = training_raw.pop("architectures", None) or ["swin_t", "convnext_tiny"]
    training_raw.setdefault("seed", seed)
    try:
        training = TrainingConfig(**training_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad training section: {exc}") from None
    adapters = {r: "stub" for r in ADAPTER_ROLES}
    adapters.update(raw.get("adapters") or {})
    cfg = RunConfig(
        datasets=datasets,
        output_root=resolve(out),
        seed=seed,
        class_map_path=resolve(raw["class_map"]) if raw.get("class_map") else None,
        adapters=adapters,
        architectures=list(architectures),
        training=training,
    )
    if validate:
        cfg.validate()
    return cfg
