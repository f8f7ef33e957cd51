"""Mapping raw dataset labels onto the seven canonical expressions."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..core import EXPRESSIONS

WILDCARD = "*"


@dataclass(frozen=True)
class Unmapped:
    """A raw label with no canonical counterpart."""
    original: str


def _key(text: str) -> str:
    return text.strip().casefold()


@dataclass
class ClassMap:
    entries: dict[tuple[str, str], str] = field(default_factory=dict)

    def add(self, raw_label: str, dataset: str, canonical: str) -> None:
        if canonical not in EXPRESSIONS:
            raise ValueError(f"{canonical!r} is not a canonical expression")
        self.entries[(_key(raw_label), _key(dataset))] = canonical

    def lookup(self, label_raw: str, dataset: str) -> str | Unmapped:
        label = _key(label_raw)
        hit = self.entries.get((label, _key(dataset)))
        if hit is None:
            hit = self.entries.get((label, WILDCARD))
        return hit if hit is not None else Unmapped(label_raw)

    @classmethod
    def from_csv(cls, path) -> ClassMap:
        with open(path, newline="", encoding="utf-8") as f:
            return cls._from_rows(csv.DictReader(f))

    @classmethod
    def default(cls) -> ClassMap:
        text = resources.files(__package__).joinpath("class_map.csv").read_text(encoding="utf-8")
        return cls._from_rows(csv.DictReader(text.splitlines()))

    @classmethod
    def _from_rows(cls, rows) -> ClassMap:
        cmap = cls()
        for row in rows:
            cmap.add(row["raw_label"], row["dataset"], row["canonical_label"].strip())
        return cmap

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["raw_label", "dataset", "canonical_label"])
            for (raw, ds), canon in self.entries.items():
                writer.writerow([raw, ds, canon])


_DEFAULT: ClassMap | None = None


def unify_class(label_raw: str, dataset: str, class_map: ClassMap | None = None) -> str | Unmapped:
    global _DEFAULT
    if class_map is None:
        if _DEFAULT is None:
            _DEFAULT = ClassMap.default()
        class_map = _DEFAULT
    return class_map.lookup(label_raw, dataset)
