"""Cross-validation folds: subject-disjoint when user ids exist, stratified otherwise."""

from __future__ import annotations

import json
import random
from collections import defaultdict
from dataclasses import dataclass

from ..core import DatasetManifest
from ..errors import FoldError

SUBJECT_COVERAGE = 0.9


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_ids: frozenset[str]
    val_ids: frozenset[str]

    def to_dict(self) -> dict:
        return {"fold_index": self.fold_index,
                "train_ids": sorted(self.train_ids),
                "val_ids": sorted(self.val_ids)}

    @classmethod
    def from_dict(cls, data) -> FoldSplit:
        return cls(int(data["fold_index"]), frozenset(data["train_ids"]), frozenset(data["val_ids"]))


def folds_to_json(folds: list[FoldSplit]) -> str:
    return json.dumps([f.to_dict() for f in folds], indent=1) + "\n"


def folds_from_json(text: str) -> list[FoldSplit]:
    return [FoldSplit.from_dict(d) for d in json.loads(text)]


def _subject_groups(samples) -> dict[str, list[str]]:
    groups = defaultdict(list)
    for s in samples:
        # samples without a user id form their own singleton group
        key = f"user:{s.user_id}" if s.user_id is not None else f"sample:{s.sample_id}"
        groups[key].append(s.sample_id)
    return groups


def _subject_disjoint(samples, k, rng) -> list[set[str]]:
    groups = _subject_groups(samples)
    n = len(samples)
    largest = max(len(v) for v in groups.values())
    if largest > (1 - 1 / k) * n:
        raise FoldError(f"largest subject holds {largest} of {n} samples; "
                        f"cannot build {k} subject-disjoint folds")
    if len(groups) < k:
        raise FoldError(f"only {len(groups)} subjects for {k} folds")
    keys = sorted(groups)
    rng.shuffle(keys)
    keys.sort(key=lambda g: len(groups[g]), reverse=True)  # stable: shuffle breaks size ties
    folds = [set() for _ in range(k)]
    for g in keys:
        target = min(range(k), key=lambda i: (len(folds[i]), i))
        folds[target].update(groups[g])
    return folds


def _stratified(samples, k, rng) -> list[set[str]]:
    by_class = defaultdict(list)
    for s in samples:
        by_class[s.label or ""].append(s.sample_id)
    folds = [set() for _ in range(k)]
    cursor = 0
    for label in sorted(by_class):
        ids = sorted(by_class[label])
        rng.shuffle(ids)
        for sid in ids:
            folds[cursor % k].add(sid)
            cursor += 1
    return folds


def make_folds(manifest: DatasetManifest, fold_count: int = 5, seed: int = 0) -> list[FoldSplit]:
    if fold_count < 2:
        raise FoldError("fold_count must be at least 2")
    samples = sorted(manifest.included(), key=lambda s: s.sample_id)
    if len(samples) < fold_count:
        raise FoldError(f"{manifest.name}: {len(samples)} samples for {fold_count} folds")
    rng = random.Random(f"{manifest.name}:{fold_count}:{seed}")
    with_user = sum(1 for s in samples if s.user_id is not None)
    if with_user >= SUBJECT_COVERAGE * len(samples):
        val_sets = _subject_disjoint(samples, fold_count, rng)
    else:
        val_sets = _stratified(samples, fold_count, rng)
    everything = frozenset(s.sample_id for s in samples)
    return [FoldSplit(i, everything - frozenset(v), frozenset(v)) for i, v in enumerate(val_sets)]

