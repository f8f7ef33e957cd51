"""Dataset-level statistics behind the exploration figures."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .core import AGE_GROUPS, EXPRESSIONS, GENDERS, DatasetManifest, atomic_write_text


@dataclass
class StatisticsBundle:
    # every count is post-exclusion
    image_count_per_dataset: dict[str, int] = field(default_factory=dict)
    user_count_per_dataset: dict[str, int] = field(default_factory=dict)
    images_per_user: dict[str, float] = field(default_factory=dict)
    age_histogram: dict[int, int] = field(default_factory=dict)
    gender_distribution: dict[str, tuple[float, float]] = field(default_factory=dict)
    age_group_distribution: dict[str, dict[str, float]] = field(default_factory=dict)
    class_distribution: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def datasets(self) -> list[str]:
        return sorted(self.image_count_per_dataset)


def _fractions(counter: Counter, categories) -> dict[str, float]:
    total = sum(counter[c] for c in categories)
    return {c: counter[c] / total for c in categories if counter[c] > 0}


def compute_statistics(manifests: list[DatasetManifest]) -> StatisticsBundle:
    if not manifests:
        raise ValueError("compute_statistics needs at least one manifest")
    bundle = StatisticsBundle()
    ages: Counter = Counter()
    per_dataset = defaultdict(list)
    for m in manifests:
        per_dataset[m.name].extend(m.included())

    for name in sorted(per_dataset):
        samples = per_dataset[name]
        bundle.image_count_per_dataset[name] = len(samples)

        users = Counter(s.user_id for s in samples if s.user_id is not None)
        if users:
            bundle.user_count_per_dataset[name] = len(users)
            bundle.images_per_user[name] = sum(users.values()) / len(users)

        genders = Counter(s.gender for s in samples if s.gender is not None)
        if genders:
            total = sum(genders.values())
            bundle.gender_distribution[name] = (genders["male"] / total, genders["female"] / total)

        groups = Counter(s.age_group for s in samples if s.age_group is not None)
        if groups:
            bundle.age_group_distribution[name] = _fractions(groups, AGE_GROUPS)

        labels = Counter(s.label for s in samples if s.label is not None)
        if labels:
            bundle.class_distribution[name] = _fractions(labels, EXPRESSIONS)

        for s in samples:
            if s.age_years is not None:
                ages[math.floor(s.age_years)] += 1

    bundle.age_histogram = dict(sorted(ages.items()))
    return bundle


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def statistics_tables(bundle: StatisticsBundle) -> dict[str, tuple[list[str], list[list]]]:
    """Tabulate each statistic as (header, rows), rows ordered by dataset name."""
    tables = {}
    tables["image_count"] = (["dataset", "image_count"],
                             [[d, n] for d, n in sorted(bundle.image_count_per_dataset.items())])
    tables["user_count"] = (["dataset", "user_count"],
                            [[d, n] for d, n in sorted(bundle.user_count_per_dataset.items())])
    tables["images_per_user"] = (["dataset", "images_per_user"],
                                 [[d, _fmt(v)] for d, v in sorted(bundle.images_per_user.items())])
    tables["age_histogram"] = (["age_years", "count"],
                               [[a, n] for a, n in sorted(bundle.age_histogram.items())])
    tables["gender_distribution"] = (
        ["dataset", *GENDERS],
        [[d, _fmt(m), _fmt(f)] for d, (m, f) in sorted(bundle.gender_distribution.items())],
    )
    tables["age_group_distribution"] = (
        ["dataset", *AGE_GROUPS],
        [[d] + [_fmt(fr.get(g, 0.0)) for g in AGE_GROUPS]
         for d, fr in sorted(bundle.age_group_distribution.items())],
    )
    tables["class_distribution"] = (
        ["dataset", *EXPRESSIONS],
        [[d] + [_fmt(fr.get(c, 0.0)) for c in EXPRESSIONS]
         for d, fr in sorted(bundle.class_distribution.items())],
    )
    return tables


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def export_statistics(bundle: StatisticsBundle, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for name, (header, rows) in statistics_tables(bundle).items():
        path = out_dir / f"{name}.csv"
        atomic_write_text(path, csv_text(header, rows))
        written.append(path)
    return written
