"""Per-user demographic fusion and age-group assignment."""

from __future__ import annotations

import re
import statistics
from collections import Counter
from typing import Iterable

from ..core import AGE_GROUPS, age_group_for

_GROUP_ALIASES = {
    "child": "child", "children": "child", "kid": "child", "kids": "child",
    "young": "child", "adolescent": "child", "teen": "child",
    "adult": "adult", "adults": "adult", "middle": "adult", "middle-aged": "adult",
    "elderly": "elderly", "old": "elderly", "older": "elderly", "senior": "elderly",
}
_RANGE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*[-–]\s*(\d+(?:\.\d+)?)\s*$")


def aggregate_user_demographics(
    estimates: Iterable[tuple[str, float | None, str | None]],
) -> tuple[float | None, str | None]:
    """Fuse per-image (sample_id, age, gender) estimates of one user.

    Age is the median, gender the mode. A gender tie goes to whichever tied
    gender belongs to the lowest sample_id.
    """
    estimates = list(estimates)
    if not estimates:
        raise ValueError("aggregate_user_demographics needs at least one estimate")
    ages = [a for _, a, _ in estimates if a is not None]
    age = float(statistics.median(ages)) if ages else None

    genders = [(sid, g) for sid, _, g in estimates if g is not None]
    gender = None
    if genders:
        counts = Counter(g for _, g in genders)
        top = max(counts.values())
        tied = {g for g, n in counts.items() if n == top}
        gender = min((sid, g) for sid, g in genders if g in tied)[1]
    return age, gender


def parse_age_group_label(label: str) -> str | None:
    """Map a dataset-provided age-group label onto child/adult/elderly."""
    text = label.strip().casefold()
    if text in _GROUP_ALIASES:
        return _GROUP_ALIASES[text]
    m = _RANGE.match(text)
    if m:
        lo, hi = (age_group_for(float(v)) for v in m.groups())
        if lo == hi:
            return lo
    return None


def assign_age_group(
    dataset_age: float | None = None,
    dataset_group: str | None = None,
    estimated_age: float | None = None,
) -> str | None:
    """Pick the age group from the best available source.

    Priority: dataset age, then dataset age-group label, then the automatic
    estimate. Returns None when no source is usable.
    """
    if dataset_age is not None:
        return age_group_for(dataset_age)
    if dataset_group is not None:
        group = dataset_group if dataset_group in AGE_GROUPS else parse_age_group_label(dataset_group)
        if group is not None:
            return group
    if estimated_age is not None:
        return age_group_for(estimated_age)
    return None
