"""Unified data model and the line-delimited manifest format."""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Literal
from urllib.parse import quote

from .errors import ManifestError

EXPRESSIONS: tuple[str, ...] = (
    "anger",
    "disgust",
    "fear",
    "happiness",
    "sadness",
    "surprise",
    "neutral",
)
MEDIA_TYPES = ("image", "video")
GENDERS = ("male", "female")
AGE_GROUPS = ("child", "adult", "elderly")
HEAD_POSES = ("front", "half_left", "half_right", "full_left", "full_right", "back")
PROVENANCES = ("web_automatic", "web_manual", "lab_controlled")

Provenance = Literal["web_automatic", "web_manual", "lab_controlled"]

REQUIRED_KEYS = ("dataset", "sample_id", "media_path", "media_type", "label_raw", "excluded")
MANIFEST_META_KEY = "__manifest__"


def processed_image_path(processed_root, dataset: str, sample_id: str) -> Path:
    """Location of a preprocessed face: ``<root>/<dataset>/<sample_id>.png``."""
    return Path(processed_root) / quote(dataset, safe="") / f"{quote(sample_id, safe='')}.png"


def label_order(labels: Iterable[str]) -> list[str]:
    """Sort expression labels in canonical order."""
    return sorted(set(labels), key=EXPRESSIONS.index)


def age_group_for(age_years: float) -> str:
    age = math.floor(age_years)
    if age <= 17:
        return "child"
    if age <= 59:
        return "adult"
    return "elderly"


@dataclass
class SampleRecord:
    dataset: str
    sample_id: str
    media_path: str
    media_type: str = "image"
    frame_index: int | None = None
    label_raw: str = ""
    label: str | None = None
    user_id: str | None = None
    age_years: float | None = None
    gender: str | None = None
    age_group: str | None = None
    head_pose: str | None = None
    excluded: bool = False
    exclusion_reason: str | None = None
    face_bbox: tuple[int, int, int, int] | None = None
    eye_left: tuple[int, int] | None = None
    eye_right: tuple[int, int] | None = None

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> SampleRecord:
        missing = [k for k in REQUIRED_KEYS if k not in data]
        if missing:
            raise ValueError(f"missing required keys: {', '.join(missing)}")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown keys: {', '.join(sorted(unknown))}")
        kwargs = dict(data)
        for key in ("face_bbox", "eye_left", "eye_right"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(int(v) for v in kwargs[key])
        if kwargs.get("age_years") is not None:
            kwargs["age_years"] = float(kwargs["age_years"])
        if not isinstance(kwargs["excluded"], bool):
            raise ValueError("excluded must be a boolean")
        return cls(**kwargs)


@dataclass
class DatasetManifest:
    name: str
    provenance: str = "lab_controlled"
    samples: list[SampleRecord] = field(default_factory=list)

    @property
    def class_set(self) -> frozenset[str]:
        return frozenset(
            s.label for s in self.samples if not s.excluded and s.label is not None
        )

    def included(self) -> list[SampleRecord]:
        return [s for s in self.samples if not s.excluded]

    def by_id(self) -> dict[str, SampleRecord]:
        return {s.sample_id: s for s in self.samples}

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class Violation:
    sample_id: str | None
    rule: str
    detail: str = ""

    def __str__(self):
        who = self.sample_id if self.sample_id is not None else "<manifest>"
        return f"{who}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


def _check_enum(value, allowed, name, sid, out):
    if value is not None and value not in allowed:
        out.append(Violation(sid, f"invalid_{name}", repr(value)))


def validate_manifest(
    manifest: DatasetManifest,
    image_size: Callable[[SampleRecord], tuple[int, int] | None] | None = None,
) -> list[Violation]:
    """Check every record and manifest invariant.

    ``image_size`` maps a record to the (width, height) of its source image;
    without it the bbox-in-bounds rule is not checked.
    """
    out: list[Violation] = []
    seen: set[str] = set()
    for s in manifest.samples:
        sid = s.sample_id
        if sid in seen:
            out.append(Violation(sid, "duplicate_sample_id"))
        seen.add(sid)
        if s.dataset != manifest.name:
            out.append(Violation(sid, "dataset_mismatch", f"{s.dataset!r} != {manifest.name!r}"))
        _check_enum(s.media_type, MEDIA_TYPES, "media_type", sid, out)
        _check_enum(s.label, EXPRESSIONS, "label", sid, out)
        _check_enum(s.gender, GENDERS, "gender", sid, out)
        _check_enum(s.age_group, AGE_GROUPS, "age_group", sid, out)
        _check_enum(s.head_pose, HEAD_POSES, "head_pose", sid, out)

        if s.excluded != (s.exclusion_reason is not None):
            out.append(Violation(sid, "exclusion_reason_mismatch",
                                 f"excluded={s.excluded}, reason={s.exclusion_reason!r}"))
        if s.media_type == "image" and s.frame_index is not None:
            out.append(Violation(sid, "frame_index_on_image"))
        if s.media_type == "video" and s.frame_index is None:
            out.append(Violation(sid, "frame_index_missing"))
        if s.frame_index is not None and s.frame_index < 0:
            out.append(Violation(sid, "negative_frame_index"))
        if s.age_years is not None and s.age_years < 0:
            out.append(Violation(sid, "negative_age"))
        if s.age_years is not None and s.age_group is not None:
            expected = age_group_for(s.age_years)
            if expected != s.age_group:
                out.append(Violation(sid, "age_group_inconsistent",
                                     f"age {s.age_years:g} implies {expected}, got {s.age_group}"))
        if s.face_bbox is not None:
            x, y, w, h = s.face_bbox
            if w <= 0 or h <= 0:
                out.append(Violation(sid, "bbox_degenerate"))
            elif image_size is not None:
                size = image_size(s)
                if size is not None:
                    width, height = size
                    if x < 0 or y < 0 or x + w > width or y + h > height:
                        out.append(Violation(sid, "bbox_out_of_bounds",
                                             f"{s.face_bbox} vs {width}x{height}"))
    return out


# -- manifest file I/O -------------------------------------------------------

def dumps_manifest(manifest: DatasetManifest) -> str:
    lines = [json.dumps({MANIFEST_META_KEY: True, "name": manifest.name,
                         "provenance": manifest.provenance}, ensure_ascii=False)]
    for s in manifest.samples:
        lines.append(json.dumps(s.to_dict(), ensure_ascii=False))
    return "\n".join(lines) + "\n"


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    atomic_write_text(path, dumps_manifest(manifest))


def loads_manifest(text: str, path=None) -> DatasetManifest:
    name = None
    provenance = "lab_controlled"
    samples = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid JSON: {exc.msg}", path, lineno) from None
        if not isinstance(data, dict):
            raise ManifestError("record is not an object", path, lineno)
        if data.get(MANIFEST_META_KEY):
            name = data.get("name")
            provenance = data.get("provenance", provenance)
            continue
        try:
            samples.append(SampleRecord.from_dict(data))
        except (TypeError, ValueError) as exc:
            raise ManifestError(str(exc), path, lineno) from None
    if name is None:
        if not samples:
            raise ManifestError("empty manifest without header", path)
        name = samples[0].dataset
    return DatasetManifest(name=name, provenance=provenance, samples=samples)


def read_manifest(path: str | os.PathLike) -> DatasetManifest:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ManifestError(f"cannot read manifest: {exc}", path) from None
    return loads_manifest(text, path)
