"""Raw dataset layouts and media access.

A layout turns a dataset directory into image SampleRecords plus, for video
datasets, a list of clips that frame sampling expands later. Register new
layouts with :func:`register_layout`.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .core import SampleRecord
from .errors import FerBenchError
from .normalize.demographics import parse_age_group_label

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


@dataclass
class VideoClip:
    dataset: str
    video_id: str
    media_path: str
    frame_count: int
    label_raw: str
    user_id: str | None = None
    age_years: float | None = None
    gender: str | None = None
    age_group: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class RawDataset:
    images: list[SampleRecord]
    videos: list[VideoClip]


class FrameDirectory:
    """Pre-decoded clip stored as one image file per frame."""

    def __init__(self, root):
        self.root = Path(root)

    def frames(self, media_path) -> list[Path]:
        d = self.root / media_path
        return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)

    def frame_count(self, media_path) -> int:
        return len(self.frames(media_path))

    def frame_path(self, media_path, index: int) -> Path:
        return self.frames(media_path)[index]


def media_file(record: SampleRecord, root) -> Path:
    """Path of the still image a record refers to."""
    if record.media_type == "video":
        return FrameDirectory(root).frame_path(record.media_path, record.frame_index)
    return Path(root) / record.media_path


def _demographics(row: dict) -> dict:
    out = {}
    if row.get("age") not in (None, ""):
        out["age_years"] = float(row["age"])
    if row.get("gender") not in (None, ""):
        g = str(row["gender"]).strip().lower()
        out["gender"] = {"m": "male", "f": "female"}.get(g, g)
    if row.get("age_group") not in (None, ""):
        out["age_group"] = parse_age_group_label(str(row["age_group"]))
    return out


def _synthetic(name: str, root: Path) -> RawDataset:
    index = root / "index.jsonl"
    if not index.exists():
        return RawDataset([], [])
    images, videos = [], []
    for line in index.read_text(encoding="utf-8").split("\n"):
        if not line.strip():
            continue
        row = json.loads(line)
        demo = _demographics(row)
        if "video_id" in row:
            videos.append(VideoClip(name, row["video_id"], row["path"], int(row["frame_count"]),
                                    row["label"], row.get("user_id"), **demo))
        else:
            images.append(SampleRecord(dataset=name, sample_id=row["sample_id"],
                                       media_path=row["path"], label_raw=row["label"],
                                       user_id=row.get("user_id"), **demo))
    return RawDataset(images, videos)


def _folder(name: str, root: Path) -> RawDataset:
    """``root/<label>/<file>`` for images, ``root/<label>/<clip>/<frames>`` for clips."""
    images, videos = [], []
    if not root.is_dir():
        return RawDataset([], [])
    for label_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for entry in sorted(label_dir.iterdir()):
            rel = entry.relative_to(root).as_posix()
            sid = rel.rsplit(".", 1)[0].replace("/", "__")
            if entry.is_file() and entry.suffix.lower() in IMAGE_SUFFIXES:
                images.append(SampleRecord(dataset=name, sample_id=sid, media_path=rel,
                                           label_raw=label_dir.name))
            elif entry.is_dir():
                count = FrameDirectory(root).frame_count(rel)
                if count:
                    videos.append(VideoClip(name, sid, rel, count, label_dir.name))
    return RawDataset(images, videos)


def _csv(name: str, root: Path) -> RawDataset:
    """``root/labels.csv`` with columns path,label and optional user_id,age,gender,age_group."""
    table = root / "labels.csv"
    if not table.exists():
        return RawDataset([], [])
    images = []
    with open(table, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            rel = row["path"]
            sid = row.get("sample_id") or rel.rsplit(".", 1)[0].replace("/", "__")
            images.append(SampleRecord(dataset=name, sample_id=sid, media_path=rel,
                                       label_raw=row["label"], user_id=row.get("user_id") or None,
                                       **_demographics(row)))
    return RawDataset(images, [])


_LAYOUTS: dict[str, Callable[[str, Path], RawDataset]] = {
    "synthetic": _synthetic,
    "folder": _folder,
    "csv": _csv,
}


def register_layout(name: str, reader: Callable[[str, Path], RawDataset]) -> None:
    _LAYOUTS[name] = reader


def read_layout(layout: str, name: str, root) -> RawDataset:
    try:
        reader = _LAYOUTS[layout]
    except KeyError:
        raise FerBenchError(f"unknown dataset layout {layout!r}; known: {sorted(_LAYOUTS)}") from None
    return reader(name, Path(root))
