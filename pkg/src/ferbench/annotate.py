"""Annotation adapter contracts, head-pose binning, stub adapters and the batch protocol.

Real detectors and estimators live outside this package. They plug in either
by subclassing the adapter classes below or, for heavyweight models in a
separate environment, through the batch files handled by
:func:`write_request` / :func:`read_response` and :class:`SubprocessAnnotator`.
"""

from __future__ import annotations

import csv
import json
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from PIL import Image

from .core import atomic_write_text
from .errors import AnnotationError, ContractError
from .stats import csv_text

BBox = tuple[int, int, int, int]
Point = tuple[int, int]


@dataclass(frozen=True)
class FaceDetection:
    bbox: BBox
    confidence: float

    def __post_init__(self):
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise ContractError(f"non-positive bbox size {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ContractError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class HeadPoseEstimate:
    yaw: float  # degrees, positive = subject turning toward image-right
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        if not -180.0 <= self.yaw <= 180.0:
            raise ContractError(f"yaw {self.yaw} outside [-180, 180]")


@dataclass(frozen=True)
class LandmarksAndPose:
    eye_left: Point
    eye_right: Point
    pose: HeadPoseEstimate


@dataclass(frozen=True)
class AgeGenderEstimate:
    age_years: float
    gender: str
    confidence: float | None = None

    def __post_init__(self):
        if self.age_years < 0:
            raise ContractError(f"negative age {self.age_years}")
        if self.gender not in ("male", "female"):
            raise ContractError(f"unknown gender {self.gender!r}")


def bin_head_pose(yaw: float) -> str:
    """Discretize yaw into front / half_* / full_* / back."""
    if not -180.0 <= yaw <= 180.0:
        raise ContractError(f"yaw {yaw} outside [-180, 180]")
    magnitude = abs(yaw)
    if magnitude <= 22.5:
        return "front"
    if magnitude > 112.5:
        return "back"
    side = "left" if yaw < 0 else "right"
    kind = "half" if magnitude <= 67.5 else "full"
    return f"{kind}_{side}"


def image_size(path) -> tuple[int, int]:
    with Image.open(path) as im:
        return im.size


def bbox_within(bbox: BBox, size: tuple[int, int]) -> bool:
    x, y, w, h = bbox
    width, height = size
    return w > 0 and h > 0 and x >= 0 and y >= 0 and x + w <= width and y + h <= height


# -- adapter contracts ---------------------------------------------------------

class FaceDetector:
    def detect_faces(self, image_path) -> list[FaceDetection]:
        raise NotImplementedError

    def detect_primary_face(self, image_path) -> FaceDetection | None:
        """Highest-confidence face, or None when nothing is found."""
        try:
            faces = self.detect_faces(image_path)
        except AnnotationError:
            raise
        except Exception as exc:
            raise AnnotationError(f"face detector failed on {image_path}: {exc}") from exc
        if not faces:
            return None
        return max(faces, key=lambda f: f.confidence)


class LandmarkPoseEstimator:
    def _estimate(self, image_path, bbox: BBox) -> LandmarksAndPose | None:
        raise NotImplementedError

    def estimate_landmarks_and_pose(self, image_path, bbox: BBox) -> LandmarksAndPose | None:
        if not bbox_within(bbox, image_size(image_path)):
            raise ContractError(f"bbox {bbox} not within {image_path}")
        try:
            return self._estimate(image_path, bbox)
        except (AnnotationError, ContractError):
            raise
        except Exception as exc:
            raise AnnotationError(f"landmark estimator failed on {image_path}: {exc}") from exc


class AgeGenderEstimator:
    def _estimate(self, image_path, bbox: BBox) -> AgeGenderEstimate | None:
        raise NotImplementedError

    def estimate_age_gender(self, image_path, bbox: BBox) -> AgeGenderEstimate | None:
        if not bbox_within(bbox, image_size(image_path)):
            raise ContractError(f"bbox {bbox} not within {image_path}")
        try:
            return self._estimate(image_path, bbox)
        except (AnnotationError, ContractError):
            raise
        except Exception as exc:
            raise AnnotationError(f"age/gender estimator failed on {image_path}: {exc}") from exc


# -- stubs backed by the synthetic generator's sidecar -------------------------

SIDECAR_NAME = "metadata.jsonl"


class Sidecar:
    """Ground truth written next to synthetic images, keyed by relative path."""

    def __init__(self, root):
        self.root = Path(root).resolve()
        self.entries: dict[str, dict] = {}
        path = self.root / SIDECAR_NAME
        if path.exists():
            with open(path, encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        entry = json.loads(line)
                        self.entries[entry["path"]] = entry

    def faces(self, image_path) -> list[dict]:
        p = Path(image_path)
        if p.is_absolute():
            try:
                p = p.resolve().relative_to(self.root)
            except ValueError:
                return []
        entry = self.entries.get(p.as_posix())
        return list(entry["faces"]) if entry else []

    def match(self, image_path, bbox: BBox) -> dict | None:
        """The recorded face whose bbox overlaps ``bbox`` best."""
        best, best_iou = None, 0.0
        for face in self.faces(image_path):
            iou = _iou(face["bbox"], bbox)
            if iou > best_iou:
                best, best_iou = face, iou
        return best


def _iou(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


class StubFaceDetector(FaceDetector):
    def __init__(self, root):
        self.sidecar = Sidecar(root)

    def detect_faces(self, image_path):
        return [FaceDetection(tuple(f["bbox"]), float(f.get("confidence", 1.0)))
                for f in self.sidecar.faces(image_path)]


class StubLandmarkPoseEstimator(LandmarkPoseEstimator):
    def __init__(self, root):
        self.sidecar = Sidecar(root)

    def _estimate(self, image_path, bbox):
        face = self.sidecar.match(image_path, bbox)
        if face is None or face.get("eye_left") is None or face.get("yaw") is None:
            return None
        pose = HeadPoseEstimate(float(face["yaw"]), float(face.get("pitch", 0.0)),
                                float(face.get("roll", 0.0)))
        return LandmarksAndPose(tuple(face["eye_left"]), tuple(face["eye_right"]), pose)


class StubAgeGenderEstimator(AgeGenderEstimator):
    def __init__(self, root):
        self.sidecar = Sidecar(root)

    def _estimate(self, image_path, bbox):
        face = self.sidecar.match(image_path, bbox)
        if face is None or face.get("age_years") is None or face.get("gender") is None:
            return None
        return AgeGenderEstimate(float(face["age_years"]), face["gender"],
                                 face.get("age_gender_confidence"))


# -- batch protocol -------------------------------------------------------------

REQUEST_FIELDS = ["sample_id", "image_path", "bbox_x", "bbox_y", "bbox_w", "bbox_h"]
RESPONSE_FIELDS = [
    "sample_id", "bbox_x", "bbox_y", "bbox_w", "bbox_h", "face_confidence",
    "eye_left_x", "eye_left_y", "eye_right_x", "eye_right_y",
    "yaw", "pitch", "roll", "age_years", "gender", "age_gender_confidence",
]


@dataclass(frozen=True)
class BatchItem:
    sample_id: str
    image_path: str
    bbox: BBox | None = None


@dataclass
class AnnotationRecord:
    sample_id: str
    detection: FaceDetection | None = None
    landmarks: LandmarksAndPose | None = None
    age_gender: AgeGenderEstimate | None = None

    def to_row(self) -> list[str]:
        row = [self.sample_id]
        d = self.detection
        row += [str(v) for v in d.bbox] + [repr(d.confidence)] if d else [""] * 5
        lm = self.landmarks
        if lm:
            row += [str(v) for v in (*lm.eye_left, *lm.eye_right)]
            row += [repr(lm.pose.yaw), repr(lm.pose.pitch), repr(lm.pose.roll)]
        else:
            row += [""] * 7
        ag = self.age_gender
        if ag:
            row += [repr(ag.age_years), ag.gender,
                    "" if ag.confidence is None else repr(ag.confidence)]
        else:
            row += [""] * 3
        return row

    @classmethod
    def from_row(cls, row: dict) -> AnnotationRecord:
        def present(*keys):
            return all(row.get(k, "") != "" for k in keys)

        rec = cls(row["sample_id"])
        if present("bbox_x", "bbox_y", "bbox_w", "bbox_h"):
            conf = float(row["face_confidence"]) if present("face_confidence") else 1.0
            rec.detection = FaceDetection(
                tuple(int(row[k]) for k in ("bbox_x", "bbox_y", "bbox_w", "bbox_h")), conf)
        if present("eye_left_x", "eye_left_y", "eye_right_x", "eye_right_y", "yaw"):
            pose = HeadPoseEstimate(
                float(row["yaw"]),
                float(row["pitch"]) if present("pitch") else 0.0,
                float(row["roll"]) if present("roll") else 0.0,
            )
            rec.landmarks = LandmarksAndPose(
                (int(row["eye_left_x"]), int(row["eye_left_y"])),
                (int(row["eye_right_x"]), int(row["eye_right_y"])),
                pose,
            )
        if present("age_years", "gender"):
            conf = float(row["age_gender_confidence"]) if present("age_gender_confidence") else None
            rec.age_gender = AgeGenderEstimate(float(row["age_years"]), row["gender"], conf)
        return rec


def write_request(path, items: Iterable[BatchItem]) -> None:
    rows = []
    for it in items:
        bbox = [str(v) for v in it.bbox] if it.bbox else [""] * 4
        rows.append([it.sample_id, str(it.image_path), *bbox])
    atomic_write_text(path, csv_text(REQUEST_FIELDS, rows))


def read_request(path) -> list[BatchItem]:
    with open(path, newline="", encoding="utf-8") as f:
        items = []
        for row in csv.DictReader(f):
            bbox = None
            if row["bbox_x"] != "":
                bbox = tuple(int(row[k]) for k in ("bbox_x", "bbox_y", "bbox_w", "bbox_h"))
            items.append(BatchItem(row["sample_id"], row["image_path"], bbox))
        return items


def write_response(path, records: Iterable[AnnotationRecord]) -> None:
    atomic_write_text(path, csv_text(RESPONSE_FIELDS, [r.to_row() for r in records]))


def read_response(path) -> list[AnnotationRecord]:
    with open(path, newline="", encoding="utf-8") as f:
        return [AnnotationRecord.from_row(row) for row in csv.DictReader(f)]


class Annotator:
    """Runs detector, landmark/pose and age/gender adapters over a batch."""

    def __init__(self, detector: FaceDetector, landmarker: LandmarkPoseEstimator,
                 age_gender: AgeGenderEstimator):
        self.detector = detector
        self.landmarker = landmarker
        self.age_gender = age_gender

    def annotate(self, items: Iterable[BatchItem]) -> list[AnnotationRecord]:
        out = []
        for it in items:
            rec = AnnotationRecord(it.sample_id)
            if it.bbox is not None:
                rec.detection = FaceDetection(tuple(it.bbox), 1.0)
            else:
                rec.detection = self.detector.detect_primary_face(it.image_path)
            if rec.detection is not None:
                bbox = rec.detection.bbox
                rec.landmarks = self.landmarker.estimate_landmarks_and_pose(it.image_path, bbox)
                rec.age_gender = self.age_gender.estimate_age_gender(it.image_path, bbox)
            out.append(rec)
        return out

    def run_files(self, request_path, response_path) -> None:
        write_response(response_path, self.annotate(read_request(request_path)))


def stub_annotator(root) -> Annotator:
    return Annotator(StubFaceDetector(root), StubLandmarkPoseEstimator(root),
                     StubAgeGenderEstimator(root))


class SubprocessAnnotator:
    """Delegates a batch to an external command: ``<command> REQUEST RESPONSE``."""

    def __init__(self, command: str | list[str], timeout: float | None = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout

    def annotate(self, items: Iterable[BatchItem]) -> list[AnnotationRecord]:
        with tempfile.TemporaryDirectory(prefix="ferbench-batch-") as tmp:
            request = os.path.join(tmp, "request.csv")
            response = os.path.join(tmp, "response.csv")
            write_request(request, items)
            proc = subprocess.run([*self.command, request, response], capture_output=True,
                                  text=True, timeout=self.timeout)
            if proc.returncode != 0:
                raise AnnotationError(
                    f"adapter command exited {proc.returncode}: {proc.stderr.strip()[-500:]}")
            if not os.path.exists(response):
                raise AnnotationError("adapter command wrote no response file")
            return read_response(response)


def main(argv=None) -> int:
    """Serve the batch protocol with the stub adapters, for subprocess use."""
    import argparse

    parser = argparse.ArgumentParser(prog="python -m ferbench.annotate")
    parser.add_argument("--stub-root", required=True, help="dataset root holding the sidecar")
    parser.add_argument("request")
    parser.add_argument("response")
    args = parser.parse_args(argv)
    stub_annotator(args.stub_root).run_files(args.request, args.response)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
