from __future__ import annotations

import json
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from ferbench.annotate import (
    AgeGenderEstimate, AnnotationRecord, BatchItem, FaceDetection, FaceDetector, HeadPoseEstimate,
    LandmarksAndPose, StubAgeGenderEstimator, StubFaceDetector, StubLandmarkPoseEstimator,
    SubprocessAnnotator, bin_head_pose, read_request, read_response, stub_annotator, write_request,
    write_response,
)
from ferbench.errors import AnnotationError, ContractError
from ferbench.normalize import aggregate_user_demographics

MIRROR = {"front": "front", "back": "back", "half_left": "half_right", "half_right": "half_left",
          "full_left": "full_right", "full_right": "full_left"}


@pytest.mark.parametrize("yaw,pose", [
    (0, "front"), (-45, "half_left"), (45, "half_right"), (100, "full_right"),
    (-90, "full_left"), (22.5, "front"), (22.51, "half_right"), (67.5, "half_right"),
    (112.5, "full_right"), (112.51, "back"), (-180, "back"), (180, "back"),
])
def test_bin_head_pose(yaw, pose):
    assert bin_head_pose(yaw) == pose


def test_bin_sweep_partitions_the_range():
    yaws = np.arange(-180, 180.5, 0.5)
    bins = [bin_head_pose(float(y)) for y in yaws]
    assert set(bins) == set(MIRROR)
    # each bin is one contiguous run per side
    runs = [b for i, b in enumerate(bins) if i == 0 or bins[i - 1] != b]
    assert runs == ["back", "full_left", "half_left", "front", "half_right", "full_right", "back"]


@given(st.floats(-180, 180, allow_nan=False))
def test_bin_symmetry(yaw):
    assert bin_head_pose(-yaw) == MIRROR[bin_head_pose(yaw)]


def test_out_of_range_yaw():
    with pytest.raises(ContractError):
        bin_head_pose(181)
    with pytest.raises(ContractError):
        HeadPoseEstimate(-200)


def test_value_contracts():
    with pytest.raises(ContractError):
        FaceDetection((0, 0, 0, 5), 0.5)
    with pytest.raises(ContractError):
        FaceDetection((0, 0, 5, 5), 1.5)
    with pytest.raises(ContractError):
        AgeGenderEstimate(-1, "male")


@pytest.fixture
def marker_root(tmp_path):
    """Two images: one with two marker faces, one blank, plus their sidecar."""
    (tmp_path / "images").mkdir()
    for name in ("two.png", "blank.png"):
        Image.new("RGB", (100, 100)).save(tmp_path / "images" / name)
    faces = [
        {"bbox": [10, 10, 30, 30], "confidence": 0.6, "eye_left": [15, 20], "eye_right": [30, 20],
         "yaw": 0.0, "pitch": 0.0, "roll": 0.0, "age_years": 50.0, "gender": "male"},
        {"bbox": [50, 40, 40, 40], "confidence": 0.9, "eye_left": [60, 52], "eye_right": [80, 55],
         "yaw": -30.0, "pitch": 1.0, "roll": 4.0, "age_years": 34.0, "gender": "female",
         "age_gender_confidence": 0.8},
    ]
    lines = [{"path": "images/two.png", "faces": faces}, {"path": "images/blank.png", "faces": []}]
    (tmp_path / "metadata.jsonl").write_text("".join(json.dumps(x) + "\n" for x in lines))
    return tmp_path


def test_stub_detector(marker_root):
    det = StubFaceDetector(marker_root)
    assert det.detect_primary_face(marker_root / "images/two.png") == FaceDetection((50, 40, 40, 40), 0.9)
    assert det.detect_primary_face(marker_root / "images/blank.png") is None


def test_stub_landmarks_and_age(marker_root):
    img = marker_root / "images/two.png"
    lm = StubLandmarkPoseEstimator(marker_root).estimate_landmarks_and_pose(img, (50, 40, 40, 40))
    assert lm == LandmarksAndPose((60, 52), (80, 55), HeadPoseEstimate(-30.0, 1.0, 4.0))
    frontal = StubLandmarkPoseEstimator(marker_root).estimate_landmarks_and_pose(img, (10, 10, 30, 30))
    assert frontal.pose.yaw == 0
    ag = StubAgeGenderEstimator(marker_root).estimate_age_gender(img, (50, 40, 40, 40))
    assert ag == AgeGenderEstimate(34.0, "female", 0.8)


def test_bbox_outside_image_is_a_contract_error(marker_root):
    with pytest.raises(ContractError):
        StubLandmarkPoseEstimator(marker_root).estimate_landmarks_and_pose(
            marker_root / "images/two.png", (90, 90, 20, 20))


def test_stubs_are_deterministic(marker_root):
    items = [BatchItem("a", str(marker_root / "images/two.png")),
             BatchItem("b", str(marker_root / "images/blank.png"))]
    assert stub_annotator(marker_root).annotate(items) == stub_annotator(marker_root).annotate(items)


def test_adapter_failure_is_not_no_face():
    class Broken(FaceDetector):
        def detect_faces(self, image_path):
            raise RuntimeError("model crashed")

    with pytest.raises(AnnotationError, match="model crashed"):
        Broken().detect_primary_face("x.png")


def test_per_user_median_downstream():
    ests = [(f"f{i}", AgeGenderEstimate(a, "female").age_years, "female")
            for i, a in enumerate([34, 35, 36])]
    assert aggregate_user_demographics(ests)[0] == 35.0


def test_batch_files_round_trip(tmp_path):
    items = [BatchItem("s1", "a/b.png", (1, 2, 3, 4)), BatchItem("s2", "c.png")]
    write_request(tmp_path / "req.csv", items)
    assert read_request(tmp_path / "req.csv") == items

    records = [
        AnnotationRecord("s1", FaceDetection((1, 2, 3, 4), 0.75),
                         LandmarksAndPose((1, 1), (3, 2), HeadPoseEstimate(12.5, -1.0, 3.25)),
                         AgeGenderEstimate(41.5, "male")),
        AnnotationRecord("s2"),
    ]
    write_response(tmp_path / "resp.csv", records)
    assert read_response(tmp_path / "resp.csv") == records
    empty_row = (tmp_path / "resp.csv").read_text().splitlines()[2]
    assert empty_row == "s2" + "," * 15


def test_subprocess_annotator(marker_root):
    cmd = [sys.executable, "-m", "ferbench.annotate", "--stub-root", str(marker_root)]
    items = [BatchItem("a", str(marker_root / "images/two.png")),
             BatchItem("b", str(marker_root / "images/blank.png"))]
    assert SubprocessAnnotator(cmd).annotate(items) == stub_annotator(marker_root).annotate(items)


def test_subprocess_failure():
    with pytest.raises(AnnotationError, match="exited"):
        SubprocessAnnotator([sys.executable, "-c", "import sys; sys.exit(3)"]).annotate([])
