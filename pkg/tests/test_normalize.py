from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image, ImageDraw

from conftest import manifest, record
from ferbench.core import AGE_GROUPS, EXPRESSIONS
from ferbench.errors import AlignmentError, GeometryError, SamplingError
from ferbench.normalize import (
    ClassMap, Unmapped, aggregate_user_demographics, align_and_crop, alignment_transform,
    apply_exclusion, apply_transform, assign_age_group, eye_angle, sample_frames, to_grayscale,
    unify_class,
)
from ferbench.normalize.demographics import parse_age_group_label
from ferbench.normalize.frames import frame_roles

# every documented merge: (raw label, dataset) -> canonical
MERGES = [
    ("arrabbiato", "FEGA", "anger"),
    ("annoyed", "Lifespan", "anger"),
    ("grumpy", "Lifespan", "anger"),
    ("disgusto", "FEGA", "disgust"),
    ("afraid", "DDCF", "fear"),
    ("afraid", "NIMH-ChEFS", "fear"),
    ("afraid", "KDEF", "fear"),
    ("fearful", "RaFD", "fear"),
    ("paura", "FEGA", "fear"),
    ("joy", "WSEFEP", "happiness"),
    ("allegria", "FEGA", "happiness"),
    ("amusement", "BioVidEmo", "happiness"),
    ("tristezza", "FEGA", "sadness"),
    ("sorpresa", "FEGA", "surprise"),
    ("neutra", "FEGA", "neutral"),
    ("profile", "Lifespan", "neutral"),
]


class TestFrames:
    @pytest.mark.parametrize("n,expected", [
        (5, [0, 1, 2, 3, 4]),
        (6, [0, 1, 3, 4, 5]),
        (100, [0, 25, 50, 74, 99]),
        (101, [0, 25, 50, 75, 100]),
    ])
    def test_uniform_five(self, n, expected):
        assert sample_frames(n, "uniform_five") == expected

    def test_neutral_plus_apex(self):
        assert sample_frames(30, "neutral_plus_apex") == [0, 22, 29]
        assert frame_roles("neutral_plus_apex") == ["neutral", "target", "target"]

    def test_shortest_clip_keeps_distinct_frames(self):
        assert sample_frames(3, "neutral_plus_apex") == [0, 1, 2]

    def test_passthrough_emits_nothing(self):
        assert sample_frames(10, "passthrough") == []

    def test_too_short_names_video(self):
        with pytest.raises(SamplingError, match="clip7"):
            sample_frames(4, "uniform_five", video="clip7")

    @given(st.integers(5, 100_000))
    def test_uniform_five_properties(self, n):
        idx = sample_frames(n, "uniform_five")
        assert len(idx) == 5 and idx[0] == 0 and idx[-1] == n - 1
        assert all(a < b for a, b in zip(idx, idx[1:]))
        # half-up rounding of i(N-1)/4, checked with exact rationals
        for i, v in enumerate(idx):
            assert v - 0.5 <= i * (n - 1) / 4 < v + 0.5

    @given(st.integers(3, 100_000))
    def test_neutral_plus_apex_properties(self, n):
        idx = sample_frames(n, "neutral_plus_apex")
        assert len(idx) == 3 and idx[0] == 0 and idx[-1] == n - 1
        assert idx[0] < idx[1] < idx[2]


class TestClassMap:
    @pytest.mark.parametrize("raw,dataset,label", MERGES)
    def test_documented_merges(self, raw, dataset, label):
        assert unify_class(raw, dataset) == label

    @pytest.mark.parametrize("label", EXPRESSIONS)
    def test_identity_in_any_dataset(self, label):
        assert unify_class(label, "KDEF") == label
        assert unify_class(f"  {label.upper()} ", "whatever") == label

    def test_unmapped_carries_original(self):
        result = unify_class("boredom", "MMI")
        assert isinstance(result, Unmapped) and result.original == "boredom"

    def test_merge_is_dataset_specific(self):
        assert isinstance(unify_class("arrabbiato", "KDEF"), Unmapped)

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "map.csv"
        ClassMap.default().to_csv(path)
        loaded = ClassMap.from_csv(path)
        for raw, ds, label in MERGES:
            assert loaded.lookup(raw, ds) == label

    @given(st.text(max_size=20), st.sampled_from(["FEGA", "Lifespan", "KDEF", "x"]))
    def test_total(self, raw, dataset):
        result = unify_class(raw, dataset)
        assert result in EXPRESSIONS or (isinstance(result, Unmapped) and result.original == raw)


class TestDemographics:
    def test_median_age(self):
        ests = [(f"s{i}", a, None) for i, a in enumerate([29, 30, 31, 45])]
        assert aggregate_user_demographics(ests) == (30.5, None)

    def test_gender_mode(self):
        ests = [("a", None, "male"), ("b", None, "male"), ("c", None, "female")]
        assert aggregate_user_demographics(ests)[1] == "male"

    def test_gender_tie_goes_to_lowest_sample_id(self):
        assert aggregate_user_demographics([("s1", None, "male"), ("s2", None, "female")])[1] == "male"
        assert aggregate_user_demographics([("s2", None, "male"), ("s1", None, "female")])[1] == "female"

    def test_three_frames(self):
        ests = [(f"f{i}", a, "female") for i, a in enumerate([34, 35, 36])]
        assert aggregate_user_demographics(ests) == (35.0, "female")

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.none() | st.floats(0, 99, allow_nan=False),
                              st.none() | st.sampled_from(["male", "female"])),
                    min_size=1, max_size=9),
           st.randoms(use_true_random=False))
    def test_permutation_invariant(self, values, rnd):
        ests = [(f"s{i:02d}", a, g) for i, (a, g) in enumerate(values)]
        shuffled = list(ests)
        rnd.shuffle(shuffled)
        assert aggregate_user_demographics(shuffled) == aggregate_user_demographics(ests)


class TestAgeGroups:
    @pytest.mark.parametrize("age,group", [(17, "child"), (18, "adult"), (60, "elderly"),
                                           (17.99, "child"), (59.5, "adult")])
    def test_boundaries(self, age, group):
        assert assign_age_group(estimated_age=age) == group

    def test_source_priority(self):
        assert assign_age_group(dataset_age=70, dataset_group="child", estimated_age=30) == "elderly"
        assert assign_age_group(dataset_group="Kids", estimated_age=30) == "child"
        assert assign_age_group(dataset_group="18-30", estimated_age=70) == "adult"
        assert assign_age_group() is None

    def test_ambiguous_range_falls_through(self):
        assert parse_age_group_label("10-30") is None
        assert assign_age_group(dataset_group="10-30", estimated_age=65) == "elderly"

    @given(st.floats(0, 150, allow_nan=False))
    def test_partition(self, age):
        group = assign_age_group(estimated_age=age)
        assert group in AGE_GROUPS
        floored = math.floor(age)
        assert (floored <= 17) + (18 <= floored <= 59) + (floored >= 60) == 1
        assert group == ("child" if floored <= 17 else "adult" if floored <= 59 else "elderly")


class TestExclusion:
    base = dict(label="happiness", face_bbox=(0, 0, 10, 10), head_pose="front")

    @pytest.mark.parametrize("change,reason", [
        ({}, None),
        ({"face_bbox": None}, "no_face"),
        ({"head_pose": "full_left"}, "pose_full_or_back"),
        ({"head_pose": "full_right"}, "pose_full_or_back"),
        ({"head_pose": "back"}, "pose_full_or_back"),
        ({"head_pose": None}, "pose_missing"),
        ({"label": None}, "unmapped_label"),
        ({"head_pose": "half_left"}, None),
    ])
    def test_reasons(self, change, reason):
        out = apply_exclusion(record("a", **{**self.base, **change}))
        assert out.exclusion_reason == reason
        assert out.excluded is (reason is not None)

    def test_idempotent(self):
        rng = random.Random(0)
        samples = [record(f"s{i}", label=rng.choice([None, "fear"]),
                          face_bbox=rng.choice([None, (0, 0, 5, 5)]),
                          head_pose=rng.choice([None, "front", "back", "half_right"]))
                   for i in range(50)]
        once = manifest("ds", [apply_exclusion(s) for s in samples])
        twice = manifest("ds", [apply_exclusion(s) for s in once.samples])
        assert once == twice


class TestAlignment:
    def test_level_eyes_need_no_rotation(self):
        assert eye_angle((100, 120), (200, 120)) == 0.0

    def test_diagonal_eyes(self):
        assert eye_angle((100, 100), (200, 200)) == pytest.approx(45.0)
        m = alignment_transform((100, 100), (200, 200), (80, 60, 150, 180), (400, 400))
        left, right = apply_transform(m, [(100, 100), (200, 200)])
        assert right[1] == pytest.approx(left[1], abs=1e-9)
        assert right[0] > left[0]

    def test_coincident_eyes(self):
        with pytest.raises(AlignmentError):
            eye_angle((5, 5), (5, 5))

    def test_bbox_outside_image(self):
        with pytest.raises(GeometryError):
            alignment_transform((1, 1), (5, 1), (500, 500, 10, 10), (100, 100))

    def test_grayscale_weights(self):
        rgb = np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255], [10, 20, 30]]], dtype=np.uint8)
        assert to_grayscale(rgb).tolist() == [[76, 150, 29, 18]]

    def test_padding_is_black(self):
        img = np.full((50, 50, 3), 255, dtype=np.uint8)
        out = align_and_crop(img, (10, 20), (40, 20), (0, 0, 50, 50))
        assert out.shape == (224, 224)
        assert out[0, 0] == 0 and out[112, 112] == 255

    def test_eye_markers_land_on_a_horizontal_line(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            angle = rng.uniform(-40, 40)
            img, left, right, bbox = _face_with_eye_dots(angle)
            out = align_and_crop(img, left, right, bbox)
            (ly, lx), (ry, rx) = _dark_blob_centroids(out)
            assert math.degrees(math.atan2(ry - ly, rx - lx)) == pytest.approx(0, abs=2.0)


def _face_with_eye_dots(angle_deg, size=200):
    img = Image.new("RGB", (size, size), (220, 220, 220))
    draw = ImageDraw.Draw(img)
    cx, cy, half = size / 2, size / 2, 30
    t = math.radians(angle_deg)
    left = (round(cx - half * math.cos(t)), round(cy - half * math.sin(t)))
    right = (round(cx + half * math.cos(t)), round(cy + half * math.sin(t)))
    for x, y in (left, right):
        draw.ellipse([x - 5, y - 5, x + 5, y + 5], fill=(0, 0, 0))
    return np.asarray(img), left, right, (50, 50, 100, 100)


def _dark_blob_centroids(gray):
    ys, xs = np.nonzero(gray < 100)
    # the crop keeps the interior; split the two dots at the mean x
    split = xs.mean()
    return [(ys[mask].mean(), xs[mask].mean()) for mask in (xs < split, xs >= split)]


@settings(max_examples=200)
@given(st.floats(-40, 40), st.floats(5, 80), st.integers(20, 300), st.integers(20, 300))
def test_transformed_eye_line_is_horizontal(angle, half, cx, cy):
    t = math.radians(angle)
    left = (cx - half * math.cos(t), cy - half * math.sin(t))
    right = (cx + half * math.cos(t), cy + half * math.sin(t))
    m = alignment_transform(left, right, (cx - 60, cy - 60, 120, 140), (400, 400))
    (lx, ly), (rx, ry) = apply_transform(m, [left, right])
    assert abs(math.degrees(math.atan2(ry - ly, rx - lx))) <= 0.5
