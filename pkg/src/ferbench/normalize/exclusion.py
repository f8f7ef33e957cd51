from __future__ import annotations

from dataclasses import replace

from ..core import SampleRecord

EXCLUDED_POSES = frozenset({"full_left", "full_right", "back"})

NO_FACE = "no_face"
POSE_FULL_OR_BACK = "pose_full_or_back"
POSE_MISSING = "pose_missing"
UNMAPPED_LABEL = "unmapped_label"
REASONS = (NO_FACE, POSE_FULL_OR_BACK, POSE_MISSING, UNMAPPED_LABEL)


def exclusion_reason(record: SampleRecord) -> str | None:
    # first matching rule wins, in the order of REASONS
    if record.face_bbox is None:
        return NO_FACE
    if record.head_pose in EXCLUDED_POSES:
        return POSE_FULL_OR_BACK
    if record.head_pose is None:
        return POSE_MISSING
    if record.label is None:
        return UNMAPPED_LABEL
    return None


def apply_exclusion(record: SampleRecord) -> SampleRecord:
    reason = exclusion_reason(record)
    return replace(record, excluded=reason is not None, exclusion_reason=reason)
