"""The six normalization steps: frames, classes, demographics, age groups, exclusion, alignment."""

from .align import align_and_crop, alignment_transform, apply_transform, eye_angle, to_grayscale
from .classes import ClassMap, Unmapped, unify_class
from .demographics import aggregate_user_demographics, assign_age_group
from .exclusion import apply_exclusion, exclusion_reason
from .frames import NEUTRAL_PLUS_APEX, PASSTHROUGH, UNIFORM_FIVE, frame_roles, sample_frames

__all__ = [
    "ClassMap", "Unmapped", "unify_class",
    "aggregate_user_demographics", "assign_age_group",
    "apply_exclusion", "exclusion_reason",
    "align_and_crop", "alignment_transform", "apply_transform", "eye_angle", "to_grayscale",
    "sample_frames", "frame_roles", "NEUTRAL_PLUS_APEX", "UNIFORM_FIVE", "PASSTHROUGH",
]
