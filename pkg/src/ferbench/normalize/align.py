"""Eye-line alignment, square face crop, resize and grayscale."""

from __future__ import annotations

import math

import numpy as np
from PIL import Image

from ..errors import AlignmentError, GeometryError

OUTPUT_SIZE = 224
CROP_MARGIN = 0.25  # fraction of the bbox side added on each side
LUMA = np.array([0.299, 0.587, 0.114])


def eye_angle(eye_left, eye_right) -> float:
    """Angle of the eye line in degrees, image coordinates (y grows downward)."""
    (xl, yl), (xr, yr) = eye_left, eye_right
    if xl == xr and yl == yr:
        raise AlignmentError(f"coincident eye coordinates {tuple(eye_left)}")
    return math.degrees(math.atan2(yr - yl, xr - xl))


def alignment_transform(eye_left, eye_right, face_bbox, image_size, out_size=OUTPUT_SIZE):
    """Forward 3x3 affine matrix from source pixel space to the output crop.

    The source is rotated about the eye midpoint by minus the eye-line angle,
    then the bbox (expanded by CROP_MARGIN per side and squared about its
    center) is scaled onto an ``out_size`` square.
    """
    width, height = image_size
    x, y, w, h = face_bbox
    if w <= 0 or h <= 0:
        raise GeometryError(f"degenerate bbox {tuple(face_bbox)}")
    if x >= width or y >= height or x + w <= 0 or y + h <= 0:
        raise GeometryError(f"bbox {tuple(face_bbox)} lies outside the {width}x{height} image")

    theta = math.radians(eye_angle(eye_left, eye_right))
    mx = (eye_left[0] + eye_right[0]) / 2.0
    my = (eye_left[1] + eye_right[1]) / 2.0
    c, s = math.cos(-theta), math.sin(-theta)
    rot = np.array([[c, -s, mx - c * mx + s * my],
                    [s, c, my - s * mx - c * my],
                    [0.0, 0.0, 1.0]])

    cx, cy, _ = rot @ np.array([x + w / 2.0, y + h / 2.0, 1.0])
    side = max(w, h) * (1.0 + 2.0 * CROP_MARGIN)
    scale = out_size / side
    crop = np.array([[scale, 0.0, -scale * (cx - side / 2.0)],
                     [0.0, scale, -scale * (cy - side / 2.0)],
                     [0.0, 0.0, 1.0]])
    return crop @ rot


def to_grayscale(image) -> np.ndarray:
    """uint8 single-channel image using 0.299R + 0.587G + 0.114B."""
    if isinstance(image, Image.Image):
        if image.mode == "L":
            return np.asarray(image, dtype=np.uint8)
        image = np.asarray(image.convert("RGB"))
    arr = np.asarray(image)
    if arr.ndim == 2:
        return arr.astype(np.uint8)
    rgb = arr[..., :3].astype(np.float64)
    return np.clip(np.rint(rgb @ LUMA), 0, 255).astype(np.uint8)


def align_and_crop(image, eye_left, eye_right, face_bbox, out_size=OUTPUT_SIZE) -> np.ndarray:
    """Return an ``out_size`` x ``out_size`` uint8 face crop with level eyes."""
    gray = to_grayscale(image)
    height, width = gray.shape
    forward = alignment_transform(eye_left, eye_right, face_bbox, (width, height), out_size)
    inverse = np.linalg.inv(forward)
    coeffs = tuple(inverse[:2].ravel())
    out = Image.fromarray(gray, mode="L").transform(
        (out_size, out_size), Image.Transform.AFFINE, coeffs,
        resample=Image.Resampling.BILINEAR, fillcolor=0,
    )
    return np.asarray(out, dtype=np.uint8)


def apply_transform(matrix, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    homo = np.hstack([pts, np.ones((len(pts), 1))])
    return (homo @ np.asarray(matrix).T)[:, :2]
