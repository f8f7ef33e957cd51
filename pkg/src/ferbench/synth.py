"""Synthetic glyph-face datasets for desk-scale runs.

Each image holds one drawn face whose "expression" is a class-specific mouth
and brow glyph. Ground truth for the stub adapters (bbox, eyes, head pose,
per-image age/gender estimates) goes to the ``metadata.jsonl`` sidecar; the
dataset's own labels go to ``index.jsonl``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .annotate import SIDECAR_NAME

INDEX_NAME = "index.jsonl"


@dataclass
class GlyphDatasetSpec:
    name: str
    classes: tuple[str, ...] = ("happiness", "sadness", "surprise", "neutral")
    images_per_class: int = 40
    users: int = 10
    seed: int = 0
    label_noise: float = 0.0
    variability: str = "low"  # "low" or "high"
    image_size: int = 128
    no_face_fraction: float = 0.0
    side_pose_fraction: float = 0.0
    unmapped_fraction: float = 0.0
    max_roll: float = 20.0
    dataset_demographics: bool = True


# mouth/brow strokes in face-local units (x right, y down, face radius 1)
def _arc(y0, depth, half_width=0.45, n=16):
    xs = np.linspace(-half_width, half_width, n)
    return [(x, y0 + depth * (1 - (x / half_width) ** 2)) for x in xs]


def _glyph_strokes(label: str) -> tuple[list[list[tuple[float, float]]], bool]:
    """Strokes for one class; the flag marks the last stroke as a filled polygon."""
    brows_flat = [[(-0.55, -0.55), (-0.2, -0.55)], [(0.2, -0.55), (0.55, -0.55)]]
    if label == "happiness":
        return [_arc(0.35, 0.22)] + brows_flat, False
    if label == "sadness":
        return [_arc(0.55, -0.22)] + brows_flat, False
    if label == "surprise":
        ring = [(0.2 * math.cos(t), 0.45 + 0.22 * math.sin(t)) for t in np.linspace(0, 2 * math.pi, 24)]
        brow = _arc(-0.62, -0.1, 0.18, 8)
        raised = [[(x - 0.375, y) for x, y in brow], [(x + 0.375, y) for x, y in brow]]
        return [ring] + raised, False
    if label == "neutral":
        return [[(-0.4, 0.45), (0.4, 0.45)]] + brows_flat, False
    if label == "anger":
        brows_v = [[(-0.6, -0.68), (-0.15, -0.45)], [(0.15, -0.45), (0.6, -0.68)]]
        return brows_v + [[(-0.35, 0.5), (0.35, 0.5)]], False
    if label == "disgust":
        zig = [(-0.45 + 0.15 * i, 0.45 + (0.1 if i % 2 else -0.1)) for i in range(7)]
        return [zig] + brows_flat, False
    if label == "fear":
        brows_up = [[(-0.55, -0.7), (-0.2, -0.6)], [(0.2, -0.6), (0.55, -0.7)]]
        box = [(-0.3, 0.35), (0.3, 0.35), (0.3, 0.6), (-0.3, 0.6)]
        return brows_up + [box], True
    # anything else (e.g. an unmapped label) gets a plain dot
    return [[(-0.05, 0.45), (0.05, 0.45)]], False


def _to_image(points, center, radius, roll_deg, scale=1.0, offset=(0.0, 0.0)):
    c, s = math.cos(math.radians(roll_deg)), math.sin(math.radians(roll_deg))
    out = []
    for x, y in points:
        x = x * scale + offset[0]
        y = y * scale + offset[1]
        x, y = x * radius, y * radius * 1.15
        out.append((center[0] + c * x - s * y, center[1] + s * x + c * y))
    return out


def render_face(label: str, rng: np.random.Generator, size: int, variability: str,
                max_roll: float = 20.0, draw_face: bool = True):
    """Draw one face; return (RGB array, face ground truth dict or None)."""
    high = variability == "high"
    bg = int(rng.integers(20, 90)) if high else 50
    img = Image.new("RGB", (size, size), (bg, bg, bg))
    draw = ImageDraw.Draw(img)
    if high:
        for _ in range(int(rng.integers(2, 6))):
            pts = [tuple(rng.uniform(0, size, 2)) for _ in range(2)]
            shade = int(rng.integers(0, 255))
            draw.line(pts, fill=(shade, shade, shade), width=int(rng.integers(1, 4)))
    if not draw_face:
        return np.asarray(img), None

    radius = rng.uniform(0.22, 0.3) * size if high else 0.26 * size
    margin = radius * 1.3
    center = (rng.uniform(margin, size - margin), rng.uniform(margin, size - margin))
    roll = rng.uniform(-max_roll, max_roll)

    skin = int(rng.integers(150, 235)) if high else 200
    outline = [(math.cos(t), math.sin(t)) for t in np.linspace(0, 2 * math.pi, 64, endpoint=False)]
    face_pts = _to_image(outline, center, radius, roll)
    draw.polygon(face_pts, fill=(skin, int(skin * 0.9), int(skin * 0.8)))

    ink = int(rng.integers(0, 60)) if high else 20
    eyes_local = [(-0.4, -0.3), (0.4, -0.3)]
    eyes = _to_image(eyes_local, center, radius, roll)
    eye_r = radius * 0.1
    for ex, ey in eyes:
        draw.ellipse([ex - eye_r, ey - eye_r, ex + eye_r, ey + eye_r], fill=(ink, ink, ink))

    scale = rng.uniform(0.75, 1.25) if high else 1.0
    offset = (rng.uniform(-0.1, 0.1), rng.uniform(-0.08, 0.08)) if high else (0.0, 0.0)
    width = max(2, int(round(radius * (rng.uniform(0.11, 0.2) if high else 0.16))))
    strokes, filled_last = _glyph_strokes(label)
    for i, stroke in enumerate(strokes):
        pts = _to_image(stroke, center, radius, roll, scale, offset)
        if filled_last and i == len(strokes) - 1:
            draw.polygon(pts, fill=(ink, ink, ink))
        else:
            draw.line(pts, fill=(ink, ink, ink), width=width, joint="curve")

    arr = np.asarray(img).astype(np.float64)
    if high:
        contrast = rng.uniform(0.7, 1.3)
        brightness = rng.uniform(-30, 30)
        arr = (arr - 128) * contrast + 128 + brightness
        arr += rng.normal(0, 8, arr.shape)
    arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)

    xs = [p[0] for p in face_pts]
    ys = [p[1] for p in face_pts]
    x0, y0 = max(0, math.floor(min(xs))), max(0, math.floor(min(ys)))
    x1, y1 = min(size, math.ceil(max(xs))), min(size, math.ceil(max(ys)))
    truth = {
        "bbox": [x0, y0, x1 - x0, y1 - y0],
        "confidence": 0.99,
        "eye_left": [int(round(eyes[0][0])), int(round(eyes[0][1]))],
        "eye_right": [int(round(eyes[1][0])), int(round(eyes[1][1]))],
        "roll": roll,
    }
    return arr, truth


def generate_glyph_dataset(root, spec: GlyphDatasetSpec) -> Path:
    """Write images, ``index.jsonl`` and the sidecar under ``root``."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    users = []
    for u in range(spec.users):
        users.append({
            "user_id": f"{spec.name}_u{u:03d}",
            "age": float(rng.integers(5, 85)),
            "gender": "female" if rng.random() < 0.5 else "male",
        })

    plan = [c for c in spec.classes for _ in range(spec.images_per_class)]
    n_unmapped = int(round(spec.unmapped_fraction * len(plan)))
    plan += ["contempt"] * n_unmapped
    order = rng.permutation(len(plan))

    index_lines, sidecar_lines = [], []
    for i, k in enumerate(order):
        true_label = plan[k]
        sample_id = f"{spec.name}_{i:05d}"
        rel = f"images/{sample_id}.png"
        user = users[i % len(users)]

        no_face = rng.random() < spec.no_face_fraction
        arr, face = render_face(true_label, rng, spec.image_size, spec.variability,
                                spec.max_roll, draw_face=not no_face)
        Image.fromarray(arr).save(root / rel)

        label_raw = true_label
        if true_label in spec.classes and spec.label_noise > 0 and rng.random() < spec.label_noise:
            others = [c for c in spec.classes if c != true_label]
            label_raw = others[int(rng.integers(len(others)))]

        faces = []
        if face is not None:
            if rng.random() < spec.side_pose_fraction:
                yaw = float(rng.uniform(70, 170)) * (1 if rng.random() < 0.5 else -1)
            else:
                yaw = float(rng.uniform(-15, 15))
            gender = user["gender"]
            if rng.random() < 0.1:
                gender = "male" if gender == "female" else "female"
            face.update({
                "yaw": round(yaw, 3),
                "pitch": 0.0,
                "roll": round(face["roll"], 3),
                "age_years": round(max(0.0, user["age"] + float(rng.normal(0, 2))), 2),
                "gender": gender,
                "age_gender_confidence": 0.9,
            })
            faces.append(face)

        entry = {"sample_id": sample_id, "path": rel, "label": label_raw, "user_id": user["user_id"]}
        if spec.dataset_demographics:
            entry["age"] = user["age"]
            entry["gender"] = user["gender"]
        index_lines.append(json.dumps(entry))
        sidecar_lines.append(json.dumps({"path": rel, "width": spec.image_size,
                                         "height": spec.image_size, "faces": faces}))

    (root / INDEX_NAME).write_text("\n".join(index_lines) + "\n", encoding="utf-8")
    (root / SIDECAR_NAME).write_text("\n".join(sidecar_lines) + "\n", encoding="utf-8")
    return root


def generate_glyph_videos(root, name: str, classes=("happiness", "sadness"), videos_per_class=2,
                          frames=12, seed=0, image_size=96, onset="neutral") -> Path:
    """Clips as frame directories ``videos/<id>/NNNNN.png``.

    With ``onset="neutral"`` the first third of each clip shows the neutral
    glyph, the rest the target class; otherwise the target is held throughout.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    index_lines, sidecar_lines = [], []
    n = 0
    for label in classes:
        for _ in range(videos_per_class):
            vid = f"{name}_v{n:03d}"
            n += 1
            vdir = root / "videos" / vid
            vdir.mkdir(parents=True, exist_ok=True)
            for f in range(frames):
                shown = "neutral" if (onset == "neutral" and f < frames // 3) else label
                frame_rng = np.random.default_rng([seed, n, f])
                arr, face = render_face(shown, frame_rng, image_size, "low", max_roll=10)
                rel = f"videos/{vid}/{f:05d}.png"
                Image.fromarray(arr).save(root / rel)
                face.update({"yaw": 0.0, "pitch": 0.0, "age_years": 30.0, "gender": "female"})
                sidecar_lines.append(json.dumps({"path": rel, "width": image_size,
                                                 "height": image_size, "faces": [face]}))
            index_lines.append(json.dumps({"video_id": vid, "path": f"videos/{vid}",
                                           "label": label, "user_id": f"{vid}_subject",
                                           "frame_count": frames}))
    (root / INDEX_NAME).write_text("\n".join(index_lines) + "\n", encoding="utf-8")
    (root / SIDECAR_NAME).write_text("\n".join(sidecar_lines) + "\n", encoding="utf-8")
    return root


def preview(root, n=8) -> Image.Image:
    """Contact sheet of the first ``n`` images, for eyeballing a generated set."""
    paths = sorted((Path(root) / "images").glob("*.png"))[:n]
    tiles = [Image.open(p).convert("RGB") for p in paths]
    if not tiles:
        raise FileNotFoundError(f"no images under {root}")
    w, h = tiles[0].size
    sheet = Image.new("RGB", (w * len(tiles), h))
    for i, t in enumerate(tiles):
        sheet.paste(t, (i * w, 0))
    return sheet

