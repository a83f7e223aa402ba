"""Procedural face-like test images with exact landmark ground truth.

Each face is a similarity-warped copy of a fixed landmark template drawn
onto a shaded canvas: an elliptical head whose brightness ramps along the
face's own up-axis (so global gradient orientation tracks the face, not the
canvas), plus one small blob of distinct size and polarity per landmark.
Texture is deterministic given the spec; all sampling is driven by a single
seeded generator, so a dataset is bit-reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .aggregation import Detection
from .errors import InvalidInputError
from .geometry import BoundingBox, Shape, shape_bbox
from .image import GrayImage

__all__ = [
    "SyntheticFaceSpec",
    "SyntheticSample",
    "face_template_68",
    "face_template_39",
    "generate_synthetic",
]


def face_template_68() -> Shape:
    """A symmetric 68-point frontal face in [0, 1] face coordinates.

    Index layout follows the common 68-point markup: 17 jaw points, two
    5-point brows, 4 nose bridge + 5 nostril points, two 6-point eyes,
    12 outer + 8 inner mouth points.  The nose bridge (1-based 28) sits
    directly above the nose tip (1-based 34), so the template's roll is 0,
    and mirroring the template maps it onto itself under the built-in
    68-point mirror permutation.
    """
    pts = []
    # jaw: half-ellipse from the left temple, around the chin, to the right
    for i in range(17):
        a = math.pi * (1 - i / 16)
        pts.append((0.5 + 0.42 * math.cos(a), 0.42 + 0.52 * math.sin(a)))
    # brows
    brow_xs = [0.16, 0.23, 0.30, 0.37, 0.43]
    brow_ys = [0.30 - 0.02 * math.sin(math.pi * i / 4) for i in range(5)]
    pts += list(zip(brow_xs, brow_ys))
    pts += [(1 - x, y) for x, y in zip(brow_xs[::-1], brow_ys[::-1])]
    # nose bridge and nostril line
    pts += [(0.5, 0.33), (0.5, 0.40), (0.5, 0.47), (0.5, 0.53)]
    pts += [(0.42, 0.600), (0.46, 0.615), (0.50, 0.620), (0.54, 0.615), (0.58, 0.600)]
    # eyes
    left_eye = [(0.22, 0.40), (0.26, 0.37), (0.33, 0.37), (0.38, 0.40), (0.33, 0.43), (0.26, 0.43)]
    pts += left_eye
    pts += [(1 - x, y) for x, y in
            [left_eye[3], left_eye[2], left_eye[1], left_eye[0], left_eye[5], left_eye[4]]]
    # mouth: outer ring of 12, inner ring of 8, starting at the left corner
    for k in range(12):
        a = math.pi + k * math.pi / 6
        pts.append((0.5 + 0.16 * math.cos(a), 0.76 + 0.07 * math.sin(a)))
    for k in range(8):
        a = math.pi + k * math.pi / 4
        pts.append((0.5 + 0.09 * math.cos(a), 0.76 + 0.03 * math.sin(a)))
    return Shape(np.array(pts))


def face_template_39() -> Shape:
    """An asymmetric 39-point left-facing profile in [0, 1] face coordinates.

    1-based point 3 lies on the back of the skull and point 20 on the nose
    tip, so the default side convention reads the template as left-facing.
    """
    outline = [
        (0.88, 0.50), (0.86, 0.34), (0.78, 0.20), (0.66, 0.10), (0.52, 0.06),
        (0.38, 0.08), (0.26, 0.14), (0.17, 0.24), (0.11, 0.36), (0.09, 0.48),
        (0.12, 0.62), (0.20, 0.76), (0.34, 0.86),
    ]
    brow = [(0.18, 0.33), (0.23, 0.30), (0.29, 0.29), (0.35, 0.30), (0.40, 0.32)]
    bridge = [(0.16, 0.42)]
    nose_tip = [(0.08, 0.55)]
    eye = [(0.30 + 0.06 * math.cos(a), 0.40 + 0.03 * math.sin(a))
           for a in np.linspace(0, 2 * math.pi, 6, endpoint=False)]
    mouth = [(0.22 + 0.09 * math.cos(a), 0.68 + 0.04 * math.sin(a))
             for a in np.linspace(0, 2 * math.pi, 7, endpoint=False)]
    ear = [(0.62 + 0.05 * math.cos(a), 0.48 + 0.08 * math.sin(a))
           for a in np.linspace(0, 2 * math.pi, 6, endpoint=False)]
    return Shape(np.array(outline + brow + bridge + nose_tip + eye + mouth + ear))


@dataclass(frozen=True)
class SyntheticFaceSpec:
    """Distribution of one synthetic dataset.

    Faces are placed by a similarity transform: rotation drawn from
    ``rotation_range`` degrees, scale from ``scale_range``, and a uniform
    translation of up to ``translation_range`` pixels per axis.  Each listed
    detection source emits the ground-truth box with its corners jittered by
    up to ``detection_jitter`` of the box extent, with a fixed per-source
    score.  ``texture_seed`` selects the (shared) canvas texture.
    """

    template: Shape = field(default_factory=face_template_68)
    image_size: tuple[int, int] = (128, 128)
    rotation_range: tuple[float, float] = (-15.0, 15.0)
    scale_range: tuple[float, float] = (0.9, 1.1)
    translation_range: float = 10.0
    face_scale: float = 0.55
    texture_seed: int = 0
    detection_jitter: float = 0.03
    detection_sources: tuple[str, ...] = ("dlib", "mtcnn", "frcnn")

    def __post_init__(self):
        if self.image_size[0] < 16 or self.image_size[1] < 16:
            raise InvalidInputError(f"image_size too small: {self.image_size}")
        if self.rotation_range[0] > self.rotation_range[1]:
            raise InvalidInputError(f"bad rotation_range: {self.rotation_range}")
        if not 0 < self.scale_range[0] <= self.scale_range[1]:
            raise InvalidInputError(f"bad scale_range: {self.scale_range}")
        if self.translation_range < 0:
            raise InvalidInputError("translation_range must be >= 0")
        if not 0 < self.face_scale <= 1:
            raise InvalidInputError("face_scale must be in (0, 1]")
        if not 0 <= self.detection_jitter < 0.45:
            raise InvalidInputError("detection_jitter must be in [0, 0.45)")


@dataclass(frozen=True)
class SyntheticSample:
    """One rendered face with its ground truth and simulated detections."""

    image: GrayImage
    shape: Shape
    detections: tuple[Detection, ...]
    rotation: float
    scale: float

    def detections_by_source(self) -> dict[str, list[Detection]]:
        out: dict[str, list[Detection]] = {}
        for det in self.detections:
            out.setdefault(det.source, []).append(det)
        return out


def _noise_field(height: int, width: int, seed: int) -> np.ndarray:
    """Smooth low-amplitude texture, identical for every image of a dataset."""
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(-1.0, 1.0, size=(10, 10))
    ys = np.linspace(0, coarse.shape[0] - 1, height)
    xs = np.linspace(0, coarse.shape[1] - 1, width)
    y0 = np.minimum(ys.astype(np.int64), coarse.shape[0] - 2)
    x0 = np.minimum(xs.astype(np.int64), coarse.shape[1] - 2)
    ty = (ys - y0)[:, None]
    tx = (xs - x0)[None, :]
    field00 = coarse[np.ix_(y0, x0)]
    field01 = coarse[np.ix_(y0, x0 + 1)]
    field10 = coarse[np.ix_(y0 + 1, x0)]
    field11 = coarse[np.ix_(y0 + 1, x0 + 1)]
    smooth = (field00 * (1 - ty) * (1 - tx) + field01 * (1 - ty) * tx
              + field10 * ty * (1 - tx) + field11 * ty * tx)
    return 0.03 * smooth


def _render(spec: SyntheticFaceSpec, theta: float, scale: float,
            shift: tuple[float, float], noise: np.ndarray) -> tuple[GrayImage, Shape]:
    w, h = spec.image_size
    template = spec.template.points
    tbox = shape_bbox(spec.template)

    a = math.radians(theta)
    rot = np.array([[math.cos(a), math.sin(a)], [-math.sin(a), math.cos(a)]])
    s_px = spec.face_scale * min(w, h) * scale
    centre = np.array([(w - 1) / 2.0 + shift[0], (h - 1) / 2.0 + shift[1]])
    gt = centre + (template - 0.5) @ rot.T * s_px

    # face-frame coordinates of every canvas pixel (inverse of the placement)
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    dx = (xs - centre[0]) / s_px
    dy = (ys - centre[1]) / s_px
    ux = dx * rot[0, 0] + dy * rot[1, 0] + 0.5
    uy = dx * rot[0, 1] + dy * rot[1, 1] + 0.5

    canvas = 0.24 + 0.12 * xs / (w - 1) + 0.06 * ys / (h - 1) + noise

    # elliptical head with a brightness ramp along the face's up-axis
    dcx, dcy = tbox.x + tbox.w / 2.0, tbox.y + tbox.h / 2.0
    m = ((ux - dcx) / (0.62 * tbox.w)) ** 2 + ((uy - dcy) / (0.58 * tbox.h)) ** 2
    blend = np.clip((1.12 - m) / 0.24, 0.0, 1.0)
    head = np.clip(0.62 + 0.30 * (dcy - uy), 0.30, 0.95)
    canvas = canvas * (1 - blend) + head * blend

    # one small distinct blob per landmark
    for i, (px, py) in enumerate(gt):
        sigma = s_px * (0.012 + 0.006 * ((i * 7) % 5) / 4.0)
        amp = (0.30 + 0.10 * ((i * 13) % 7) / 6.0) * (1.0 if i % 2 == 0 else -1.0)
        reach = int(math.ceil(3 * sigma))
        x0, x1 = max(0, int(px) - reach), min(w, int(px) + reach + 2)
        y0, y1 = max(0, int(py) - reach), min(h, int(py) + reach + 2)
        if x0 >= x1 or y0 >= y1:
            continue
        gx = np.arange(x0, x1, dtype=np.float64)[None, :] - px
        gy = np.arange(y0, y1, dtype=np.float64)[:, None] - py
        canvas[y0:y1, x0:x1] += amp * np.exp(-(gx ** 2 + gy ** 2) / (2 * sigma ** 2))

    return GrayImage(np.clip(canvas, 0.0, 1.0)), Shape(gt)


def _jittered_box(box: BoundingBox, jitter: float, rng: np.random.Generator) -> BoundingBox:
    dx1 = rng.uniform(-jitter * box.w, jitter * box.w)
    dy1 = rng.uniform(-jitter * box.h, jitter * box.h)
    dx2 = rng.uniform(-jitter * box.w, jitter * box.w)
    dy2 = rng.uniform(-jitter * box.h, jitter * box.h)
    x1, y1 = box.x + dx1, box.y + dy1
    x2, y2 = box.x2 + dx2, box.y2 + dy2
    return BoundingBox(x1, y1, max(1.0, x2 - x1), max(1.0, y2 - y1))


def generate_synthetic(spec: SyntheticFaceSpec, count: int, seed: int) -> list[SyntheticSample]:
    """Render ``count`` samples; identical (spec, count, seed) give identical bits."""
    if count < 1:
        raise InvalidInputError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    noise = _noise_field(spec.image_size[1], spec.image_size[0], spec.texture_seed)
    samples = []
    for _ in range(count):
        theta = rng.uniform(*spec.rotation_range)
        scale = rng.uniform(*spec.scale_range)
        shift = (rng.uniform(-spec.translation_range, spec.translation_range),
                 rng.uniform(-spec.translation_range, spec.translation_range))
        image, gt = _render(spec, theta, scale, shift, noise)
        gt_box = shape_bbox(gt)
        detections = tuple(
            Detection(box=_jittered_box(gt_box, spec.detection_jitter, rng),
                      score=min(0.99, 0.90 + 0.03 * idx), source=source)
            for idx, source in enumerate(spec.detection_sources)
        )
        samples.append(SyntheticSample(image=image, shape=gt, detections=detections,
                                       rotation=float(theta), scale=float(scale)))
    return samples
