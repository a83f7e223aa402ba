"""Landmark shapes, bounding boxes and invertible planar transforms.

Coordinates are image pixel coordinates: x grows to the right, y grows
downwards, and integer positions are pixel centres.  All angles are in
degrees.  A rotation by angle ``a`` maps the "down" unit vector (0, 1)
to (sin a, cos a); with the roll convention used in :mod:`facecsr.pose`
this means rotating a shape by ``a`` adds ``a`` to its roll.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidModelError

__all__ = [
    "Shape",
    "BoundingBox",
    "PlanarTransform",
    "identity",
    "rotation",
    "horizontal_flip",
    "translation",
    "shape_bbox",
    "align_mean_shape",
    "mean_shape",
    "apply_transform",
    "transform_box",
]


@dataclass(frozen=True, eq=False)
class Shape:
    """An ordered set of 2-D landmarks, stored as an (L, 2) float array."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise InvalidInputError(
                f"landmark array must have shape (L, 2) with L >= 1, got {pts.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("landmark coordinates must be finite")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    @property
    def xs(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def ys(self) -> np.ndarray:
        return self.points[:, 1]

    def vector(self) -> np.ndarray:
        """Flatten to [x1..xL, y1..yL] (all x coordinates, then all y)."""
        return np.concatenate([self.points[:, 0], self.points[:, 1]])

    @classmethod
    def from_vector(cls, vec) -> "Shape":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or vec.size % 2 != 0 or vec.size < 2:
            raise InvalidInputError(f"shape vector must have even length >= 2, got {vec.shape}")
        half = vec.size // 2
        return cls(np.column_stack([vec[:half], vec[half:]]))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box given by its left-upper corner, width and height."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError(f"box fields must be finite, got {vals}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidInputError(f"box extents must be positive, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def centre(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.w, self.h)

    def corners(self) -> np.ndarray:
        """The four corner points, (4, 2), clockwise from left-upper."""
        return np.array(
            [
                [self.x, self.y],
                [self.x2, self.y],
                [self.x2, self.y2],
                [self.x, self.y2],
            ]
        )

    def contains(self, px: float, py: float) -> bool:
        """Boundary-inclusive point containment."""
        return self.x <= px <= self.x2 and self.y <= py <= self.y2


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Rotation:
    angle_deg: float
    cx: float
    cy: float

    def matrix(self) -> np.ndarray:
        a = math.radians(self.angle_deg)
        c, s = math.cos(a), math.sin(a)
        # p' = c0 + M (p - c0); rotating by a adds a to the roll of a shape
        m = np.array([[c, s], [-s, c]])
        t = np.array([self.cx, self.cy]) - m @ np.array([self.cx, self.cy])
        return _affine(m, t)

    def inverted(self) -> "_Rotation":
        return _Rotation(-self.angle_deg, self.cx, self.cy)


@dataclass(frozen=True)
class _HorizontalFlip:
    width: float  # x -> width - 1 - x (pixel-centre mirror)

    def matrix(self) -> np.ndarray:
        return _affine(np.array([[-1.0, 0.0], [0.0, 1.0]]), np.array([self.width - 1.0, 0.0]))

    def inverted(self) -> "_HorizontalFlip":
        return self


@dataclass(frozen=True)
class _Translation:
    dx: float
    dy: float

    def matrix(self) -> np.ndarray:
        return _affine(np.eye(2), np.array([self.dx, self.dy]))

    def inverted(self) -> "_Translation":
        return _Translation(-self.dx, -self.dy)


def _affine(m: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.eye(3)
    out[:2, :2] = m
    out[:2, 2] = t
    return out


@dataclass(frozen=True)
class PlanarTransform:
    """An ordered composition of rotations, horizontal flips and translations.

    The empty composition is the identity.  Inversion is structural (each
    step knows its own inverse), so round trips are exact to floating point
    noise rather than to the accuracy of a matrix inverse.
    """

    steps: tuple = ()

    @property
    def is_identity(self) -> bool:
        return len(self.steps) == 0

    @property
    def flips_orientation(self) -> bool:
        return sum(isinstance(s, _HorizontalFlip) for s in self.steps) % 2 == 1

    def then(self, other: "PlanarTransform") -> "PlanarTransform":
        """The transform that applies ``self`` first, then ``other``."""
        return PlanarTransform(self.steps + other.steps)

    def inverse(self) -> "PlanarTransform":
        return PlanarTransform(tuple(s.inverted() for s in reversed(self.steps)))

    def matrix(self) -> np.ndarray:
        """Homogeneous 3x3 matrix equivalent to the step sequence."""
        out = np.eye(3)
        for step in self.steps:
            out = step.matrix() @ out
        return out

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map an (N, 2) array of points."""
        pts = np.asarray(points, dtype=np.float64)
        m = self.matrix()
        return pts @ m[:2, :2].T + m[:2, 2]


def identity() -> PlanarTransform:
    return PlanarTransform()


def rotation(angle_deg: float, centre: tuple[float, float]) -> PlanarTransform:
    if not (math.isfinite(angle_deg) and all(math.isfinite(c) for c in centre)):
        raise InvalidInputError("rotation angle and centre must be finite")
    return PlanarTransform((_Rotation(float(angle_deg), float(centre[0]), float(centre[1])),))


def horizontal_flip(width: float) -> PlanarTransform:
    if not math.isfinite(width) or width <= 0:
        raise InvalidInputError(f"flip width must be positive, got {width}")
    return PlanarTransform((_HorizontalFlip(float(width)),))


def translation(dx: float, dy: float) -> PlanarTransform:
    if not (math.isfinite(dx) and math.isfinite(dy)):
        raise InvalidInputError("translation offsets must be finite")
    return PlanarTransform((_Translation(float(dx), float(dy)),))


# ---------------------------------------------------------------------------
# shape operations
# ---------------------------------------------------------------------------

def shape_bbox(shape: Shape) -> BoundingBox:
    """Tight axis-aligned box around the landmarks.

    A degenerate extent (all points sharing an x or y coordinate) is widened
    to one pixel, keeping the left-upper corner at the coordinate minimum.
    """
    xs, ys = shape.xs, shape.ys
    w = float(xs.max() - xs.min())
    h = float(ys.max() - ys.min())
    return BoundingBox(float(xs.min()), float(ys.min()), w if w > 0 else 1.0, h if h > 0 else 1.0)


def align_mean_shape(mean: Shape, box: BoundingBox) -> Shape:
    """Anisotropically map ``mean`` so its tight box coincides with ``box``."""
    xs, ys = mean.xs, mean.ys
    mw = float(xs.max() - xs.min())
    mh = float(ys.max() - ys.min())
    if mw == 0.0 or mh == 0.0:
        raise InvalidModelError("mean shape has zero extent and cannot be aligned to a box")
    sx = box.w / mw
    sy = box.h / mh
    out = np.column_stack([(xs - xs.min()) * sx + box.x, (ys - ys.min()) * sy + box.y])
    return Shape(out)


def mean_shape(shapes) -> Shape:
    """Pointwise average of box-normalised shapes.

    Each input is mapped so its tight box becomes the unit square, then the
    normalised copies are averaged point by point.  The result is therefore
    invariant to per-shape translation and scaling of the inputs.
    """
    shapes = list(shapes)
    if not shapes:
        raise InvalidInputError("mean_shape needs at least one shape")
    num = shapes[0].num_points
    acc = np.zeros((num, 2))
    for s in shapes:
        if s.num_points != num:
            raise InvalidInputError(
                f"mixed landmark counts in mean_shape: {num} vs {s.num_points}"
            )
        b = shape_bbox(s)
        acc += (s.points - [b.x, b.y]) / [b.w, b.h]
    return Shape(acc / len(shapes))


def apply_transform(shape: Shape, t: PlanarTransform) -> Shape:
    return Shape(t.apply(shape.points))


def transform_box(box: BoundingBox, t: PlanarTransform) -> BoundingBox:
    """Tight axis-aligned box around the transformed corners of ``box``."""
    mapped = t.apply(box.corners())
    x1, y1 = mapped.min(axis=0)
    x2, y2 = mapped.max(axis=0)
    return BoundingBox(float(x1), float(y1), float(x2 - x1), float(y2 - y1))
