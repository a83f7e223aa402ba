"""Grayscale images and bilinear resampling.

Images are row-major float arrays with values in [0, 1].  Sampling reads
out-of-bounds positions as zero, so patches may extend past the image.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import BoundingBox, PlanarTransform, translation

__all__ = [
    "GrayImage",
    "bilinear_sample",
    "extract_patch",
    "resample_box",
    "apply_transform_image",
    "rotate_image",
    "flip_image",
]


@dataclass(frozen=True, eq=False)
class GrayImage:
    """A single-channel image; ``pixels`` is (height, width) float64 in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidInputError(f"image must be a 2-D array, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise InvalidInputError("image contains non-finite values")
        lo, hi = float(px.min()), float(px.max())
        if lo < -1e-9 or hi > 1 + 1e-9:
            raise InvalidInputError(f"image values must lie in [0, 1], got [{lo}, {hi}]")
        # tolerate float dust from resampling
        px = np.clip(px, 0.0, 1.0)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def centre(self) -> tuple[float, float]:
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)


def bilinear_sample(image: GrayImage, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinearly interpolated intensities at float positions (zero outside)."""
    px = image.pixels
    h, w = px.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    tx = xs - x0
    ty = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    out = np.zeros(np.broadcast(xs, ys).shape)
    for dy in (0, 1):
        wy = ty if dy else 1.0 - ty
        yi = y0 + dy
        for dx in (0, 1):
            wx = tx if dx else 1.0 - tx
            xi = x0 + dx
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            vals = px[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
            out = out + np.where(inside, wx * wy * vals, 0.0)
    return out


def extract_patch(image: GrayImage, centre: tuple[float, float], side: int,
                  margin: int = 0) -> np.ndarray:
    """A square ``side`` x ``side`` patch centred at ``centre`` (plus a margin).

    Sampling positions are one pixel apart, so for an integer-aligned centre
    the patch is an exact pixel crop.  ``margin`` extra rows/columns are added
    on every side (used for neighbourhood codes at patch borders).
    """
    if side < 1:
        raise InvalidInputError(f"patch side must be >= 1, got {side}")
    cx, cy = float(centre[0]), float(centre[1])
    n = side + 2 * margin
    offs = np.arange(n) - margin - (side - 1) / 2.0
    xs = cx + offs[None, :]
    ys = cy + offs[:, None]
    return bilinear_sample(image, np.broadcast_to(xs, (n, n)), np.broadcast_to(ys, (n, n)))


def resample_box(image: GrayImage, box: BoundingBox, out_w: int, out_h: int,
                 margin: int = 0) -> np.ndarray:
    """Resample the content of ``box`` onto a fixed (out_h, out_w) grid.

    Output pixel (i, j) reads the source at the centre of the j-th of
    ``out_w`` equal horizontal strips of the box (and likewise vertically),
    so resampling the whole image onto its own grid is the identity.
    ``margin`` adds extra output pixels on each side, sampled at the same
    step beyond the box.
    """
    if out_w < 1 or out_h < 1:
        raise InvalidInputError("resample target must be at least 1x1")
    sx = box.w / out_w
    sy = box.h / out_h
    xs = box.x - 0.5 + (np.arange(out_w + 2 * margin) - margin + 0.5) * sx
    ys = box.y - 0.5 + (np.arange(out_h + 2 * margin) - margin + 0.5) * sy
    n = (out_h + 2 * margin, out_w + 2 * margin)
    return bilinear_sample(image, np.broadcast_to(xs[None, :], n), np.broadcast_to(ys[:, None], n))


def apply_transform_image(image: GrayImage, t: PlanarTransform
                          ) -> tuple[GrayImage, PlanarTransform]:
    """Resample ``image`` under ``t``, expanding the canvas to contain it.

    Returns the resampled image together with the effective point transform,
    which is ``t`` followed by the canvas translation; use it to carry
    landmarks and boxes into the new frame (and back, via its inverse).
    Output pixels with no source coverage are zero.
    """
    w, h = image.width, image.height
    corners = np.array([
        [-0.5, -0.5],
        [w - 0.5, -0.5],
        [w - 0.5, h - 0.5],
        [-0.5, h - 0.5],
    ])
    mapped = t.apply(corners)
    xmin, ymin = mapped.min(axis=0)
    xmax, ymax = mapped.max(axis=0)
    out_w = max(1, int(math.ceil(xmax - xmin - 1e-9)))
    out_h = max(1, int(math.ceil(ymax - ymin - 1e-9)))
    effective = t.then(translation(-0.5 - xmin, -0.5 - ymin))

    inv = effective.inverse().matrix()
    us = np.arange(out_w, dtype=np.float64)
    vs = np.arange(out_h, dtype=np.float64)
    src_x = inv[0, 0] * us[None, :] + inv[0, 1] * vs[:, None] + inv[0, 2]
    src_y = inv[1, 0] * us[None, :] + inv[1, 1] * vs[:, None] + inv[1, 2]
    return GrayImage(bilinear_sample(image, src_x, src_y)), effective


def rotate_image(image: GrayImage, angle_deg: float) -> tuple[GrayImage, PlanarTransform]:
    """Rotate about the image centre, expanding the canvas."""
    from .geometry import rotation

    return apply_transform_image(image, rotation(angle_deg, image.centre))


def flip_image(image: GrayImage) -> tuple[GrayImage, PlanarTransform]:
    """Mirror left-to-right (x -> width - 1 - x); exact, no interpolation loss."""
    from .geometry import horizontal_flip

    return apply_transform_image(image, horizontal_flip(image.width))
