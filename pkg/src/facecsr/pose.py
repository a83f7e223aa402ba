"""Rough pose estimation and image normalisation before fine landmarking.

A small two-stage cascade produces rough landmarks.  For near-frontal faces
the in-plane roll is read off the nose bridge (1-based landmarks 28 and 34 of
the 68-point markup): roll = atan2(dx, dy) of the bridge-to-tip vector, in
degrees, 0 for an upright face, positive when the tip sits to the right of
the bridge.  For profile faces the facing side is read by comparing the x
coordinates of 1-based landmarks 3 and 20 of the 39-point markup.  The image
is then rotated by quarter turns toward upright (when |roll| exceeds a
threshold) or mirrored (for right-facing profiles) so the fine model only
ever sees rolls inside its training range, and the fine result is mapped
back afterwards.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, InvalidInputError
from .geometry import (PlanarTransform, Shape, apply_transform, horizontal_flip, identity,
                       rotation)
from .image import GrayImage, apply_transform_image
from .regression import CascadeModel, apply_cascade

__all__ = [
    "SEMI_FRONTAL",
    "PROFILE",
    "LEFT",
    "RIGHT",
    "NOT_APPLICABLE",
    "PoseEstimate",
    "rough_landmarks",
    "roll_from_landmarks",
    "yaw_side",
    "estimate_pose",
    "normalize_pose",
    "back_transform_landmarks",
    "mirror_permutation_68",
    "identity_permutation",
    "permutation_from_pairs",
    "load_permutation",
    "save_permutation",
    "apply_permutation",
    "flip_shape",
]

SEMI_FRONTAL = "semi-frontal"
PROFILE = "profile"
LEFT = "left"
RIGHT = "right"
NOT_APPLICABLE = "not-applicable"

_BRIDGE_INDEX = 27  # 0-based index of 1-based landmark 28 (top of nose bridge)
_TIP_INDEX = 33     # 0-based index of 1-based landmark 34 (nose tip)
_PROFILE_A = 2      # 0-based index of 1-based landmark 3
_PROFILE_B = 19     # 0-based index of 1-based landmark 20


@dataclass(frozen=True)
class PoseEstimate:
    """Estimated pose and the normalising transform that was applied.

    ``side`` is "not-applicable" exactly when the layout is semi-frontal.
    ``transform`` maps original-frame points into the normalised frame.
    """

    layout: str
    roll: float
    side: str
    transform: PlanarTransform

    def __post_init__(self):
        if self.layout not in (SEMI_FRONTAL, PROFILE):
            raise InvalidInputError(f"unknown layout: {self.layout!r}")
        if (self.side == NOT_APPLICABLE) != (self.layout == SEMI_FRONTAL):
            raise InvalidInputError(
                f"side {self.side!r} inconsistent with layout {self.layout!r}"
            )
        if self.layout == PROFILE and self.side not in (LEFT, RIGHT):
            raise InvalidInputError(f"profile side must be left or right, got {self.side!r}")


def rough_landmarks(model: CascadeModel, image: GrayImage, box) -> Shape:
    """Run the rough (two-stage) cascade; any other depth is a config error."""
    if model.num_stages != 2:
        raise ConfigError(
            f"rough landmark model must have exactly 2 stages, got {model.num_stages}"
        )
    return apply_cascade(model, image, box)


def roll_from_landmarks(shape: Shape) -> float:
    """In-plane roll in degrees from the 68-point nose bridge direction.

    Returns a value in (-180, 180].  A coincident bridge and tip cannot give
    a direction; that degenerate case warns and returns 0.
    """
    if shape.num_points != 68:
        raise InvalidInputError(
            f"roll estimation needs the 68-point markup, got {shape.num_points} points"
        )
    d = shape.points[_TIP_INDEX] - shape.points[_BRIDGE_INDEX]
    if d[0] == 0.0 and d[1] == 0.0:
        warnings.warn("nose bridge and tip coincide; treating roll as 0", stacklevel=2)
        return 0.0
    return float(np.degrees(np.arctan2(d[0], d[1])))


def yaw_side(shape: Shape, invert: bool = False) -> str:
    """Facing side of a 39-point profile shape.

    By default the face is called right-facing when 1-based landmark 3 lies
    left of landmark 20; ``invert`` swaps the convention for annotation
    schemes with the opposite ordering.  Equal x breaks to "left".
    """
    if shape.num_points != 39:
        raise InvalidInputError(
            f"side estimation needs the 39-point markup, got {shape.num_points} points"
        )
    x3 = shape.points[_PROFILE_A, 0]
    x20 = shape.points[_PROFILE_B, 0]
    if x3 == x20:
        return LEFT
    is_right = (x3 < x20) != invert
    return RIGHT if is_right else LEFT


def estimate_pose(rough: Shape, layout: str, side_invert: bool = False) -> tuple[float, str]:
    """(roll degrees, side) for the given layout; the unused one is neutral."""
    if layout == SEMI_FRONTAL:
        return roll_from_landmarks(rough), NOT_APPLICABLE
    if layout == PROFILE:
        return 0.0, yaw_side(rough, invert=side_invert)
    raise InvalidInputError(f"unknown layout: {layout!r}")


def normalize_pose(image: GrayImage, rough: Shape, layout: str, *,
                   roll_threshold: float = 45.0, side_invert: bool = False
                   ) -> tuple[GrayImage, PoseEstimate]:
    """Bring the face into canonical pose.

    Semi-frontal: when |roll| exceeds ``roll_threshold`` degrees, rotate the
    image by the nearest multiple of 90 degrees to -roll.  Quarter-turn
    rotations permute pixels without resampling, so the normalised image is
    as sharp as the input; the remaining |roll| is bounded by
    max(45, roll_threshold) degrees, inside the fine model's training
    range.  Profile: mirror right-facing faces.  Otherwise the image is
    returned untouched with an identity transform.
    """
    roll, side = estimate_pose(rough, layout, side_invert=side_invert)
    quarter = 90.0 * round(roll / 90.0)
    if layout == SEMI_FRONTAL and abs(roll) > roll_threshold and quarter != 0.0:
        out, transform = apply_transform_image(image, rotation(-quarter, image.centre))
    elif layout == PROFILE and side == RIGHT:
        out, transform = apply_transform_image(image, horizontal_flip(image.width))
    else:
        out, transform = image, identity()
    return out, PoseEstimate(layout=layout, roll=roll, side=side, transform=transform)


def back_transform_landmarks(shape: Shape, pose: PoseEstimate,
                             flip_permutation: np.ndarray | None = None) -> Shape:
    """Map normalised-frame landmarks back into the original frame.

    Inverts the pose transform; when the face was mirrored, the landmark
    indices are additionally permuted so each index keeps its anatomical
    meaning.  The permutation must be an involution; it defaults to identity
    (markup schemes whose indexing is side-symmetric).
    """
    out = apply_transform(shape, pose.transform.inverse())
    if pose.side == RIGHT and pose.transform.flips_orientation:
        perm = flip_permutation if flip_permutation is not None \
            else identity_permutation(shape.num_points)
        out = apply_permutation(out, perm)
    return out


# ---------------------------------------------------------------------------
# index permutations for mirrored faces
# ---------------------------------------------------------------------------

# 1-based swapped pairs of the 68-point markup under a left-right mirror
_MIRROR_68_PAIRS = (
    (1, 17), (2, 16), (3, 15), (4, 14), (5, 13), (6, 12), (7, 11), (8, 10),
    (18, 27), (19, 26), (20, 25), (21, 24), (22, 23),
    (32, 36), (33, 35),
    (37, 46), (38, 45), (39, 44), (40, 43), (41, 48), (42, 47),
    (49, 55), (50, 54), (51, 53), (56, 60), (57, 59),
    (61, 65), (62, 64), (66, 68),
)


def identity_permutation(n: int) -> np.ndarray:
    return np.arange(n, dtype=np.int64)


def permutation_from_pairs(pairs, n: int) -> np.ndarray:
    """Build a 0-based permutation array from 1-based swapped pairs.

    Indices not mentioned stay fixed.  The result swaps each pair, so it is
    an involution by construction.
    """
    perm = identity_permutation(n)
    for i, j in pairs:
        if not (1 <= i <= n and 1 <= j <= n):
            raise InvalidInputError(f"pair ({i}, {j}) outside 1..{n}")
        if perm[i - 1] != i - 1 or perm[j - 1] != j - 1:
            raise InvalidInputError(f"index {i} or {j} appears in more than one pair")
        perm[i - 1] = j - 1
        perm[j - 1] = i - 1
    return perm


def mirror_permutation_68() -> np.ndarray:
    """The built-in mirror permutation of the 68-point markup."""
    return permutation_from_pairs(_MIRROR_68_PAIRS, 68)


def load_permutation(path, n: int) -> np.ndarray:
    """Read swapped pairs from a text file, one 1-based "i j" pair per line.

    Blank lines and lines starting with '#' are ignored.  The loaded table
    is validated to be an involution.
    """
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 2:
                raise FormatError("expected two indices per line", path=str(path), line=lineno)
            try:
                i, j = int(fields[0]), int(fields[1])
            except ValueError:
                raise FormatError(f"non-integer index in {line!r}",
                                  path=str(path), line=lineno) from None
            pairs.append((i, j))
    try:
        return permutation_from_pairs(pairs, n)
    except InvalidInputError as err:
        raise FormatError(str(err), path=str(path)) from None


def save_permutation(perm: np.ndarray, path) -> None:
    """Write the swapped pairs of an involution permutation."""
    perm = np.asarray(perm)
    if not np.array_equal(perm[perm], identity_permutation(perm.size)):
        raise InvalidInputError("permutation is not an involution")
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(perm.size):
            if perm[i] > i:
                fh.write(f"{i + 1} {perm[i] + 1}\n")


def apply_permutation(shape: Shape, perm: np.ndarray) -> Shape:
    """Reorder landmarks: output point i is input point perm[i]."""
    perm = np.asarray(perm)
    if perm.shape != (shape.num_points,):
        raise InvalidInputError(
            f"permutation length {perm.shape} does not match {shape.num_points} landmarks"
        )
    if not np.array_equal(np.sort(perm), identity_permutation(shape.num_points)):
        raise InvalidInputError("not a permutation of 0..L-1")
    return Shape(shape.points[perm])


def flip_shape(shape: Shape, width: float, perm: np.ndarray | None = None) -> Shape:
    """Mirror a shape about the vertical axis of a width-wide image.

    Coordinates map x -> width - 1 - x; indices are re-labelled by ``perm``
    (identity when omitted) so mirrored landmarks keep their meaning.
    """
    mirrored = apply_transform(shape, horizontal_flip(width))
    if perm is None:
        return mirrored
    return apply_permutation(mirrored, perm)
