"""End-to-end landmark localisation and training-set augmentation.

Localisation runs: detection aggregation -> rough landmarks -> pose
normalisation -> an ensemble of fine cascades started from randomly
perturbed boxes -> pointwise mean -> back-transform into the original
frame.  Training-set construction mirrors the pose conventions: the rough
model is trained over the full rotation circle (or both profile sides),
the fine model only over the residual pose range it will see after
normalisation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .aggregation import AggregationConfig, aggregate
from .errors import ConfigError, InvalidInputError
from .geometry import (BoundingBox, Shape, apply_transform, identity, shape_bbox,
                       transform_box)
from .image import GrayImage, flip_image, rotate_image
from .pose import (PROFILE, RIGHT, SEMI_FRONTAL, PoseEstimate, apply_permutation,
                   back_transform_landmarks, estimate_pose, identity_permutation,
                   mirror_permutation_68, normalize_pose, yaw_side)
from .regression import CascadeModel, apply_cascade

__all__ = [
    "POSE_MODEL",
    "FINAL_MODEL",
    "TrainingSample",
    "AugmentationSpec",
    "PerturbationConfig",
    "PipelineModel",
    "LocalizeDiagnostics",
    "build_training_set",
    "perturb_bbox",
    "localize",
]

logger = logging.getLogger(__name__)

POSE_MODEL = "pose-model"
FINAL_MODEL = "final-model"


@dataclass(frozen=True)
class TrainingSample:
    """One annotated training image with its initialisation box."""

    image: GrayImage
    shape: Shape
    box: BoundingBox


@dataclass(frozen=True)
class AugmentationSpec:
    """How to expand annotated data before training one of the two models.

    Every emitted sample is an in-plane rotated copy (angle uniform in
    ``rotation_range``, canvas expanded).  ``flip`` additionally emits a
    mirrored copy per rotation.  ``normalize_side`` instead mirrors
    right-facing profile faces once, so the output contains left-facing
    faces only.  Use the factories for the standard recipes.
    """

    stage: str
    layout: str
    flip: bool
    rotation_range: tuple[float, float]
    samples_per_image: int = 1
    normalize_side: bool = False

    def __post_init__(self):
        if self.stage not in (POSE_MODEL, FINAL_MODEL):
            raise ConfigError(f"unknown stage: {self.stage!r}")
        if self.layout not in (SEMI_FRONTAL, PROFILE):
            raise ConfigError(f"unknown layout: {self.layout!r}")
        if self.rotation_range[0] > self.rotation_range[1]:
            raise ConfigError(f"bad rotation_range: {self.rotation_range}")
        if self.samples_per_image < 1:
            raise ConfigError("samples_per_image must be >= 1")
        if self.flip and self.normalize_side:
            raise ConfigError("flip and normalize_side are mutually exclusive")

    @classmethod
    def pose_model(cls, layout: str, samples_per_image: int = 1) -> "AugmentationSpec":
        """Rough-model recipe: every roll for frontal faces, both sides for profiles."""
        if layout == SEMI_FRONTAL:
            return cls(POSE_MODEL, layout, flip=False, rotation_range=(0.0, 360.0),
                       samples_per_image=samples_per_image)
        return cls(POSE_MODEL, layout, flip=True, rotation_range=(-30.0, 30.0),
                   samples_per_image=samples_per_image)

    @classmethod
    def final_model(cls, layout: str, samples_per_image: int = 1) -> "AugmentationSpec":
        """Fine-model recipe: residual rotations; one canonical side for profiles.

        Semi-frontal pose normalisation rotates by quarter turns, so the
        fine model sees residual rolls up to 45 degrees and trains on that
        full range.
        """
        if layout == SEMI_FRONTAL:
            return cls(FINAL_MODEL, layout, flip=True, rotation_range=(-45.0, 45.0),
                       samples_per_image=samples_per_image)
        return cls(FINAL_MODEL, layout, flip=False, rotation_range=(-30.0, 30.0),
                   samples_per_image=samples_per_image, normalize_side=True)


def _default_flip_permutation(num_points: int, override: np.ndarray | None) -> np.ndarray:
    if override is not None:
        return override
    if num_points == 68:
        return mirror_permutation_68()
    return identity_permutation(num_points)


def _flip_record(rec: TrainingSample, perm: np.ndarray) -> TrainingSample:
    image, t = flip_image(rec.image)
    mirrored = apply_permutation(apply_transform(rec.shape, t), perm)
    return TrainingSample(image=image, shape=mirrored, box=transform_box(rec.box, t))


def _carry_box(box: BoundingBox, shape: Shape, new_shape: Shape,
               t) -> BoundingBox:
    """Map a shape-anchored box into the transformed frame.

    The axis-aligned hull of a rotated box inflates at oblique angles
    (up to |cos| + |sin| per axis), which no box anchored to the face --
    a detector output or a landmark-tight crop -- actually does.  The hull
    is therefore rescaled from the hull of the shape's tight box onto the
    tight box of the transformed landmarks, preserving the box's size and
    offset relative to the face.  For flips and axis-aligned rotations
    this reduces to the plain corner mapping.
    """
    mapped = transform_box(box, t)
    ref_src = transform_box(shape_bbox(shape), t)
    ref_dst = shape_bbox(new_shape)
    sx = ref_dst.w / ref_src.w
    sy = ref_dst.h / ref_src.h
    return BoundingBox(ref_dst.x + (mapped.x - ref_src.x) * sx,
                       ref_dst.y + (mapped.y - ref_src.y) * sy,
                       mapped.w * sx, mapped.h * sy)


def build_training_set(records, aug: AugmentationSpec, seed: int,
                       flip_permutation: np.ndarray | None = None,
                       side_invert: bool = False) -> list[TrainingSample]:
    """Expand annotated records into an augmented training list.

    Draws are consumed in record order, so a fixed seed reproduces the set
    bit for bit.  With one sample per image, a degenerate rotation range of
    [0, 0] and no flipping, the output is an identity copy of the input.
    """
    records = list(records)
    if not records:
        raise InvalidInputError("no records to augment")
    rng = np.random.default_rng(seed)
    perm = _default_flip_permutation(records[0].shape.num_points, flip_permutation)
    out = []
    for rec in records:
        if aug.normalize_side:
            if yaw_side(rec.shape, invert=side_invert) == RIGHT:
                variants = [_flip_record(rec, perm)]
            else:
                variants = [rec]
        elif aug.flip:
            variants = [rec, _flip_record(rec, perm)]
        else:
            variants = [rec]
        for variant in variants:
            for _ in range(aug.samples_per_image):
                theta = rng.uniform(*aug.rotation_range)
                image, t = rotate_image(variant.image, theta)
                shape = apply_transform(variant.shape, t)
                out.append(TrainingSample(
                    image=image,
                    shape=shape,
                    box=_carry_box(variant.box, variant.shape, shape, t),
                ))
    return out


@dataclass(frozen=True)
class PerturbationConfig:
    """Ensemble settings: ``count`` runs from boxes jittered by ``magnitude``."""

    magnitude: float = 0.05
    count: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.magnitude < 0.5:
            raise ConfigError(f"magnitude must be in [0, 0.5), got {self.magnitude}")
        if self.count < 1:
            raise ConfigError(f"count must be >= 1, got {self.count}")


def perturb_bbox(box: BoundingBox, magnitude: float, rng: np.random.Generator) -> BoundingBox:
    """Shift each corner independently by up to ``magnitude`` of the box extent.

    x offsets are uniform in [-magnitude*w, magnitude*w], y offsets likewise
    with the height.  In the (only theoretically possible) degenerate case
    the draw is retried a few times, then extents are clamped to a pixel.
    A magnitude of 0 returns the box unchanged.
    """
    if not 0.0 <= magnitude < 0.5:
        raise InvalidInputError(f"magnitude must be in [0, 0.5), got {magnitude}")
    if magnitude == 0.0:
        return box
    mx, my = magnitude * box.w, magnitude * box.h
    x1 = y1 = x2 = y2 = 0.0
    for _ in range(10):
        x1 = box.x + rng.uniform(-mx, mx)
        y1 = box.y + rng.uniform(-my, my)
        x2 = box.x2 + rng.uniform(-mx, mx)
        y2 = box.y2 + rng.uniform(-my, my)
        if x2 > x1 and y2 > y1:
            return BoundingBox(x1, y1, x2 - x1, y2 - y1)
    return BoundingBox(x1, y1, max(1.0, x2 - x1), max(1.0, y2 - y1))


@dataclass(frozen=True, eq=False)
class PipelineModel:
    """Everything needed to localise landmarks in one image.

    ``flip_permutation`` re-labels landmark indices when a mirrored profile
    face is mapped back (identity when None).  Stage counts other than the
    standard 2 (rough) and 6 (fine) are allowed but logged.
    """

    layout: str
    pose_csr: CascadeModel
    final_csr: CascadeModel
    aggregation: AggregationConfig
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    roll_threshold: float = 45.0
    flip_permutation: np.ndarray | None = None
    side_invert: bool = False

    def __post_init__(self):
        if self.layout not in (SEMI_FRONTAL, PROFILE):
            raise ConfigError(f"unknown layout: {self.layout!r}")
        expected = 68 if self.layout == SEMI_FRONTAL else 39
        for name, model in (("pose", self.pose_csr), ("final", self.final_csr)):
            if model.num_landmarks != expected:
                raise ConfigError(
                    f"{name} model has {model.num_landmarks} landmarks, "
                    f"layout {self.layout!r} needs {expected}"
                )
        if self.pose_csr.num_stages != 2:
            logger.warning("rough model has %d stages (standard is 2)",
                           self.pose_csr.num_stages)
        if self.final_csr.num_stages != 6:
            logger.warning("fine model has %d stages (standard is 6)",
                           self.final_csr.num_stages)
        if self.flip_permutation is not None:
            perm = np.asarray(self.flip_permutation, dtype=np.int64)
            if perm.shape != (expected,):
                raise ConfigError(f"flip permutation must have length {expected}")
            object.__setattr__(self, "flip_permutation", perm)


@dataclass(frozen=True)
class LocalizeDiagnostics:
    """Where the working box came from and what the ensemble actually ran."""

    branch: str
    roll: float
    side: str
    count: int
    detection_box: BoundingBox
    working_box: BoundingBox
    run_boxes: tuple[BoundingBox, ...]
    rough: Shape


def localize(model: PipelineModel, image: GrayImage, detections_by_source,
             seed: int | None = None, pose_enabled: bool = True
             ) -> tuple[Shape, LocalizeDiagnostics]:
    """Full landmark localisation for one image.

    Deterministic given (model, image, detections, seed); ``seed`` defaults
    to the model's perturbation seed.  The box-jitter stream is keyed by
    the seed together with the aggregated box, so a batch of images does
    not share one jitter pattern (a shared pattern is a common net offset,
    a bias that would not average out over a dataset).  With one run and
    zero magnitude the result equals a single fine-cascade application bit
    for bit.  ``pose_enabled=False`` skips the normalisation (for
    ablations): the pose is still estimated and reported, but the image is
    left untouched.
    """
    det_box, branch = aggregate(detections_by_source, image, model.aggregation)
    rough = apply_cascade(model.pose_csr, image, det_box)

    if pose_enabled:
        work_image, pose = normalize_pose(image, rough, model.layout,
                                          roll_threshold=model.roll_threshold,
                                          side_invert=model.side_invert)
    else:
        roll, side = estimate_pose(rough, model.layout, side_invert=model.side_invert)
        work_image = image
        pose = PoseEstimate(layout=model.layout, roll=roll, side=side, transform=identity())

    working_box = shape_bbox(apply_transform(rough, pose.transform))

    base = model.perturbation.seed if seed is None else seed
    box_key = np.array([det_box.x, det_box.y, det_box.w, det_box.h],
                       dtype=np.float64).view(np.uint64)
    rng = np.random.default_rng([int(base), *(int(v) for v in box_key)])
    run_boxes = []
    stacked = np.empty((model.perturbation.count, model.final_csr.num_landmarks, 2))
    for k in range(model.perturbation.count):
        box = perturb_bbox(working_box, model.perturbation.magnitude, rng)
        run_boxes.append(box)
        stacked[k] = apply_cascade(model.final_csr, work_image, box).points
    merged = Shape(stacked.mean(axis=0))

    result = back_transform_landmarks(merged, pose, model.flip_permutation)
    diagnostics = LocalizeDiagnostics(
        branch=branch, roll=pose.roll, side=pose.side, count=model.perturbation.count,
        detection_box=det_box, working_box=working_box, run_boxes=tuple(run_boxes),
        rough=rough,
    )
    return result, diagnostics
