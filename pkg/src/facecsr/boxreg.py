"""Cascaded regression of face bounding boxes.

A box cascade starts from either the whole image or an externally supplied
box, describes the current box with multi-scale HOG+LBP descriptors of its
resampled content, and predicts a normalised offset (dx/w, dy/h, log-width
ratio, log-height ratio) per stage.  Trained with whole-image starts it acts
as a face detector of last resort; trained from a specific detector's output
boxes it acts as that detector's refiner.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidModelError
from .features import HogConfig, LbpConfig, hog_descriptor, lbp_codes, lbp_histogram
from .geometry import BoundingBox
from .image import GrayImage, resample_box
from .regression import WeakRegressor, default_regularisation, predict_update, train_weak

__all__ = [
    "WHOLE_IMAGE",
    "EXTERNAL_BOX",
    "BoxFeatureConfig",
    "BoxCascadeModel",
    "box_features",
    "box_feature_length",
    "encode_box_offsets",
    "decode_box_offsets",
    "train_box_cascade",
    "apply_box_cascade",
    "whole_image_box",
    "iou",
]

WHOLE_IMAGE = "whole-image"
EXTERNAL_BOX = "external-box"

_MIN_BOX_EXTENT = 1.0  # pixels; decoded boxes never get thinner than this


@dataclass(frozen=True)
class BoxFeatureConfig:
    """Descriptor settings for box content.

    The box is resampled to ``canonical_size`` squared; each entry of
    ``scales`` produces one pyramid level (side = canonical_size * scale)
    described by a HOG and an LBP histogram, concatenated in scale order.
    """

    canonical_size: int = 96
    scales: tuple[float, ...] = (0.5, 1.0)
    hog: HogConfig = field(default_factory=lambda: HogConfig(cells_per_patch=4))
    lbp: LbpConfig = field(default_factory=LbpConfig)

    def __post_init__(self):
        if self.canonical_size < 8:
            raise InvalidInputError(f"canonical_size must be >= 8, got {self.canonical_size}")
        if len(self.scales) == 0 or any(s <= 0 for s in self.scales):
            raise InvalidInputError(f"scales must be non-empty and positive, got {self.scales}")
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))


def box_feature_length(cfg: BoxFeatureConfig) -> int:
    return len(cfg.scales) * (cfg.hog.length + cfg.lbp.length)


def box_features(image: GrayImage, box: BoundingBox, cfg: BoxFeatureConfig) -> np.ndarray:
    """Multi-scale HOG+LBP descriptor of the box content."""
    parts = []
    r = cfg.lbp.radius
    for scale in cfg.scales:
        side = max(8, int(round(cfg.canonical_size * scale)))
        padded = resample_box(image, box, side, side, margin=r)
        patch = padded[r:r + side, r:r + side]
        parts.append(hog_descriptor(patch, cfg.hog.cells_per_patch,
                                    cfg.hog.orientation_bins, cfg.hog.signed))
        parts.append(lbp_histogram(lbp_codes(padded, side, r), cfg.lbp.histogram_bins))
    return np.concatenate(parts)


def encode_box_offsets(target: BoundingBox, current: BoundingBox) -> np.ndarray:
    """Normalised offsets that move ``current`` onto ``target``."""
    return np.array([
        (target.x - current.x) / current.w,
        (target.y - current.y) / current.h,
        np.log(target.w / current.w),
        np.log(target.h / current.h),
    ])


def decode_box_offsets(offsets, current: BoundingBox) -> BoundingBox:
    """Apply normalised offsets to ``current``; extents are kept >= 1 pixel."""
    t = np.asarray(offsets, dtype=np.float64)
    if t.shape != (4,):
        raise InvalidInputError(f"box offsets must have shape (4,), got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise InvalidInputError("box offsets must be finite")
    return BoundingBox(
        x=current.x + t[0] * current.w,
        y=current.y + t[1] * current.h,
        w=max(_MIN_BOX_EXTENT, current.w * np.exp(t[2])),
        h=max(_MIN_BOX_EXTENT, current.h * np.exp(t[3])),
    )


@dataclass(frozen=True, eq=False)
class BoxCascadeModel:
    """Weak regressors over box descriptors, plus the start policy."""

    stages: tuple[WeakRegressor, ...]
    feature_config: BoxFeatureConfig
    init_policy: str
    lam: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        stages = tuple(self.stages)
        if len(stages) < 1:
            raise InvalidModelError("a box cascade needs at least one stage")
        if self.init_policy not in (WHOLE_IMAGE, EXTERNAL_BOX):
            raise InvalidModelError(f"unknown init policy: {self.init_policy!r}")
        expected = box_feature_length(self.feature_config)
        for i, s in enumerate(stages):
            if s.output_dim != 4:
                raise InvalidModelError(f"stage {i} output dim {s.output_dim} != 4")
            if s.feature_dim != expected:
                raise InvalidModelError(
                    f"stage {i} feature dim {s.feature_dim} != configured {expected}"
                )
        if not np.isfinite(self.lam) or self.lam < 0:
            raise InvalidModelError(f"lam must be finite and >= 0, got {self.lam}")
        object.__setattr__(self, "stages", stages)

    @property
    def num_stages(self) -> int:
        return len(self.stages)


def whole_image_box(image: GrayImage) -> BoundingBox:
    return BoundingBox(0.0, 0.0, float(image.width), float(image.height))


def _advance(stage: WeakRegressor, image: GrayImage, box: BoundingBox,
             cfg: BoxFeatureConfig) -> BoundingBox:
    # single shared step so training and inference trajectories agree exactly
    return decode_box_offsets(predict_update(stage, box_features(image, box, cfg)), box)


def train_box_cascade(samples, num_stages: int = 2, init_policy: str = WHOLE_IMAGE,
                      cfg: BoxFeatureConfig | None = None, lam: float | None = None,
                      keep_trajectories: bool = False) -> BoxCascadeModel:
    """Fit a box cascade.

    ``samples`` holds (image, gt_box) pairs for the whole-image policy, or
    (image, gt_box, init_box) triples for the external-box policy.  Model
    metadata records the mean IoU against ground truth at the start and
    after each stage, and optionally every per-sample box trajectory.
    """
    samples = list(samples)
    if num_stages < 1:
        raise InvalidInputError(f"num_stages must be >= 1, got {num_stages}")
    if not samples:
        raise InvalidInputError("training needs at least one sample")
    if cfg is None:
        cfg = BoxFeatureConfig()
    if lam is None:
        lam = default_regularisation(box_feature_length(cfg))

    images, gts, current = [], [], []
    for sample in samples:
        if init_policy == WHOLE_IMAGE:
            img, gt = sample[0], sample[1]
            start = whole_image_box(img)
        elif init_policy == EXTERNAL_BOX:
            if len(sample) != 3:
                raise InvalidInputError(
                    "external-box training samples must be (image, gt_box, init_box)"
                )
            img, gt, start = sample
        else:
            raise InvalidInputError(f"unknown init policy: {init_policy!r}")
        images.append(img)
        gts.append(gt)
        current.append(start)

    trajectories = [[b] for b in current]
    stage_ious = [float(np.mean([iou(c, g) for c, g in zip(current, gts)]))]
    stages = []
    for _ in range(num_stages):
        feats = np.stack([box_features(img, box, cfg) for img, box in zip(images, current)])
        targets = np.stack([encode_box_offsets(gt, box) for gt, box in zip(gts, current)])
        stage = train_weak(feats, targets, lam)
        stages.append(stage)
        current = [decode_box_offsets(predict_update(stage, f), box)
                   for f, box in zip(feats, current)]
        for traj, box in zip(trajectories, current):
            traj.append(box)
        stage_ious.append(float(np.mean([iou(c, g) for c, g in zip(current, gts)])))

    metadata = {"stage_ious": stage_ious}
    if keep_trajectories:
        metadata["trajectories"] = trajectories
    return BoxCascadeModel(stages=tuple(stages), feature_config=cfg,
                           init_policy=init_policy, lam=float(lam), metadata=metadata)


def apply_box_cascade(model: BoxCascadeModel, image: GrayImage,
                      init: BoundingBox | None = None) -> BoundingBox:
    """Run the cascade; ``init`` is required iff the policy is external-box."""
    if model.init_policy == WHOLE_IMAGE:
        if init is not None:
            raise InvalidInputError("whole-image cascade does not take an init box")
        box = whole_image_box(image)
    else:
        if init is None:
            raise InvalidInputError("external-box cascade requires an init box")
        box = init
    for stage in model.stages:
        box = _advance(stage, image, box, model.feature_config)
    return box


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes."""
    ix = max(0.0, min(a.x2, b.x2) - max(a.x, b.x))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0
