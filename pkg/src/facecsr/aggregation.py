"""Combining face detections from several detectors into one box.

Detections from the deep detectors are filtered (low score, implausibly
small, or not containing the image centre), refined by their source's box
cascade, and averaged corner-wise.  When nothing survives, the best raw
detection from the trusted sources is refined instead; when even those are
missing, the regression-based detector supplies the box.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .boxreg import EXTERNAL_BOX, BoxCascadeModel, apply_box_cascade, whole_image_box
from .errors import ConfigError, InvalidInputError, NoFaceError
from .geometry import BoundingBox
from .image import GrayImage

__all__ = [
    "AGGREGATED",
    "FALLBACK_REFINED",
    "FALLBACK_REGRESSION",
    "Detection",
    "AggregationConfig",
    "filter_detections",
    "aggregate",
]

AGGREGATED = "aggregated"
FALLBACK_REFINED = "fallback-refined"
FALLBACK_REGRESSION = "fallback-regression"


@dataclass(frozen=True)
class Detection:
    """One detector output.  ``scoreless`` marks a score imputed as 1.0."""

    box: BoundingBox
    score: float
    source: str
    scoreless: bool = False

    def __post_init__(self):
        if not np.isfinite(self.score) or not 0.0 <= self.score <= 1.0:
            raise InvalidInputError(f"detection score must be in [0, 1], got {self.score}")
        if not self.source:
            raise InvalidInputError("detection source must be a non-empty string")


@dataclass(frozen=True)
class AggregationConfig:
    """Filter thresholds, per-source refiners and fallbacks.

    ``refiners`` maps every deep-detector source in use to its box cascade
    (external-box policy) or to None for no refinement.  Detections tagged
    ``regression_source`` bypass filtering and refinement entirely; they are
    only consulted when everything else is gone.  ``fallback_detector``
    (whole-image policy) is the detector of last resort.
    """

    score_threshold: float = 0.85
    min_height_fraction: float = 0.2
    centre_rule: bool = True
    refiners: Mapping[str, BoxCascadeModel | None] = field(default_factory=dict)
    fallback_detector: BoxCascadeModel | None = None
    fallback_sources: tuple[str, ...] = ("dlib", "mtcnn")
    regression_source: str = "regression"

    def __post_init__(self):
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ConfigError(f"score_threshold must be in [0, 1], got {self.score_threshold}")
        if not 0.0 < self.min_height_fraction < 1.0:
            raise ConfigError(
                f"min_height_fraction must be in (0, 1), got {self.min_height_fraction}"
            )
        for source, model in dict(self.refiners).items():
            if model is not None and model.init_policy != EXTERNAL_BOX:
                raise ConfigError(f"refiner for {source!r} must use the external-box policy")
        if (self.fallback_detector is not None
                and self.fallback_detector.init_policy == EXTERNAL_BOX):
            raise ConfigError("fallback detector must use the whole-image policy")


def filter_detections(detections, image_w: int, image_h: int,
                      cfg: AggregationConfig) -> list[Detection]:
    """Drop implausible detections, preserving order.

    A detection is dropped when its score is below the threshold, its box
    height is below ``min_height_fraction`` of the image height, or (with the
    centre rule on) its box does not contain the image centre (w/2, h/2),
    boundaries included.  Detections from the regression source are never
    dropped.  Applying the filter twice changes nothing.
    """
    if image_w < 1 or image_h < 1:
        raise InvalidInputError(f"image size must be positive, got {image_w}x{image_h}")
    cx, cy = image_w / 2.0, image_h / 2.0
    kept = []
    for det in detections:
        if det.source != cfg.regression_source:
            if det.score < cfg.score_threshold:
                continue
            if det.box.h < cfg.min_height_fraction * image_h:
                continue
            if cfg.centre_rule and not det.box.contains(cx, cy):
                continue
        kept.append(det)
    return kept


def _refine(det: Detection, image: GrayImage, cfg: AggregationConfig) -> BoundingBox:
    if det.source not in cfg.refiners:
        raise ConfigError(f"no refiner configured for detection source {det.source!r}")
    model = cfg.refiners[det.source]
    if model is None:
        return det.box
    return apply_box_cascade(model, image, init=det.box)


def _corner_mean(boxes: list[BoundingBox]) -> BoundingBox:
    corners = np.array([[b.x, b.y, b.x2, b.y2] for b in boxes])
    x1, y1, x2, y2 = corners.mean(axis=0)
    return BoundingBox(float(x1), float(y1), float(x2 - x1), float(y2 - y1))


def aggregate(detections_by_source: Mapping[str, list[Detection]], image: GrayImage,
              cfg: AggregationConfig) -> tuple[BoundingBox, str]:
    """Produce one face box and the tag of the branch that produced it.

    Branches, in order: "aggregated" (corner-wise mean of the filtered and
    refined deep detections), "fallback-refined" (highest-score raw
    detection from the fallback sources, refined), "fallback-regression"
    (the regression detector's box, or the fallback detector run on the
    whole image).  With nothing available a NoFaceError is raised.
    """
    survivors = []
    for source, dets in detections_by_source.items():
        if source == cfg.regression_source:
            continue
        for det in dets:
            if det.source != source:
                raise InvalidInputError(
                    f"detection under key {source!r} is tagged {det.source!r}"
                )
        survivors.extend(filter_detections(dets, image.width, image.height, cfg))

    if survivors:
        refined = [_refine(det, image, cfg) for det in survivors]
        return _corner_mean(refined), AGGREGATED

    best = None
    for source in cfg.fallback_sources:
        for det in detections_by_source.get(source, []):
            if best is None or det.score > best.score:
                best = det
    if best is not None:
        return _refine(best, image, cfg), FALLBACK_REFINED

    regression = detections_by_source.get(cfg.regression_source, [])
    if regression:
        return regression[0].box, FALLBACK_REGRESSION
    if cfg.fallback_detector is not None:
        return apply_box_cascade(cfg.fallback_detector, image), FALLBACK_REGRESSION

    raise NoFaceError("no detections survive and no fallback detector is configured")
