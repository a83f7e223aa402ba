"""Normalised localisation errors, cumulative error curves and their area.

The error of a prediction is the root mean square point-to-point distance to
the ground truth, divided by a per-face normaliser: the outer-eye-corner
distance for the 68-point markup, the ground-truth box diagonal (useful for
profiles, where both eyes may be hidden), or any custom landmark pair.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import Shape, shape_bbox

__all__ = [
    "INTEROCULAR",
    "BBOX_DIAGONAL",
    "SUBSET_ALL",
    "SUBSET_INNER_51",
    "ErrorRecord",
    "normalized_rmse",
    "ced",
    "auc",
    "write_results_csv",
    "write_ced_csv",
    "plot_ced",
]

INTEROCULAR = "interocular"
BBOX_DIAGONAL = "bbox-diagonal"
SUBSET_ALL = "all"
SUBSET_INNER_51 = "inner-51"

_LEFT_OUTER_EYE = 36   # 0-based index of 1-based landmark 37
_RIGHT_OUTER_EYE = 45  # 0-based index of 1-based landmark 46
_CONTOUR_POINTS = 17   # leading contour points dropped by the inner-51 subset


@dataclass(frozen=True)
class ErrorRecord:
    """One per-image evaluation result."""

    image_id: str
    subset: str
    error: float


def _normaliser(gt: Shape, normalizer) -> float:
    if normalizer == INTEROCULAR:
        if gt.num_points != 68:
            raise InvalidInputError(
                f"interocular normaliser needs the 68-point markup, got {gt.num_points}"
            )
        pair = (_LEFT_OUTER_EYE, _RIGHT_OUTER_EYE)
    elif normalizer == BBOX_DIAGONAL:
        return shape_bbox(gt).diagonal
    elif (isinstance(normalizer, tuple) and len(normalizer) == 2
          and all(isinstance(i, int) for i in normalizer)):
        i, j = normalizer
        if not (1 <= i <= gt.num_points and 1 <= j <= gt.num_points):
            raise InvalidInputError(f"normaliser pair {normalizer} outside 1..{gt.num_points}")
        pair = (i - 1, j - 1)
    else:
        raise InvalidInputError(f"unknown normaliser: {normalizer!r}")
    dist = float(np.linalg.norm(gt.points[pair[0]] - gt.points[pair[1]]))
    return dist


def normalized_rmse(pred: Shape, gt: Shape, normalizer=INTEROCULAR,
                    subset: str = SUBSET_ALL) -> float:
    """Root mean square point distance, divided by the face normaliser.

    ``subset`` "inner-51" drops the 17 contour points of the 68-point markup
    before averaging; the normaliser is always measured on the full ground
    truth.  A zero normaliser distance is an error.
    """
    if pred.num_points != gt.num_points:
        raise InvalidInputError(
            f"prediction has {pred.num_points} points, ground truth {gt.num_points}"
        )
    norm = _normaliser(gt, normalizer)
    if norm == 0.0:
        raise InvalidInputError("normaliser distance is zero")
    if subset == SUBSET_ALL:
        p, g = pred.points, gt.points
    elif subset == SUBSET_INNER_51:
        if gt.num_points != 68:
            raise InvalidInputError("inner-51 subset needs the 68-point markup")
        p, g = pred.points[_CONTOUR_POINTS:], gt.points[_CONTOUR_POINTS:]
    else:
        raise InvalidInputError(f"unknown subset: {subset!r}")
    return float(np.sqrt(np.mean(np.sum((p - g) ** 2, axis=1))) / norm)


def _check_errors(errors) -> np.ndarray:
    err = np.asarray(errors, dtype=np.float64)
    if err.ndim != 1 or err.size == 0:
        raise InvalidInputError("need a non-empty 1-D array of errors")
    if not np.all(np.isfinite(err)) or np.any(err < 0):
        raise InvalidInputError("errors must be finite and non-negative")
    return err


def ced(errors, thresholds) -> np.ndarray:
    """Fraction of errors at or below each threshold.

    Thresholds must be positive and strictly ascending.  The output is
    non-decreasing in [0, 1] by construction.
    """
    err = _check_errors(errors)
    thr = np.asarray(thresholds, dtype=np.float64)
    if thr.ndim != 1 or thr.size == 0:
        raise InvalidInputError("need a non-empty 1-D array of thresholds")
    if not np.all(np.isfinite(thr)) or thr[0] <= 0 or np.any(np.diff(thr) <= 0):
        raise InvalidInputError("thresholds must be positive and strictly ascending")
    return (err[None, :] <= thr[:, None]).mean(axis=1)


def auc(errors, max_threshold: float) -> float:
    """Area under the cumulative error curve over [0, max_threshold], normalised.

    Computed in closed form as the exact area under the empirical step
    curve: sum over samples of (max_threshold - error, floored at 0),
    divided by n * max_threshold.  Always in [0, 1]; 1 iff every error is 0.
    """
    err = _check_errors(errors)
    if not math.isfinite(max_threshold) or max_threshold <= 0:
        raise InvalidInputError(f"max_threshold must be positive, got {max_threshold}")
    return float(np.mean(np.maximum(0.0, max_threshold - err)) / max_threshold)


def write_results_csv(records, path) -> None:
    """Write per-image errors as CSV with header image_id,subset,error."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "subset", "error"])
        for rec in records:
            writer.writerow([rec.image_id, rec.subset, repr(float(rec.error))])


def write_ced_csv(thresholds, fractions, path) -> None:
    """Write the curve as CSV with header threshold,fraction."""
    thresholds = np.asarray(thresholds)
    fractions = np.asarray(fractions)
    if thresholds.shape != fractions.shape:
        raise InvalidInputError("thresholds and fractions must have matching length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fraction"])
        for t, f in zip(thresholds, fractions):
            writer.writerow([repr(float(t)), repr(float(f))])


def plot_ced(thresholds, fractions, path, title: str | None = None) -> None:
    """Render the curve as a vector-graphics (SVG) file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(thresholds, fractions, drawstyle="steps-post")
    ax.set_xlabel("normalised error threshold")
    ax.set_ylabel("fraction of images")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
