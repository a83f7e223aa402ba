"""Ridge-regularised weak regressors and the cascade built from them.

Each weak regressor is the exact minimiser of

    sum_n || A f_n + e - y_n ||^2  +  lam * ||A||_F^2

with the offset ``e`` left out of the penalty.  A cascade holds M of them;
stage m is fitted to the residual between the ground truth and the running
shape estimate, and inference replays the same update rule, so a training
sample's inference trajectory reproduces its training trajectory exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidModelError, RankDeficiencyError
from .features import FeatureConfig, feature_length, shape_features
from .geometry import BoundingBox, Shape, align_mean_shape, mean_shape
from .image import GrayImage

__all__ = [
    "WeakRegressor",
    "CascadeModel",
    "default_regularisation",
    "train_weak",
    "predict_update",
    "train_cascade",
    "apply_cascade",
]


def default_regularisation(feature_dim: int) -> float:
    """Default ridge strength: 1e-3 times the feature dimensionality."""
    return 1e-3 * feature_dim


@dataclass(frozen=True, eq=False)
class WeakRegressor:
    """One linear stage: predicts ``A @ f + e`` from a feature vector f."""

    A: np.ndarray  # (output_dim, feature_dim)
    e: np.ndarray  # (output_dim,)

    def __post_init__(self):
        a = np.ascontiguousarray(np.asarray(self.A, dtype=np.float64))
        e = np.ascontiguousarray(np.asarray(self.e, dtype=np.float64))
        if a.ndim != 2 or e.ndim != 1 or a.shape[0] != e.shape[0]:
            raise InvalidModelError(
                f"inconsistent regressor arrays: A {a.shape}, e {e.shape}"
            )
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(e))):
            raise InvalidModelError("regressor weights must be finite")
        a.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "e", e)

    @property
    def feature_dim(self) -> int:
        return self.A.shape[1]

    @property
    def output_dim(self) -> int:
        return self.A.shape[0]


def train_weak(features, targets, lam: float) -> WeakRegressor:
    """Fit one weak regressor.

    Parameters
    ----------
    features : (N, F) array
        One row per sample.
    targets : (N, D) array
        Desired outputs, one row per sample.
    lam : float
        Ridge strength on A (the offset is never penalised).

    Notes
    -----
    With N > F the augmented normal equations are solved directly:
    stacking a constant-1 column onto the features, the system is
    ``(G^T G + lam * diag(1..1, 0)) W = G^T Y``.  With F >= N the same
    minimiser is obtained in the dual: centring features and targets,
    ``A^T = Fc^T (Fc Fc^T + lam I)^(-1) Yc`` and ``e = my - A mf``, which
    costs O(N^2 F) instead of O(F^3).  For ``lam == 0`` the dual system is
    never uniquely solvable, so the minimum-norm minimiser is returned
    there; the primal branch raises on rank deficiency instead.
    """
    f = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if f.ndim != 2 or y.ndim != 2 or f.shape[0] != y.shape[0] or f.shape[0] < 1:
        raise InvalidInputError(
            f"need matching non-empty sample rows, got features {f.shape}, targets {y.shape}"
        )
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(y))):
        raise InvalidInputError("features and targets must be finite")
    if not np.isfinite(lam) or lam < 0:
        raise InvalidInputError(f"lam must be finite and >= 0, got {lam}")

    n, dim = f.shape
    if dim + 1 <= n:
        g = np.hstack([f, np.ones((n, 1))])
        gram = g.T @ g
        gram[np.diag_indices(dim)] += lam  # leave the offset row unpenalised
        rhs = g.T @ y
        if lam == 0.0 and np.linalg.matrix_rank(gram) < dim + 1:
            raise RankDeficiencyError(
                "feature matrix is rank deficient; set lam > 0 to regularise"
            )
        try:
            w = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError as err:
            raise RankDeficiencyError(
                f"normal equations are singular ({err}); set lam > 0 to regularise"
            ) from None
        return WeakRegressor(A=w[:dim].T, e=w[dim])

    mf = f.mean(axis=0)
    my = y.mean(axis=0)
    fc = f - mf
    yc = y - my
    kernel = fc @ fc.T
    kernel[np.diag_indices(n)] += lam
    if lam == 0.0:
        alpha = np.linalg.lstsq(kernel, yc, rcond=None)[0]
    else:
        alpha = np.linalg.solve(kernel, yc)
    a = (fc.T @ alpha).T
    return WeakRegressor(A=a, e=my - a @ mf)


def predict_update(stage: WeakRegressor, feature_vec) -> np.ndarray:
    """The stage's update for one feature vector."""
    f = np.asarray(feature_vec, dtype=np.float64)
    if f.ndim != 1 or f.shape[0] != stage.feature_dim:
        raise InvalidInputError(
            f"feature vector length {f.shape} does not match regressor ({stage.feature_dim})"
        )
    return stage.A @ f + stage.e


@dataclass(frozen=True, eq=False)
class CascadeModel:
    """A sequence of weak regressors over shape-indexed features.

    ``metadata`` carries training diagnostics; key ``training_residuals``
    holds the root-mean-square residual norm before training and after each
    stage (length M + 1).
    """

    stages: tuple[WeakRegressor, ...]
    mean: Shape
    feature_config: FeatureConfig
    lam: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        stages = tuple(self.stages)
        if len(stages) < 1:
            raise InvalidModelError("a cascade needs at least one stage")
        num = self.mean.num_points
        expected = feature_length(self.feature_config, num)
        for i, s in enumerate(stages):
            if s.output_dim != 2 * num:
                raise InvalidModelError(
                    f"stage {i} output dim {s.output_dim} != 2 * {num} landmarks"
                )
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

    @property
    def num_landmarks(self) -> int:
        return self.mean.num_points


def _rms_residual(estimates: list[np.ndarray], truths: list[np.ndarray]) -> float:
    sq = [float(np.sum((t - e) ** 2)) for e, t in zip(estimates, truths)]
    return float(np.sqrt(np.mean(sq)))


def train_cascade(samples, num_stages: int, cfg: FeatureConfig,
                  lam: float | None = None) -> CascadeModel:
    """Fit a cascade on (image, ground-truth shape, initial box) samples.

    The running estimate starts as the training mean shape aligned into each
    sample's box; every stage is fitted to the remaining residuals and then
    applied, exactly as at inference time.
    """
    samples = list(samples)
    if num_stages < 1:
        raise InvalidInputError(f"num_stages must be >= 1, got {num_stages}")
    if not samples:
        raise InvalidInputError("training needs at least one sample")
    num = samples[0][1].num_points
    for _, gt, _ in samples:
        if gt.num_points != num:
            raise InvalidInputError("all training shapes must have the same landmark count")
    if lam is None:
        lam = default_regularisation(feature_length(cfg, num))

    mean = mean_shape([gt for _, gt, _ in samples])
    truths = [gt.vector() for _, gt, _ in samples]
    estimates = [align_mean_shape(mean, box).vector() for _, _, box in samples]
    residuals = [_rms_residual(estimates, truths)]

    stages = []
    for _ in range(num_stages):
        feats = np.stack([
            shape_features(img, Shape.from_vector(est), cfg)
            for (img, _, _), est in zip(samples, estimates)
        ])
        deltas = np.stack(truths) - np.stack(estimates)
        stage = train_weak(feats, deltas, lam)
        stages.append(stage)
        estimates = [est + predict_update(stage, f) for est, f in zip(estimates, feats)]
        residuals.append(_rms_residual(estimates, truths))

    return CascadeModel(
        stages=tuple(stages), mean=mean, feature_config=cfg, lam=float(lam),
        metadata={"training_residuals": residuals},
    )


def apply_cascade(model: CascadeModel, image: GrayImage, box: BoundingBox) -> Shape:
    """Run the cascade from the mean shape aligned into ``box``."""
    est = align_mean_shape(model.mean, box).vector()
    for stage in model.stages:
        f = shape_features(image, Shape.from_vector(est), model.feature_config)
        est = est + predict_update(stage, f)
    return Shape.from_vector(est)
