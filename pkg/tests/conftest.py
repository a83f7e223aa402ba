"""Shared benchmark fixtures.

The synthetic benchmark (500 train / 100 test faces, rotation +-15 deg,
scale 0.9-1.1) and the two trained cascades are expensive, so they are
built once per session and only when a test actually asks for them.
"""

import time

import numpy as np
import pytest

from facecsr import (
    SEMI_FRONTAL,
    AggregationConfig,
    AugmentationSpec,
    ContextConfig,
    FeatureConfig,
    HogConfig,
    LbpConfig,
    SyntheticFaceSpec,
    TrainingSample,
    build_training_set,
    generate_synthetic,
    perturb_bbox,
    shape_bbox,
    train_cascade,
)

# the fine cascade reads small landmark patches plus a coarse whole-face
# context; the rough cascade needs signed orientations and a wider support
# to tell an upside-down face from an upright one
FINAL_BENCH_CFG = FeatureConfig(
    patch_size=20, scales=(1.0,),
    hog=HogConfig(cells_per_patch=2, orientation_bins=8),
    lbp=LbpConfig(histogram_bins=59),
    context=ContextConfig(grid_cells=4, resample_size=32),
)
POSE_BENCH_CFG = FeatureConfig(
    patch_size=28, scales=(1.0,),
    hog=HogConfig(cells_per_patch=2, orientation_bins=12, signed=True),
    lbp=LbpConfig(histogram_bins=59),
    context=ContextConfig(grid_cells=6, resample_size=48),
)


@pytest.fixture(scope="session")
def bench():
    """Benchmark data plus a 6-stage fine cascade and a 2-stage rough cascade."""
    spec = SyntheticFaceSpec()
    timings = {}

    t0 = time.perf_counter()
    train = generate_synthetic(spec, 500, seed=100)
    test = generate_synthetic(spec, 100, seed=101)
    timings["generate"] = time.perf_counter() - t0

    # fine model: landmark-tight boxes, mirrored copies, residual rotations.
    # Each expanded sample gets an independently jittered box so the cascade
    # stays accurate under the initialisation noise it sees at run time
    # (rough-landmark boxes, perturbation ensembles).
    records = [TrainingSample(image=s.image, shape=s.shape, box=shape_bbox(s.shape))
               for s in train]
    expanded = build_training_set(records, AugmentationSpec.final_model(SEMI_FRONTAL),
                                  seed=11)
    jitter = np.random.default_rng(13)
    t0 = time.perf_counter()
    final_csr = train_cascade(
        [(s.image, s.shape, perturb_bbox(s.box, 0.06, jitter)) for s in expanded],
        num_stages=6, cfg=FINAL_BENCH_CFG)
    timings["train_final"] = time.perf_counter() - t0

    # rough model: detector boxes, full-circle rotations
    records = [TrainingSample(image=s.image, shape=s.shape, box=s.detections[0].box)
               for s in train]
    expanded = build_training_set(
        records, AugmentationSpec.pose_model(SEMI_FRONTAL, samples_per_image=3),
        seed=12)
    t0 = time.perf_counter()
    pose_csr = train_cascade([(s.image, s.shape, s.box) for s in expanded],
                             num_stages=2, cfg=POSE_BENCH_CFG)
    timings["train_pose"] = time.perf_counter() - t0

    return {
        "spec": spec,
        "train": train,
        "test": test,
        "final_csr": final_csr,
        "pose_csr": pose_csr,
        "aggregation": AggregationConfig(refiners={s: None for s in spec.detection_sources}),
        "timings": timings,
    }
