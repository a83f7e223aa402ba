"""Command line workflow: data generation, training, localisation, scoring.

A dataset lives in one directory:

    dataset.txt           image ids, one per line, in processing order
    images/<id>.pgm       8-bit grayscale images
    annotations/<id>.pts  landmark ground truth (where available)
    detections.tsv        face detection manifest (optional)

Exit status is 0 on success, 1 for command-line usage errors and 2 for
runtime failures (unreadable files, absent faces, mismatched models).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .aggregation import AggregationConfig, aggregate
from .boxreg import (
    EXTERNAL_BOX,
    WHOLE_IMAGE,
    BoxCascadeModel,
    box_feature_length,
    train_box_cascade,
)
from .config import AggregationSettings, RunConfig, load_config
from .errors import ConfigError, FaceCsrError, FormatError, InvalidModelError
from .evaluation import (
    ErrorRecord,
    auc,
    ced,
    normalized_rmse,
    plot_ced,
    write_ced_csv,
    write_results_csv,
)
from .features import feature_length
from .fileio import (
    read_detection_manifest,
    read_pgm,
    read_pts,
    write_detection_manifest,
    write_pgm,
    write_pts,
)
from .geometry import shape_bbox
from .pipeline import (
    AugmentationSpec,
    PipelineModel,
    TrainingSample,
    build_training_set,
    localize,
)
from .pose import PROFILE, SEMI_FRONTAL, load_permutation
from .regression import CascadeModel, train_cascade
from .serialization import load_model, save_model
from .synthetic import (
    SyntheticFaceSpec,
    face_template_39,
    face_template_68,
    generate_synthetic,
)

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _template(layout: str):
    if layout == SEMI_FRONTAL:
        return face_template_68()
    if layout == PROFILE:
        return face_template_39()
    raise ConfigError(f"unknown layout: {layout!r}")


def _read_ids(data_dir: Path) -> list[str]:
    listing = data_dir / "dataset.txt"
    with open(listing, "r", encoding="utf-8") as fh:
        ids = [line.strip() for line in fh if line.strip()]
    if not ids:
        raise FormatError("dataset listing is empty", path=str(listing))
    return ids


def _load_dataset(data_dir: str, annotated: bool = True):
    """Return (ids, entries, detections); entries are (id, image, shape|None)."""
    root = Path(data_dir)
    ids = _read_ids(root)
    manifest = root / "detections.tsv"
    detections = read_detection_manifest(manifest) if manifest.exists() else {}
    entries = []
    for image_id in ids:
        image = read_pgm(root / "images" / f"{image_id}.pgm")
        shape = read_pts(root / "annotations" / f"{image_id}.pts") if annotated else None
        entries.append((image_id, image, shape))
    return ids, entries, detections


def _aggregation_config(settings: AggregationSettings, sources,
                        refiner: BoxCascadeModel | None = None,
                        fallback: BoxCascadeModel | None = None) -> AggregationConfig:
    return AggregationConfig(
        score_threshold=settings.score_threshold,
        min_height_fraction=settings.min_height_fraction,
        centre_rule=settings.centre_rule,
        refiners={s: refiner for s in sources if s != settings.regression_source},
        fallback_detector=fallback,
        fallback_sources=settings.fallback_sources,
        regression_source=settings.regression_source,
    )


def _all_sources(detections) -> list[str]:
    return sorted({source for by_source in detections.values() for source in by_source})


def _training_records(entries, detections, cfg: RunConfig,
                      detection_boxes: bool) -> list[TrainingSample]:
    """Pair every annotated image with its starting box.

    ``detection_boxes`` selects aggregated detections (matching what the
    rough model sees at run time); otherwise the tight landmark box is used
    (matching the working box handed to the fine model).
    """
    agg_cfg = None
    records = []
    for image_id, image, shape in entries:
        by_source = detections.get(image_id) if detection_boxes else None
        if by_source:
            if agg_cfg is None:
                agg_cfg = _aggregation_config(cfg.aggregation, _all_sources(detections))
            box, _ = aggregate(by_source, image, agg_cfg)
        else:
            box = shape_bbox(shape)
        records.append(TrainingSample(image=image, shape=shape, box=box))
    return records


def _load_shape_model(path) -> CascadeModel:
    model = load_model(path)
    if not isinstance(model, CascadeModel):
        raise InvalidModelError(f"{path} does not hold a landmark cascade")
    return model


def _load_box_model(path) -> BoxCascadeModel:
    model = load_model(path)
    if not isinstance(model, BoxCascadeModel):
        raise InvalidModelError(f"{path} does not hold a box cascade")
    return model


def _maybe_permutation(args, num_points: int):
    if getattr(args, "flip_permutation", None):
        return load_permutation(args.flip_permutation, num_points)
    return None


def _residual_trail(model: CascadeModel) -> str:
    residuals = model.metadata.get("training_residuals", [])
    return " -> ".join(f"{r:.4f}" for r in residuals)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _run_config(args)
    spec = SyntheticFaceSpec(
        template=_template(cfg.layout),
        image_size=cfg.synth.image_size,
        rotation_range=cfg.synth.rotation_range,
        scale_range=cfg.synth.scale_range,
        translation_range=cfg.synth.translation_range,
        face_scale=cfg.synth.face_scale,
        texture_seed=cfg.synth.texture_seed,
        detection_jitter=cfg.synth.detection_jitter,
    )
    samples = generate_synthetic(spec, args.count, cfg.seed)

    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "annotations").mkdir(parents=True, exist_ok=True)
    manifest = {}
    ids = []
    for i, sample in enumerate(samples):
        image_id = f"synth_{i:04d}"
        ids.append(image_id)
        write_pgm(sample.image, out / "images" / f"{image_id}.pgm")
        write_pts(sample.shape, out / "annotations" / f"{image_id}.pts")
        manifest[image_id] = sample.detections_by_source()
    write_detection_manifest(manifest, out / "detections.tsv")
    with open(out / "dataset.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(ids) + "\n")
    print(f"wrote {len(ids)} images ({cfg.layout}, seed {cfg.seed}) to {out}")
    return 0


def _train_shape_command(args, stage: str) -> int:
    cfg = _run_config(args)
    _, entries, detections = _load_dataset(args.data)
    if stage == "pose":
        aug = AugmentationSpec.pose_model(cfg.layout, cfg.pose.samples_per_image)
        features = cfg.pose_features
        num_stages = cfg.pose.stages
        records = _training_records(entries, detections, cfg, detection_boxes=True)
    else:
        aug = AugmentationSpec.final_model(cfg.layout, cfg.final.samples_per_image)
        features = cfg.final_features
        num_stages = cfg.final.stages
        records = _training_records(entries, detections, cfg, detection_boxes=False)

    num_points = records[0].shape.num_points
    training = build_training_set(records, aug, seed=cfg.seed,
                                  flip_permutation=_maybe_permutation(args, num_points),
                                  side_invert=cfg.pose.side_invert)
    lam = cfg.lambda_scale * feature_length(features, num_points)
    logger.info("%s training set: %d samples, lambda %.3f", stage, len(training), lam)
    model = train_cascade([(s.image, s.shape, s.box) for s in training],
                          num_stages=num_stages, cfg=features, lam=lam)
    save_model(model, args.out)
    print(f"trained {model.num_stages}-stage {stage} cascade on {len(training)} samples"
          f" -> {args.out}")
    print(f"  residual: {_residual_trail(model)}")
    return 0


def cmd_train_pose(args) -> int:
    return _train_shape_command(args, "pose")


def cmd_train_final(args) -> int:
    return _train_shape_command(args, "final")


def cmd_train_boxes(args) -> int:
    cfg = _run_config(args)
    _, entries, detections = _load_dataset(args.data)
    samples = []
    for image_id, image, shape in entries:
        gt_box = shape_bbox(shape)
        if args.policy == WHOLE_IMAGE:
            samples.append((image, gt_box))
            continue
        for source, dets in detections.get(image_id, {}).items():
            if source == cfg.aggregation.regression_source:
                continue
            if args.source is not None and source != args.source:
                continue
            for det in dets:
                samples.append((image, gt_box, det.box))

    lam = cfg.lambda_scale * box_feature_length(cfg.box_features)
    model = train_box_cascade(samples, num_stages=cfg.boxes.stages,
                              init_policy=args.policy, cfg=cfg.box_features, lam=lam)
    save_model(model, args.out)
    ious = " -> ".join(f"{v:.4f}" for v in model.metadata["stage_ious"])
    print(f"trained {model.num_stages}-stage {args.policy} box cascade on "
          f"{len(samples)} samples -> {args.out}")
    print(f"  mean IoU: {ious}")
    return 0


def cmd_localize(args) -> int:
    cfg = _run_config(args)
    _, entries, detections = _load_dataset(args.data, annotated=False)
    refiner = _load_box_model(args.box_model) if args.box_model else None
    fallback = _load_box_model(args.fallback_box_model) if args.fallback_box_model else None
    final_csr = _load_shape_model(args.final_model)
    model = PipelineModel(
        layout=cfg.layout,
        pose_csr=_load_shape_model(args.pose_model),
        final_csr=final_csr,
        aggregation=_aggregation_config(cfg.aggregation, _all_sources(detections),
                                        refiner=refiner, fallback=fallback),
        perturbation=cfg.perturbation,
        roll_threshold=cfg.pose.roll_threshold,
        flip_permutation=_maybe_permutation(args, final_csr.num_landmarks),
        side_invert=cfg.pose.side_invert,
    )
    pose_enabled = cfg.pose.enabled and not args.no_pose

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for image_id, image, _ in entries:
        shape, diag = localize(model, image, detections.get(image_id, {}),
                               seed=cfg.seed, pose_enabled=pose_enabled)
        write_pts(shape, out / f"{image_id}.pts")
        rows.append((image_id, diag))
        logger.info("%s: branch=%s roll=%.1f side=%s", image_id, diag.branch,
                    diag.roll, diag.side)

    with open(out / "diagnostics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "branch", "roll", "side", "runs",
                         "det_x", "det_y", "det_w", "det_h",
                         "work_x", "work_y", "work_w", "work_h"])
        for image_id, diag in rows:
            d, w = diag.detection_box, diag.working_box
            writer.writerow([image_id, diag.branch, repr(diag.roll), diag.side,
                             diag.count, repr(d.x), repr(d.y), repr(d.w), repr(d.h),
                             repr(w.x), repr(w.y), repr(w.w), repr(w.h)])
    print(f"localised {len(rows)} images -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _run_config(args)
    data = Path(args.data)
    pred = Path(args.pred)
    records = []
    for image_id in _read_ids(data):
        gt = read_pts(data / "annotations" / f"{image_id}.pts")
        estimate = read_pts(pred / f"{image_id}.pts")
        error = normalized_rmse(estimate, gt, normalizer=cfg.evaluation.normalizer,
                                subset=cfg.evaluation.subset)
        records.append(ErrorRecord(image_id=image_id, subset=cfg.evaluation.subset,
                                   error=error))

    errors = np.array([r.error for r in records])
    top = cfg.evaluation.ced_max
    thresholds = np.linspace(top / cfg.evaluation.ced_points, top,
                             cfg.evaluation.ced_points)
    fractions = ced(errors, thresholds)
    area = auc(errors, top)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(records, out / "errors.csv")
    write_ced_csv(thresholds, fractions, out / "ced.csv")
    plot_ced(thresholds, fractions, out / "ced.svg",
             title=f"{len(records)} images, {cfg.evaluation.normalizer}")
    summary = [
        f"images:       {len(records)}",
        f"subset:       {cfg.evaluation.subset}",
        f"normalizer:   {cfg.evaluation.normalizer}",
        f"mean error:   {errors.mean():.6f}",
        f"median error: {np.median(errors):.6f}",
        f"auc@{top:g}:     {area:.6f}",
        f"failures>{top:g}: {float(np.mean(errors > top)):.4f}",
    ]
    with open(out / "summary.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(summary) + "\n")
    print("\n".join(summary))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="facecsr",
                     description="Face landmark localisation: synthetic data, "
                                 "cascade training, inference and scoring.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log per-step details to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def command(name, handler, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="run configuration file (key = value lines)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.set_defaults(func=handler)
        return p

    p = command("synth", cmd_synth, "generate a labelled synthetic dataset")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--count", type=int, required=True, help="number of images")

    for name, handler, text in (
        ("train-pose", cmd_train_pose,
         "train the rough cascade that drives the pose estimate"),
        ("train-final", cmd_train_final,
         "train the fine cascade applied after pose normalisation"),
    ):
        p = command(name, handler, text)
        p.add_argument("--data", required=True, help="training dataset directory")
        p.add_argument("--out", required=True, help="model file to write")
        p.add_argument("--flip-permutation",
                       help="landmark relabelling file used when mirroring")

    p = command("train-boxes", cmd_train_boxes, "train a bounding-box cascade")
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--policy", choices=(WHOLE_IMAGE, EXTERNAL_BOX),
                   default=WHOLE_IMAGE, help="initial box policy")
    p.add_argument("--source", help="only train on detections from this source")

    p = command("localize", cmd_localize, "predict landmarks for every image")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="prediction directory to create")
    p.add_argument("--pose-model", required=True, help="rough cascade file")
    p.add_argument("--final-model", required=True, help="fine cascade file")
    p.add_argument("--box-model", help="external-box cascade refining detections")
    p.add_argument("--fallback-box-model",
                   help="whole-image cascade used when no detection survives")
    p.add_argument("--flip-permutation",
                   help="landmark relabelling file used when mirroring")
    p.add_argument("--no-pose", action="store_true",
                   help="skip pose normalisation (ablation)")

    p = command("evaluate", cmd_evaluate, "score predictions against ground truth")
    p.add_argument("--data", required=True, help="dataset directory with annotations")
    p.add_argument("--pred", required=True, help="prediction directory")
    p.add_argument("--out", required=True, help="report directory to create")

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FaceCsrError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
