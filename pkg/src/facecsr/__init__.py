"""Face landmark localisation by coarse-to-fine cascaded shape regression.

The pipeline runs in four stages: face detections are filtered and merged
into one starting box, a rough landmark fit reads off the head pose, the
image is rotated (and possibly mirrored) into a canonical pose, and a fine
cascade run from several perturbed boxes produces the final landmarks,
mapped back into the original image frame.
"""

from .aggregation import (
    AGGREGATED,
    FALLBACK_REFINED,
    FALLBACK_REGRESSION,
    AggregationConfig,
    Detection,
    aggregate,
    filter_detections,
)
from .boxreg import (
    EXTERNAL_BOX,
    WHOLE_IMAGE,
    BoxCascadeModel,
    BoxFeatureConfig,
    apply_box_cascade,
    box_feature_length,
    box_features,
    decode_box_offsets,
    encode_box_offsets,
    iou,
    train_box_cascade,
    whole_image_box,
)
from .config import (
    AggregationSettings,
    BoxSettings,
    EvaluationSettings,
    FinalSettings,
    PoseSettings,
    RunConfig,
    SynthSettings,
    config_to_text,
    load_config,
    parse_config_text,
    save_config,
)
from .errors import (
    ConfigError,
    FaceCsrError,
    FormatError,
    InvalidInputError,
    InvalidModelError,
    NoFaceError,
    RankDeficiencyError,
)
from .evaluation import (
    BBOX_DIAGONAL,
    INTEROCULAR,
    SUBSET_ALL,
    SUBSET_INNER_51,
    ErrorRecord,
    auc,
    ced,
    normalized_rmse,
    plot_ced,
    write_ced_csv,
    write_results_csv,
)
from .features import (
    ContextConfig,
    FeatureConfig,
    HogConfig,
    LbpConfig,
    feature_length,
    hog_descriptor,
    hog_patch,
    lbp_histogram,
    lbp_patch,
    shape_features,
)
from .fileio import (
    read_detection_manifest,
    read_pgm,
    read_pts,
    write_detection_manifest,
    write_pgm,
    write_pts,
)
from .geometry import (
    BoundingBox,
    PlanarTransform,
    Shape,
    align_mean_shape,
    apply_transform,
    horizontal_flip,
    identity,
    mean_shape,
    rotation,
    shape_bbox,
    transform_box,
    translation,
)
from .image import (
    GrayImage,
    apply_transform_image,
    bilinear_sample,
    extract_patch,
    flip_image,
    resample_box,
    rotate_image,
)
from .pipeline import (
    FINAL_MODEL,
    POSE_MODEL,
    AugmentationSpec,
    LocalizeDiagnostics,
    PerturbationConfig,
    PipelineModel,
    TrainingSample,
    build_training_set,
    localize,
    perturb_bbox,
)
from .pose import (
    LEFT,
    NOT_APPLICABLE,
    PROFILE,
    RIGHT,
    SEMI_FRONTAL,
    PoseEstimate,
    apply_permutation,
    back_transform_landmarks,
    estimate_pose,
    flip_shape,
    identity_permutation,
    load_permutation,
    mirror_permutation_68,
    normalize_pose,
    permutation_from_pairs,
    roll_from_landmarks,
    rough_landmarks,
    save_permutation,
    yaw_side,
)
from .regression import (
    CascadeModel,
    WeakRegressor,
    apply_cascade,
    default_regularisation,
    predict_update,
    train_cascade,
    train_weak,
)
from .serialization import (
    export_model_text,
    load_model,
    load_model_text,
    save_model,
)
from .synthetic import (
    SyntheticFaceSpec,
    SyntheticSample,
    face_template_39,
    face_template_68,
    generate_synthetic,
)

__version__ = "0.1.0"
