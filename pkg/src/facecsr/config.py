"""Run configuration as a flat ``key = value`` text file.

Keys are dotted paths into :class:`RunConfig` (for example
``final_features.hog.orientation_bins``).  Values are typed by the field
they address: booleans are ``true``/``false``, tuples are comma-separated,
floats are written with full round-trip precision.  Blank lines and lines
starting with ``#`` are ignored.  Unknown keys, duplicate keys and
malformed values raise a FormatError carrying the line number, so a typo'd
override never silently falls back to a default.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .boxreg import BoxFeatureConfig
from .errors import FormatError
from .features import ContextConfig, FeatureConfig, HogConfig
from .pipeline import PerturbationConfig
from .pose import SEMI_FRONTAL

__all__ = [
    "SynthSettings",
    "PoseSettings",
    "FinalSettings",
    "BoxSettings",
    "AggregationSettings",
    "EvaluationSettings",
    "RunConfig",
    "config_to_text",
    "parse_config_text",
    "save_config",
    "load_config",
]


@dataclass(frozen=True)
class SynthSettings:
    """Geometry of generated data; counts are command-line arguments."""

    image_size: tuple[int, int] = (128, 128)
    rotation_range: tuple[float, float] = (-15.0, 15.0)
    scale_range: tuple[float, float] = (0.9, 1.1)
    translation_range: float = 10.0
    face_scale: float = 0.55
    detection_jitter: float = 0.03
    texture_seed: int = 0


@dataclass(frozen=True)
class PoseSettings:
    enabled: bool = True
    roll_threshold: float = 45.0
    side_invert: bool = False
    stages: int = 2
    samples_per_image: int = 1


@dataclass(frozen=True)
class FinalSettings:
    stages: int = 6
    samples_per_image: int = 1


@dataclass(frozen=True)
class BoxSettings:
    stages: int = 2


@dataclass(frozen=True)
class AggregationSettings:
    """The scalar half of the aggregation setup; refiner models are files."""

    score_threshold: float = 0.85
    min_height_fraction: float = 0.2
    centre_rule: bool = True
    fallback_sources: tuple[str, ...] = ("dlib", "mtcnn")
    regression_source: str = "regression"


@dataclass(frozen=True)
class EvaluationSettings:
    normalizer: str = "interocular"
    subset: str = "all"
    ced_max: float = 0.1
    ced_points: int = 100


def _default_pose_features() -> FeatureConfig:
    # Signed gradient orientations: an unsigned histogram has period 180
    # degrees and cannot tell an upright face from an upside-down one.
    return FeatureConfig(
        patch_size=28,
        scales=(1.0,),
        hog=HogConfig(cells_per_patch=2, orientation_bins=12, signed=True),
        context=ContextConfig(grid_cells=6),
    )


@dataclass(frozen=True)
class RunConfig:
    layout: str = SEMI_FRONTAL
    seed: int = 0
    lambda_scale: float = 1e-3
    synth: SynthSettings = field(default_factory=SynthSettings)
    pose: PoseSettings = field(default_factory=PoseSettings)
    final: FinalSettings = field(default_factory=FinalSettings)
    boxes: BoxSettings = field(default_factory=BoxSettings)
    pose_features: FeatureConfig = field(default_factory=_default_pose_features)
    final_features: FeatureConfig = field(default_factory=FeatureConfig)
    box_features: BoxFeatureConfig = field(default_factory=BoxFeatureConfig)
    aggregation: AggregationSettings = field(default_factory=AggregationSettings)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    evaluation: EvaluationSettings = field(default_factory=EvaluationSettings)


# ---------------------------------------------------------------------------
# emit
# ---------------------------------------------------------------------------

def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, str):
        return value
    raise FormatError(f"cannot format a value of type {type(value).__name__}")


def _emit(obj, prefix: str, lines: list[str]) -> None:
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(value):
            _emit(value, key + ".", lines)
        else:
            lines.append(f"{key} = {_format_value(value)}")


def config_to_text(cfg: RunConfig) -> str:
    lines: list[str] = []
    _emit(cfg, "", lines)
    return "\n".join(lines) + "\n"


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config_to_text(cfg))


# ---------------------------------------------------------------------------
# parse
# ---------------------------------------------------------------------------

def _coerce(text: str, default):
    """Interpret ``text`` with the type of the field's default value."""
    if isinstance(default, bool):
        if text == "true":
            return True
        if text == "false":
            return False
        raise ValueError(f"expected true or false, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        if not text.strip():
            return ()
        element = default[0] if default else 0.0
        return tuple(_coerce(item.strip(), element) for item in text.split(","))
    return text


def _resolve(defaults, dotted: str):
    """Walk the default tree to the leaf named by ``dotted``.

    Returns (segments, default leaf value); raises KeyError on any unknown
    segment or a path that stops at (or runs past) the wrong depth.
    """
    obj = defaults
    segments = dotted.split(".")
    for depth, segment in enumerate(segments):
        if not dataclasses.is_dataclass(obj):
            raise KeyError(dotted)
        names = {f.name for f in dataclasses.fields(obj)}
        if segment not in names:
            raise KeyError(dotted)
        obj = getattr(obj, segment)
        if depth == len(segments) - 1 and dataclasses.is_dataclass(obj):
            raise KeyError(dotted)  # addresses a section, not a value
    return segments, obj


def _construct(default_obj, tree: dict):
    kwargs = {}
    for f in dataclasses.fields(default_obj):
        current = getattr(default_obj, f.name)
        if f.name in tree:
            node = tree[f.name]
            if isinstance(node, dict):
                kwargs[f.name] = _construct(current, node)
            else:
                kwargs[f.name] = node
        else:
            kwargs[f.name] = current
    return type(default_obj)(**kwargs)


def parse_config_text(text: str, path=None) -> RunConfig:
    defaults = RunConfig()
    tree: dict = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError("expected 'key = value'", path=path, line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            segments, default_leaf = _resolve(defaults, key)
        except KeyError:
            raise FormatError(f"unknown key {key!r}", path=path, line=lineno) from None
        if key in seen:
            raise FormatError(f"duplicate key {key!r}", path=path, line=lineno)
        seen.add(key)
        try:
            coerced = _coerce(value, default_leaf)
        except ValueError as err:
            raise FormatError(f"bad value for {key!r}: {err}", path=path, line=lineno) from None
        node = tree
        for segment in segments[:-1]:
            node = node.setdefault(segment, {})
        node[segments[-1]] = coerced
    return _construct(defaults, tree)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), path=str(path))
