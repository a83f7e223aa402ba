"""Binary and textual persistence of cascade models.

The binary container is self-describing: a 4-byte magic ("CSR1" for shape
cascades, "BOX1" for box cascades), a little-endian uint32 format version,
a uint32 JSON header length, the JSON header (landmark count, stage count,
feature dimensionality, regularisation, feature configuration, metadata and
the array directory), then the arrays as row-major little-endian float64.
The textual export is the same header with arrays as nested JSON lists;
floats survive both directions exactly.
"""
from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from .boxreg import BoxCascadeModel, BoxFeatureConfig
from .errors import FormatError
from .features import ContextConfig, FeatureConfig, HogConfig, LbpConfig
from .geometry import Shape
from .regression import CascadeModel, WeakRegressor

__all__ = [
    "SHAPE_MAGIC",
    "BOX_MAGIC",
    "save_model",
    "load_model",
    "export_model_text",
    "load_model_text",
]

SHAPE_MAGIC = b"CSR1"
BOX_MAGIC = b"BOX1"
_FORMAT_VERSION = 1


def _feature_config_to_dict(cfg) -> dict:
    out = dataclasses.asdict(cfg)
    for key, value in out.items():
        if isinstance(value, tuple):
            out[key] = list(value)
    return out


def _hog_from_dict(d: dict) -> HogConfig:
    return HogConfig(cells_per_patch=d["cells_per_patch"],
                     orientation_bins=d["orientation_bins"], signed=d["signed"])


def _lbp_from_dict(d: dict) -> LbpConfig:
    return LbpConfig(radius=d["radius"], histogram_bins=d["histogram_bins"])


def _shape_feature_config_from_dict(d: dict) -> FeatureConfig:
    return FeatureConfig(
        patch_size=d["patch_size"],
        scales=tuple(d["scales"]),
        hog=_hog_from_dict(d["hog"]),
        lbp=_lbp_from_dict(d["lbp"]),
        context=ContextConfig(**d["context"]),
        include_bias=d["include_bias"],
        scale_with_box=d["scale_with_box"],
        box_reference=d["box_reference"],
    )


def _box_feature_config_from_dict(d: dict) -> BoxFeatureConfig:
    return BoxFeatureConfig(
        canonical_size=d["canonical_size"],
        scales=tuple(d["scales"]),
        hog=_hog_from_dict(d["hog"]),
        lbp=_lbp_from_dict(d["lbp"]),
    )


def _json_safe_metadata(metadata: dict) -> dict:
    out = {}
    for key, value in metadata.items():
        try:
            json.dumps(value)
        except (TypeError, ValueError):
            continue  # in-memory diagnostics (e.g. box trajectories) stay in memory
        out[key] = value
    return out


def _describe(model) -> tuple[bytes, dict, list[np.ndarray]]:
    arrays: list[tuple[str, np.ndarray]] = []
    if isinstance(model, CascadeModel):
        magic = SHAPE_MAGIC
        header = {
            "kind": "shape-cascade",
            "num_landmarks": model.num_landmarks,
            "num_stages": model.num_stages,
            "feature_dim": model.stages[0].feature_dim,
            "lambda": model.lam,
            "feature_config": _feature_config_to_dict(model.feature_config),
            "metadata": _json_safe_metadata(model.metadata),
        }
        arrays.append(("mean", model.mean.points))
    elif isinstance(model, BoxCascadeModel):
        magic = BOX_MAGIC
        header = {
            "kind": "box-cascade",
            "num_stages": model.num_stages,
            "feature_dim": model.stages[0].feature_dim,
            "init_policy": model.init_policy,
            "lambda": model.lam,
            "feature_config": _feature_config_to_dict(model.feature_config),
            "metadata": _json_safe_metadata(model.metadata),
        }
    else:
        raise FormatError(f"cannot serialise object of type {type(model).__name__}")
    for i, stage in enumerate(model.stages):
        arrays.append((f"stage_{i}_A", stage.A))
        arrays.append((f"stage_{i}_e", stage.e))
    header["arrays"] = [[name, list(arr.shape)] for name, arr in arrays]
    return magic, header, [arr for _, arr in arrays]


def _assemble(magic: bytes, header: dict, arrays: list[np.ndarray], path: str):
    def fail(message):
        raise FormatError(message, path=path)

    try:
        num_stages = header["num_stages"]
        stage_arrays = {name: arr for (name, _), arr in zip(header["arrays"], arrays)}
        stages = tuple(
            WeakRegressor(A=stage_arrays[f"stage_{i}_A"], e=stage_arrays[f"stage_{i}_e"])
            for i in range(num_stages)
        )
        if magic == SHAPE_MAGIC:
            if header.get("kind") != "shape-cascade":
                fail(f"magic/kind mismatch: {header.get('kind')!r}")
            return CascadeModel(
                stages=stages,
                mean=Shape(stage_arrays["mean"]),
                feature_config=_shape_feature_config_from_dict(header["feature_config"]),
                lam=header["lambda"],
                metadata=dict(header.get("metadata", {})),
            )
        if header.get("kind") != "box-cascade":
            fail(f"magic/kind mismatch: {header.get('kind')!r}")
        return BoxCascadeModel(
            stages=stages,
            feature_config=_box_feature_config_from_dict(header["feature_config"]),
            init_policy=header["init_policy"],
            lam=header["lambda"],
            metadata=dict(header.get("metadata", {})),
        )
    except KeyError as err:
        fail(f"header is missing field {err}")


def save_model(model, path) -> None:
    """Write a cascade (shape or box) to the binary container format."""
    magic, header, arrays = _describe(model)
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", _FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path):
    """Read a binary container; returns a CascadeModel or BoxCascadeModel."""
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()

    def fail(message):
        raise FormatError(message, path=path)

    if len(data) < 12:
        fail("file too short for a model container")
    magic = data[:4]
    if magic not in (SHAPE_MAGIC, BOX_MAGIC):
        fail(f"unknown magic {magic!r}")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != _FORMAT_VERSION:
        fail(f"unsupported container version {version}")
    if len(data) < 12 + header_len:
        fail("truncated header")
    try:
        header = json.loads(data[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        fail(f"corrupt header: {err}")

    offset = 12 + header_len
    arrays = []
    for name, shape in header.get("arrays", []):
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * 8
        if offset + nbytes > len(data):
            fail(f"truncated array {name!r}")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        arrays.append(arr.reshape(shape).astype(np.float64))
        offset += nbytes
    if offset != len(data):
        fail(f"{len(data) - offset} trailing bytes after the last array")
    return _assemble(magic, header, arrays, path)


def export_model_text(model, path) -> None:
    """Write a lossless JSON export (debugging aid; floats round-trip exactly)."""
    magic, header, arrays = _describe(model)
    doc = dict(header)
    doc["magic"] = magic.decode("ascii")
    doc["version"] = _FORMAT_VERSION
    doc["arrays"] = {name: arr.tolist() for (name, _), arr in zip(header["arrays"], arrays)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model_text(path):
    """Read the JSON export back into a model."""
    path = str(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise FormatError(f"corrupt JSON export: {err}", path=path) from None
    try:
        magic = doc["magic"].encode("ascii")
    except KeyError:
        raise FormatError("missing magic field", path=path) from None
    if magic not in (SHAPE_MAGIC, BOX_MAGIC):
        raise FormatError(f"unknown magic {doc.get('magic')!r}", path=path)
    if doc.get("version") != _FORMAT_VERSION:
        raise FormatError(f"unsupported container version {doc.get('version')}", path=path)
    names = list(doc["arrays"])
    arrays = [np.asarray(doc["arrays"][name], dtype=np.float64) for name in names]
    header = dict(doc)
    header["arrays"] = [[name, list(arr.shape)] for name, arr in zip(names, arrays)]
    return _assemble(magic, header, arrays, path)
