"""Readers and writers for annotation, image and detection files.

All parsers report failures with the file path and 1-based line number.
Writers produce the canonical form their reader accepts, so a write/read
round trip preserves values up to the stated precision.
"""
from __future__ import annotations

import math

import numpy as np

from .aggregation import Detection
from .errors import FormatError, InvalidInputError
from .geometry import BoundingBox, Shape
from .image import GrayImage

__all__ = [
    "read_pts",
    "write_pts",
    "read_pgm",
    "write_pgm",
    "read_detection_manifest",
    "write_detection_manifest",
]


# ---------------------------------------------------------------------------
# .pts landmark files
# ---------------------------------------------------------------------------

def _finite_float(token: str) -> float:
    value = float(token)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {token!r}")
    return value


def read_pts(path) -> Shape:
    """Parse a version-1 landmark file.

    Expected layout: a ``version: 1`` line, an ``n_points: N`` line, ``{``,
    N lines of ``x y``, and ``}``.  Trailing whitespace, CRLF endings and
    blank lines after the closing brace are tolerated; anything else is a
    FormatError carrying the line number.
    """
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    def fail(message, lineno):
        raise FormatError(message, path=path, line=lineno)

    if not lines:
        fail("empty file, expected a version header", 1)
    head = lines[0].strip()
    if not head.startswith("version:"):
        fail(f"expected 'version: 1' header, got {head!r}", 1)
    version = head[len("version:"):].strip()
    if version != "1":
        fail(f"unsupported version {version!r}", 1)

    if len(lines) < 2:
        fail("missing 'n_points' line", 2)
    count_line = lines[1].strip()
    if not count_line.startswith("n_points:"):
        fail(f"expected 'n_points: N', got {count_line!r}", 2)
    try:
        n_points = int(count_line[len("n_points:"):].strip())
    except ValueError:
        fail(f"non-integer point count in {count_line!r}", 2)
    if n_points < 1:
        fail(f"point count must be >= 1, got {n_points}", 2)

    if len(lines) < 3 or lines[2].strip() != "{":
        fail("expected '{' on its own line", 3)

    points = []
    lineno = 3
    for lineno in range(4, 4 + n_points):
        if lineno - 1 >= len(lines):
            fail(f"expected {n_points} point lines, file ends after {len(points)}", lineno)
        text = lines[lineno - 1].strip()
        if text == "}":
            fail(f"expected {n_points} point lines, found only {len(points)}", lineno)
        fields = text.split()
        if len(fields) != 2:
            fail(f"expected 'x y', got {text!r}", lineno)
        try:
            points.append((_finite_float(fields[0]), _finite_float(fields[1])))
        except ValueError:
            fail(f"non-numeric coordinate in {text!r}", lineno)

    closing = 4 + n_points
    if closing - 1 >= len(lines):
        fail("missing closing '}'", closing)
    if lines[closing - 1].strip() != "}":
        fail(f"expected '}}' after {n_points} points, got {lines[closing - 1].strip()!r}",
             closing)
    for extra in range(closing, len(lines)):
        if lines[extra].strip():
            fail(f"unexpected content after '}}': {lines[extra].strip()!r}", extra + 1)
    return Shape(np.array(points))


def write_pts(shape: Shape, path) -> None:
    """Write the canonical form with six decimal places per coordinate."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("version: 1\n")
        fh.write(f"n_points: {shape.num_points}\n")
        fh.write("{\n")
        for x, y in shape.points:
            fh.write(f"{x:.6f} {y:.6f}\n")
        fh.write("}\n")


# ---------------------------------------------------------------------------
# binary 8-bit PGM images
# ---------------------------------------------------------------------------

def read_pgm(path) -> GrayImage:
    """Read a binary (P5) 8-bit PGM; intensities are scaled to [0, 1]."""
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()

    # header tokens may be separated by any whitespace; '#' starts a comment
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated header", path=path)
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after the maxval token

    if tokens[0] != b"P5":
        raise FormatError(f"not a binary PGM (magic {tokens[0]!r})", path=path)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("non-integer dimensions in header", path=path) from None
    if width < 1 or height < 1:
        raise FormatError(f"bad dimensions {width}x{height}", path=path)
    if not 1 <= maxval <= 255:
        raise FormatError(f"only 8-bit images supported, maxval {maxval}", path=path)

    raster = data[pos:pos + width * height]
    if len(raster) != width * height:
        raise FormatError(
            f"expected {width * height} raster bytes, found {len(raster)}", path=path
        )
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(pixels / maxval)


def write_pgm(image: GrayImage, path) -> None:
    """Write a binary (P5) PGM with maxval 255."""
    levels = np.round(image.pixels * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.width} {image.height}\n255\n".encode("ascii"))
        fh.write(levels.tobytes())


# ---------------------------------------------------------------------------
# detection manifests
# ---------------------------------------------------------------------------

_MANIFEST_FIELDS = 7  # image_id, source, score, x, y, w, h


def read_detection_manifest(path) -> dict[str, dict[str, list[Detection]]]:
    """Read a tab-separated detection manifest.

    Each line is ``image_id<TAB>source<TAB>score<TAB>x<TAB>y<TAB>w<TAB>h``.
    A score of ``-`` means the detector emits none; it is read as 1.0 and
    the detection is marked scoreless.  Detections are grouped by image and
    source, preserving file order.  An empty file is an empty mapping.
    """
    path = str(path)
    out: dict[str, dict[str, list[Detection]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != _MANIFEST_FIELDS:
                raise FormatError(
                    f"expected {_MANIFEST_FIELDS} tab-separated fields, got {len(fields)}",
                    path=path, line=lineno,
                )
            image_id, source = fields[0], fields[1]
            if not image_id or not source:
                raise FormatError("empty image id or source", path=path, line=lineno)
            scoreless = fields[2] == "-"
            try:
                score = 1.0 if scoreless else _finite_float(fields[2])
                x, y, w, h = (_finite_float(f) for f in fields[3:7])
            except ValueError as err:
                raise FormatError(str(err), path=path, line=lineno) from None
            if not 0.0 <= score <= 1.0:
                raise FormatError(f"score {score} outside [0, 1]", path=path, line=lineno)
            if w <= 0 or h <= 0:
                raise FormatError(f"non-positive box extent {w}x{h}", path=path, line=lineno)
            det = Detection(box=BoundingBox(x, y, w, h), score=score,
                            source=source, scoreless=scoreless)
            out.setdefault(image_id, {}).setdefault(source, []).append(det)
    return out


def write_detection_manifest(detections_by_image, path) -> None:
    """Write the manifest form read by :func:`read_detection_manifest`.

    ``detections_by_image`` maps image id -> source -> list of detections.
    Floats are written with full round-trip precision; scoreless detections
    are written with a ``-`` score.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for image_id, by_source in detections_by_image.items():
            for source, dets in by_source.items():
                for det in dets:
                    if det.source != source:
                        raise InvalidInputError(
                            f"detection under key {source!r} is tagged {det.source!r}"
                        )
                    score = "-" if det.scoreless else repr(float(det.score))
                    box = det.box
                    fh.write("\t".join([
                        image_id, source, score,
                        repr(float(box.x)), repr(float(box.y)),
                        repr(float(box.w)), repr(float(box.h)),
                    ]) + "\n")
