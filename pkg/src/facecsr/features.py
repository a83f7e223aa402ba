"""Shape-indexed appearance descriptors: HOG and LBP patches plus context.

The feature vector for a shape is the concatenation, per landmark in index
order and per scale in config order, of a gradient-orientation histogram
(HOG) followed by a local-binary-pattern histogram (LBP), then one dense
HOG over the patch enclosing all landmarks, then an optional constant 1.
Its length depends only on the configuration and landmark count, never on
the image.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidInputError
from .geometry import Shape, shape_bbox
from .image import GrayImage, extract_patch, resample_box

__all__ = [
    "HogConfig",
    "LbpConfig",
    "ContextConfig",
    "FeatureConfig",
    "hog_descriptor",
    "hog_patch",
    "lbp_codes",
    "lbp_histogram",
    "lbp_patch",
    "shape_features",
    "feature_length",
]

UNIFORM_LBP_BINS = 59  # 58 uniform 8-bit patterns + 1 catch-all


@dataclass(frozen=True)
class HogConfig:
    """Gradient-orientation histogram settings.

    ``cells_per_patch`` is the cell grid side (the patch is split into
    cells_per_patch**2 cells).  Unsigned orientations fold angles modulo
    180 degrees; ``signed`` keeps the full 360-degree range, which
    distinguishes a pattern from its contrast reversal.
    """

    cells_per_patch: int = 2
    orientation_bins: int = 9
    signed: bool = False

    def __post_init__(self):
        if self.cells_per_patch < 1:
            raise ConfigError(f"cells_per_patch must be >= 1, got {self.cells_per_patch}")
        if self.orientation_bins < 2:
            raise ConfigError(f"orientation_bins must be >= 2, got {self.orientation_bins}")

    @property
    def length(self) -> int:
        return self.cells_per_patch ** 2 * self.orientation_bins


@dataclass(frozen=True)
class LbpConfig:
    """8-neighbour local binary pattern settings.

    ``histogram_bins`` is 256 for raw codes or 59 for the uniform-pattern
    reduction.  ``radius`` is the neighbour offset in pixels.
    """

    radius: int = 1
    histogram_bins: int = 256

    def __post_init__(self):
        if self.radius < 1:
            raise ConfigError(f"lbp radius must be >= 1, got {self.radius}")
        if self.histogram_bins not in (256, UNIFORM_LBP_BINS):
            raise ConfigError(
                f"histogram_bins must be 256 or {UNIFORM_LBP_BINS}, got {self.histogram_bins}"
            )

    @property
    def length(self) -> int:
        return self.histogram_bins


@dataclass(frozen=True)
class ContextConfig:
    """Dense HOG over the box enclosing all landmarks.

    The box content is resampled to ``resample_size`` squared, then a HOG
    with ``grid_cells`` x ``grid_cells`` cells is computed.  ``grid_cells``
    of 0 disables the context part.
    """

    grid_cells: int = 4
    resample_size: int = 64

    def __post_init__(self):
        if self.grid_cells < 0:
            raise ConfigError(f"grid_cells must be >= 0, got {self.grid_cells}")
        if self.grid_cells > 0 and self.resample_size < 2 * self.grid_cells:
            raise ConfigError(
                f"resample_size {self.resample_size} too small for {self.grid_cells} cells"
            )


@dataclass(frozen=True)
class FeatureConfig:
    """Full shape-feature settings.

    ``patch_size`` is the landmark patch side in pixels at scale 1; each
    entry of ``scales`` multiplies it.  With ``scale_with_box`` the side
    additionally scales with sqrt(box area) / ``box_reference`` of the
    current shape's tight box, keeping the descriptor length fixed while
    adapting the support to face size.
    """

    patch_size: int = 32
    scales: tuple[float, ...] = (0.5, 1.0)
    hog: HogConfig = field(default_factory=HogConfig)
    lbp: LbpConfig = field(default_factory=LbpConfig)
    context: ContextConfig = field(default_factory=ContextConfig)
    include_bias: bool = False
    scale_with_box: bool = False
    box_reference: float = 100.0

    def __post_init__(self):
        if self.patch_size < 4:
            raise ConfigError(f"patch_size must be >= 4, got {self.patch_size}")
        if len(self.scales) == 0 or any(s <= 0 for s in self.scales):
            raise ConfigError(f"scales must be non-empty and positive, got {self.scales}")
        if self.box_reference <= 0:
            raise ConfigError(f"box_reference must be positive, got {self.box_reference}")
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))


# ---------------------------------------------------------------------------
# HOG
# ---------------------------------------------------------------------------

def hog_descriptor(patch: np.ndarray, cells: int, bins: int, signed: bool = False) -> np.ndarray:
    """Cellwise orientation histogram of a raw patch, each cell L2-normalised.

    Gradients are central differences (one-sided at the patch border).  Each
    pixel votes its gradient magnitude into the bin holding its orientation;
    a cell of zero gradient stays the zero vector.  Cell order is row-major,
    bins contiguous per cell.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape[0] < 2 or patch.shape[1] < 2:
        raise InvalidInputError(f"patch too small for gradients: {patch.shape}")
    gy, gx = np.gradient(patch)
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)
    period = 2.0 * np.pi if signed else np.pi
    ang = np.mod(ang, period)
    idx = np.floor(ang / period * bins).astype(np.int64) % bins

    side_y, side_x = patch.shape
    out = np.zeros(cells * cells * bins)
    ybounds = [side_y * c // cells for c in range(cells + 1)]
    xbounds = [side_x * c // cells for c in range(cells + 1)]
    for cy in range(cells):
        for cx in range(cells):
            sl = (slice(ybounds[cy], ybounds[cy + 1]), slice(xbounds[cx], xbounds[cx + 1]))
            hist = np.bincount(idx[sl].ravel(), weights=mag[sl].ravel(), minlength=bins)
            norm = np.linalg.norm(hist)
            if norm > 0:
                hist = hist / norm
            out[(cy * cells + cx) * bins:(cy * cells + cx + 1) * bins] = hist
    return out


def hog_patch(image: GrayImage, centre: tuple[float, float], side: int,
              cfg: HogConfig) -> np.ndarray:
    """HOG of the ``side`` x ``side`` patch centred at ``centre``."""
    if side < 4:
        raise InvalidInputError(f"hog patch side must be >= 4, got {side}")
    patch = extract_patch(image, centre, side)
    return hog_descriptor(patch, cfg.cells_per_patch, cfg.orientation_bins, cfg.signed)


# ---------------------------------------------------------------------------
# LBP
# ---------------------------------------------------------------------------

# neighbour offsets for bit k = 0..7, clockwise from the upper-left
_LBP_OFFSETS = ((-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0))


def _uniform_lut() -> np.ndarray:
    lut = np.full(256, UNIFORM_LBP_BINS - 1, dtype=np.int64)
    nxt = 0
    for code in range(256):
        bits = [(code >> k) & 1 for k in range(8)]
        transitions = sum(bits[k] != bits[(k + 1) % 8] for k in range(8))
        if transitions <= 2:
            lut[code] = nxt
            nxt += 1
    assert nxt == UNIFORM_LBP_BINS - 1
    return lut


_UNIFORM_LUT = _uniform_lut()


def lbp_codes(padded: np.ndarray, side: int, radius: int) -> np.ndarray:
    """8-neighbour codes for the central ``side`` x ``side`` pixels.

    ``padded`` must carry a ``radius``-wide margin around those pixels.  Bit
    k is set when the neighbour at ``radius`` times offset k is strictly
    greater than the centre pixel.
    """
    r = radius
    centre = padded[r:r + side, r:r + side]
    codes = np.zeros((side, side), dtype=np.int64)
    for k, (dx, dy) in enumerate(_LBP_OFFSETS):
        neigh = padded[r + dy * r:r + dy * r + side, r + dx * r:r + dx * r + side]
        codes |= (neigh > centre).astype(np.int64) << k
    return codes


def lbp_histogram(codes: np.ndarray, bins: int) -> np.ndarray:
    """L1-normalised histogram of LBP codes (raw 256 or uniform 59 bins)."""
    if bins == UNIFORM_LBP_BINS:
        codes = _UNIFORM_LUT[codes]
    hist = np.bincount(codes.ravel(), minlength=bins).astype(np.float64)
    return hist / codes.size


def lbp_patch(image: GrayImage, centre: tuple[float, float], side: int,
              cfg: LbpConfig) -> np.ndarray:
    """LBP histogram of the ``side`` x ``side`` patch centred at ``centre``.

    Neighbours of border pixels are sampled from the image itself (the
    extracted patch carries a margin), so the histogram does not depend on
    where the patch was cropped.
    """
    if side < 1:
        raise InvalidInputError(f"lbp patch side must be >= 1, got {side}")
    padded = extract_patch(image, centre, side, margin=cfg.radius)
    codes = lbp_codes(padded, side, cfg.radius)
    return lbp_histogram(codes, cfg.histogram_bins)


# ---------------------------------------------------------------------------
# shape features
# ---------------------------------------------------------------------------

def _patch_sides(cfg: FeatureConfig, box_w: float, box_h: float) -> list[int]:
    base = float(cfg.patch_size)
    if cfg.scale_with_box:
        base *= np.sqrt(box_w * box_h) / cfg.box_reference
    return [max(4, int(round(base * s))) for s in cfg.scales]


def shape_features(image: GrayImage, shape: Shape, cfg: FeatureConfig) -> np.ndarray:
    """Concatenated HOG+LBP descriptors indexed by the landmark positions."""
    box = shape_bbox(shape)
    sides = _patch_sides(cfg, box.w, box.h)
    parts = []
    for point in shape.points:
        centre = (point[0], point[1])
        for side in sides:
            parts.append(hog_patch(image, centre, side, cfg.hog))
            parts.append(lbp_patch(image, centre, side, cfg.lbp))
    if cfg.context.grid_cells > 0:
        n = cfg.context.resample_size
        patch = resample_box(image, box, n, n)
        parts.append(hog_descriptor(patch, cfg.context.grid_cells,
                                    cfg.hog.orientation_bins, cfg.hog.signed))
    if cfg.include_bias:
        parts.append(np.ones(1))
    return np.concatenate(parts)


def feature_length(cfg: FeatureConfig, num_landmarks: int) -> int:
    """Length of :func:`shape_features` output; needs no image."""
    if num_landmarks < 1:
        raise InvalidInputError(f"num_landmarks must be >= 1, got {num_landmarks}")
    per_scale = cfg.hog.length + cfg.lbp.length
    total = num_landmarks * len(cfg.scales) * per_scale
    if cfg.context.grid_cells > 0:
        total += cfg.context.grid_cells ** 2 * cfg.hog.orientation_bins
    if cfg.include_bias:
        total += 1
    return total
