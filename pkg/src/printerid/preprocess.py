"""Two-channel letter patch construction.

A printed letter is decomposed into flat / edge / background regions by
mean-relative intensity thresholds, each region is replaced by its
median to form a three-level ideal letter, and the difference between
ideal and observed letter is the printer noise residual. Native letter
and residual are then normalized to a fixed square patch and fused as
a two-channel array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputShapeError
from .glyphs import GlyphImage

FLAT, EDGE, BACKGROUND = 0, 1, 2


@dataclass(frozen=True)
class ResidualParams:
    """Region thresholds relative to the glyph mean: flat up to alpha*mu,
    edge up to beta*mu, background above. The reference values were never
    published; these defaults are this artifact's own choice and are
    echoed into every run's metadata."""

    alpha: float = 0.6
    beta: float = 1.2

    def __post_init__(self):
        if not (0 < self.alpha < self.beta):
            raise ValueError(f"require 0 < alpha < beta, got alpha={self.alpha}, beta={self.beta}")


@dataclass
class RegionMask:
    """Per-pixel region labels plus the statistics they derive from."""

    labels: np.ndarray  # int8 array of FLAT/EDGE/BACKGROUND
    mu: float
    max_intensity: float


@dataclass
class PatchMeta:
    source_id: str
    bbox: tuple[int, int, int, int]


@dataclass
class TwoChannelPatch:
    """P x P x 2 float32 network input.

    Channel 0 is the native letter rescaled to [0, 1]; channel 1 is the
    signed noise residual rescaled by 1/255 into [-1, 1]. Padding pixels
    are exactly zero in both channels.
    """

    data: np.ndarray
    label: int
    meta: PatchMeta


def segment_regions(glyph: GlyphImage, params: ResidualParams) -> RegionMask:
    """Label each pixel FLAT [0, a*mu], EDGE (a*mu, b*mu], or BACKGROUND."""
    pix = glyph.pixels.astype(np.float64)
    mu = float(pix.mean())
    labels = np.full(pix.shape, BACKGROUND, dtype=np.int8)
    labels[pix <= params.beta * mu] = EDGE
    labels[pix <= params.alpha * mu] = FLAT
    return RegionMask(labels=labels, mu=mu, max_intensity=float(pix.max()))


def ideal_image(glyph: GlyphImage, mask: RegionMask) -> np.ndarray:
    """Three-level ideal letter: every pixel becomes its region's median.

    Median of an even-count region is the lower of the two middle values,
    which keeps each level inside the glyph's actual value set.
    """
    pix = glyph.pixels.astype(np.float64)
    if mask.labels.shape != pix.shape:
        raise InputShapeError("mask was not derived from this glyph")
    ideal = np.empty_like(pix)
    for region in (FLAT, EDGE, BACKGROUND):
        sel = mask.labels == region
        if not sel.any():
            continue
        vals = np.sort(pix[sel], kind="stable")
        ideal[sel] = vals[(len(vals) - 1) // 2]
    return ideal


def noise_residual(glyph: GlyphImage, ideal: np.ndarray) -> np.ndarray:
    """Signed residual ideal - observed, in [-255, 255]."""
    if ideal.shape != glyph.pixels.shape:
        raise InputShapeError(f"ideal image shape {ideal.shape} != glyph shape {glyph.pixels.shape}")
    return np.asarray(ideal, dtype=np.float64) - glyph.pixels.astype(np.float64)


def normalize_patch(img: np.ndarray, patch_size: int) -> np.ndarray:
    """Center-crop / zero-pad each dimension independently to patch_size.

    Odd excess drops the extra row/col from the bottom/right; odd deficit
    puts the extra zero at the bottom/right. The rule is fixed so patches
    are bit-reproducible.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise InputShapeError(f"expected nonempty 2-D image, got shape {img.shape}")
    if patch_size < 1:
        raise InputShapeError(f"patch size must be >= 1, got {patch_size}")
    out = np.zeros((patch_size, patch_size), dtype=np.float64)
    spans = []
    for dim in img.shape:
        if dim > patch_size:
            lo = (dim - patch_size) // 2
            spans.append((lo, lo + patch_size, 0, patch_size))
        else:
            lo = (patch_size - dim) // 2
            spans.append((0, dim, lo, lo + dim))
    (sr0, sr1, dr0, dr1), (sc0, sc1, dc0, dc1) = spans
    out[dr0:dr1, dc0:dc1] = img[sr0:sr1, sc0:sc1]
    return out


def assemble_patch(native: np.ndarray, residual: np.ndarray, label: int, meta: PatchMeta) -> TwoChannelPatch:
    """Fuse normalized native and residual planes into one 2-channel patch."""
    native = np.asarray(native, dtype=np.float64)
    residual = np.asarray(residual, dtype=np.float64)
    if native.shape != residual.shape or native.ndim != 2 or native.shape[0] != native.shape[1]:
        raise InputShapeError(f"native {native.shape} and residual {residual.shape} must be equal square shapes")
    data = np.stack([native / 255.0, residual / 255.0], axis=-1).astype(np.float32)
    return TwoChannelPatch(data=data, label=int(label), meta=meta)


def glyph_to_patch(
    glyph: GlyphImage,
    params: ResidualParams,
    patch_size: int,
    label: int,
) -> TwoChannelPatch:
    """Full per-letter pipeline: segment, idealize, subtract, normalize, fuse."""
    mask = segment_regions(glyph, params)
    ideal = ideal_image(glyph, mask)
    residual = noise_residual(glyph, ideal)
    native = normalize_patch(glyph.pixels, patch_size)
    resid = normalize_patch(residual, patch_size)
    return assemble_patch(native, resid, label, PatchMeta(glyph.source_id, glyph.bbox))
