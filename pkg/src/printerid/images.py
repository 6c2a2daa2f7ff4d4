"""Image loading, saving, and grayscale conversion.

Accepts 8-bit grayscale or RGB images in PNG and PGM/PPM formats. RGB
inputs are reduced with the fixed luminance weights used throughout the
pipeline; alpha channels are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputShapeError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass
class DocumentImage:
    """8-bit grayscale page image with provenance.

    source_id is an opaque string; the dataset layer uses
    "<printer_id>/<page_file>" so letters can be grouped back into pages.
    """

    pixels: np.ndarray  # 2-D uint8
    source_id: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise InputShapeError(f"document image must be 2-D and nonempty, got shape {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            if self.pixels.min() < 0 or self.pixels.max() > 255:
                raise InputShapeError("document intensities must lie in [0, 255]")
            self.pixels = self.pixels.astype(np.uint8)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def to_grayscale(rgb: np.ndarray, source_id: str = "") -> DocumentImage:
    """Reduce an RGB image to 8-bit grayscale.

    Luminance is round(0.299 R + 0.587 G + 0.114 B) with round-half-up,
    clamped to [0, 255].
    """
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise InputShapeError(f"expected H x W x 3 array, got shape {rgb.shape}")
    r, g, b = (rgb[..., i].astype(np.float64) for i in range(3))
    luma = LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
    luma = np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)
    return DocumentImage(luma, source_id=source_id)


def load_image(path: str | Path) -> DocumentImage:
    """Load PNG or PGM/PPM as a grayscale DocumentImage."""
    path = Path(path)
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "1"):
            arr = np.asarray(im.convert("L"))
            return DocumentImage(arr, source_id=path.name)
        arr = np.asarray(im.convert("RGB"))
    return to_grayscale(arr, source_id=path.name)


def save_image(pixels: np.ndarray, path: str | Path) -> None:
    """Write a 2-D uint8 array as PNG or PGM depending on extension."""
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(Path(path))
