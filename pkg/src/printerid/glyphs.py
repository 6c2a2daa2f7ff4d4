"""Letter extraction from page images.

The reference pipeline used an external OCR engine to cut out letters.
Here that stage is replaced by Otsu binarization plus 8-connected
component labeling, with an optional nearest-template classifier that
emulates "all occurrences of letter X" extraction. The classifier is
deliberately pluggable: anything with a classify(pixels) -> str method
can stand in for it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import font
from .errors import DegenerateImageError, InputShapeError
from .images import DocumentImage

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass
class GlyphImage:
    """Tight grayscale crop of one dark connected component."""

    pixels: np.ndarray  # 2-D uint8
    bbox: tuple[int, int, int, int]  # (row, col, height, width) in document coords
    letter_hint: str | None = None
    source_id: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        h, w = self.pixels.shape
        if h < 3 or w < 3:
            raise InputShapeError(f"glyph {h}x{w} too small; components under 3x3 are specks")
        if (h, w) != (self.bbox[2], self.bbox[3]):
            raise InputShapeError("bbox extent does not match pixel crop")


@dataclass
class ExtractOptions:
    """Knobs for extract_glyphs. threshold=None selects Otsu."""

    threshold: int | None = None
    min_area: int = 9
    max_area: int = 6000
    letter_filter: str | None = None
    classifier: "TemplateClassifier | None" = None


def otsu_threshold(pixels: np.ndarray) -> int:
    """Between-class-variance-maximizing threshold (ink = values <= t).

    Ties resolve to the lowest threshold. Raises DegenerateImageError
    when the image holds fewer than two distinct intensities.
    """
    hist = np.bincount(np.asarray(pixels, dtype=np.uint8).ravel(), minlength=256).astype(np.float64)
    if np.count_nonzero(hist) < 2:
        raise DegenerateImageError("cannot threshold an image with a single intensity level")
    p = hist / hist.sum()
    omega = np.cumsum(p)
    mu = np.cumsum(p * np.arange(256))
    mu_t = mu[-1]
    valid = (omega > 0) & (omega < 1)
    sigma_b = np.zeros(256)
    sigma_b[valid] = (mu_t * omega[valid] - mu[valid]) ** 2 / (omega[valid] * (1.0 - omega[valid]))
    return int(np.argmax(sigma_b))


def _reading_order(bboxes: list[tuple[int, int, int, int]]) -> list[int]:
    """Order components top-to-bottom by row band, then left-to-right.

    Bands are maximal groups of vertically overlapping row intervals, so
    all letters of one text line share a band.
    """
    order = sorted(range(len(bboxes)), key=lambda i: (bboxes[i][0], bboxes[i][1]))
    bands = []
    band_of = {}
    band_end = -1
    for i in order:
        top, _, h, _ = bboxes[i]
        if top >= band_end:
            bands.append(top)
            band_end = top + h
        else:
            band_end = max(band_end, top + h)
        band_of[i] = len(bands) - 1
    return sorted(range(len(bboxes)), key=lambda i: (band_of[i], bboxes[i][1], bboxes[i][0]))


def extract_glyphs(doc: DocumentImage, opts: ExtractOptions | None = None) -> list[GlyphImage]:
    """Cut tight crops of dark connected components, in reading order.

    Components with pixel area outside [min_area, max_area], or with a
    bounding box smaller than 3x3, are dropped. With letter_filter set,
    only glyphs the template classifier assigns to that letter survive.
    """
    opts = opts or ExtractOptions()
    t = opts.threshold if opts.threshold is not None else otsu_threshold(doc.pixels)
    ink = doc.pixels <= t
    labels, n = ndimage.label(ink, structure=_EIGHT_CONNECTED)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel())[1:]
    slices = ndimage.find_objects(labels)

    kept = []
    for idx in range(n):
        sl = slices[idx]
        h = sl[0].stop - sl[0].start
        w = sl[1].stop - sl[1].start
        if not (opts.min_area <= areas[idx] <= opts.max_area) or h < 3 or w < 3:
            continue
        kept.append((sl[0].start, sl[1].start, h, w))

    classifier = opts.classifier
    if opts.letter_filter is not None and classifier is None:
        classifier = TemplateClassifier.from_font()

    glyphs = []
    for i in _reading_order(kept):
        r, c, h, w = kept[i]
        crop = doc.pixels[r : r + h, c : c + w]
        hint = classifier.classify(crop) if classifier is not None else None
        if opts.letter_filter is not None and hint != opts.letter_filter.lower():
            continue
        glyphs.append(GlyphImage(crop.copy(), (r, c, h, w), letter_hint=hint, source_id=doc.source_id))
    return glyphs


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Plain bilinear resize used for template matching."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    r = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    c = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    r0 = np.floor(r).astype(int)
    c0 = np.floor(c).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (r - r0)[:, None]
    fc = (c - c0)[None, :]
    top = img[np.ix_(r0, c0)] * (1 - fc) + img[np.ix_(r0, c1)] * fc
    bot = img[np.ix_(r1, c0)] * (1 - fc) + img[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bot * fr


def _zero_mean_unit(img: np.ndarray) -> np.ndarray:
    flat = img.ravel() - img.mean()
    norm = np.linalg.norm(flat)
    return flat / norm if norm > 0 else flat


@dataclass
class TemplateClassifier:
    """Nearest mean-template letter classifier (normalized correlation)."""

    size: int = 24
    templates: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_font(cls, letters: tuple[str, ...] = font.LETTERS, size: int = 24) -> "TemplateClassifier":
        """Templates rendered from the embedded atlas (ink=0, paper=255).

        Each rendered glyph is cropped to its ink bounding box first so
        templates align with the tight crops extraction produces.
        """
        clf = cls(size=size)
        for ch in letters:
            mask = font.render_glyph(ch, size)
            rows = np.flatnonzero(mask.any(axis=1))
            cols = np.flatnonzero(mask.any(axis=0))
            tight = mask[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
            img = np.where(tight, 0.0, 255.0)
            clf.templates[ch] = _zero_mean_unit(resize_bilinear(img, size, size))
        return clf

    @classmethod
    def from_glyphs(cls, by_letter: dict[str, list[np.ndarray]], size: int = 24) -> "TemplateClassifier":
        """Mean templates from labeled training glyph crops."""
        clf = cls(size=size)
        for ch, crops in by_letter.items():
            if not crops:
                continue
            acc = np.zeros((size, size))
            for crop in crops:
                acc += resize_bilinear(np.asarray(crop, dtype=np.float64), size, size)
            clf.templates[ch.lower()] = _zero_mean_unit(acc / len(crops))
        return clf

    def scores(self, pixels: np.ndarray) -> dict[str, float]:
        # Letter identity lives in the ink shape, not in printer-specific
        # intensities: binarize the probe and keep only its largest ink
        # component so dot noise inside the crop cannot skew the match.
        pixels = np.asarray(pixels)
        try:
            t = otsu_threshold(pixels)
            ink = pixels <= t
            labels, n = ndimage.label(ink, structure=_EIGHT_CONNECTED)
            if n > 1:
                ink = labels == (np.bincount(labels.ravel())[1:].argmax() + 1)
            shape = np.where(ink, 0.0, 255.0)
        except DegenerateImageError:
            shape = pixels.astype(np.float64)
        probe = _zero_mean_unit(resize_bilinear(shape, self.size, self.size))
        return {ch: float(tpl @ probe) for ch, tpl in self.templates.items()}

    def classify(self, pixels: np.ndarray) -> str:
        scores = self.scores(pixels)
        return max(sorted(scores), key=lambda ch: scores[ch])
