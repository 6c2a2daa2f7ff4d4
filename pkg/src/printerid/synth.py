"""Synthetic print-then-photograph corpus generator.

Pages are rendered from the embedded bitmap font, pushed through a
per-printer artifact model (ink level shift, horizontal banding, toner
spread at glyph borders, dot noise), then through a camera model
(perspective tilt, illumination, blur, sensor noise). Everything is a
pure function of the profiles and seeds, so corpora regenerate
bit-exactly from their manifest.

The simulator targets statistical class separability and pipeline
exercise, not photometric realism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import font, rng
from .errors import DegenerateProjectionError, InsufficientDataError, PageSpecError
from .images import DocumentImage, save_image

MANIFEST_NAME = "manifest.txt"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class PageSpec:
    """Layout of a rendered text page."""

    text: str
    glyph_height: int = 18
    margin: int = 18
    line_spacing: int = 8
    page_width: int = 560
    page_height: int = 760

    def __post_init__(self):
        if not self.text:
            raise PageSpecError("page text must be nonempty")
        if self.glyph_height < 8:
            raise PageSpecError(f"glyph height {self.glyph_height} too small to render (minimum 8)")


@dataclass(frozen=True)
class PrinterProfile:
    """Artifact parameters defining one simulated printer class."""

    banding_amplitude: float
    banding_period: float
    toner_spread_radius: float
    dot_noise_density: float
    dot_noise_strength: float
    ink_level: float
    seed: int = 0

    def __post_init__(self):
        if self.banding_period < 2:
            raise ValueError(f"banding period must be >= 2, got {self.banding_period}")
        if not 0 <= self.ink_level <= 255:
            raise ValueError(f"ink level must lie in [0, 255], got {self.ink_level}")
        if not 0 <= self.dot_noise_density <= 1:
            raise ValueError(f"dot noise density must lie in [0, 1], got {self.dot_noise_density}")


@dataclass(frozen=True)
class CameraProfile:
    """Acquisition parameters: page tilt, lighting, optics, sensor."""

    tilt_degrees: float = 0.0
    illumination_scale: float = 1.0
    blur_sigma: float = 0.9
    sensor_noise_sigma: float = 4.0
    distance_factor: float = 0.7  # camera distance as a fraction of the page's larger side
    seed: int = 0

    def __post_init__(self):
        if self.illumination_scale <= 0:
            raise ValueError("illumination scale must be positive")
        if self.blur_sigma < 0:
            raise ValueError("blur sigma must be non-negative")
        if self.distance_factor <= 0:
            raise ValueError("distance factor must be positive")


def letter_gap_for(glyph_height: int) -> int:
    """Horizontal gap between letter cells.

    Kept tight on purpose: with realistic capture blur, neighboring
    letters merge occasionally once perspective tilt shrinks part of the
    page, which is the component-extraction analog of tilt-induced OCR
    loss."""
    return max(2, int(round(glyph_height * 0.18)))


def render_page(spec: PageSpec) -> DocumentImage:
    """Black-on-white page of the spec's text, wrapped at the margins.

    Baselines advance by glyph_height + line_spacing. Text that runs past
    the bottom margin is silently dropped. Uppercase folds to lowercase;
    characters without a glyph raise PageSpecError.
    """
    page = np.full((spec.page_height, spec.page_width), 255, dtype=np.uint8)
    gw = font.glyph_width_for(spec.glyph_height)
    gap = letter_gap_for(spec.glyph_height)
    advance = gw + gap
    line_advance = spec.glyph_height + spec.line_spacing
    row, col = spec.margin, spec.margin
    for ch in spec.text:
        if ch == "\n":
            row += line_advance
            col = spec.margin
            continue
        if ch == " ":
            col += advance
            continue
        if not font.has_glyph(ch):
            raise PageSpecError(f"no glyph for character {ch!r}")
        if col + gw > spec.page_width - spec.margin:
            row += line_advance
            col = spec.margin
        if row + spec.glyph_height > spec.page_height - spec.margin:
            break
        mask = font.render_glyph(ch, spec.glyph_height)
        page[row : row + spec.glyph_height, col : col + gw][mask] = 0
        col += advance
    return DocumentImage(page)


def apply_printer(img: DocumentImage, profile: PrinterProfile) -> DocumentImage:
    """Stamp printer-intrinsic artifacts onto a clean render.

    Order: remap ink pixels to ink_level, add sinusoidal row banding to
    ink pixels, blend a Gaussian-blurred copy over the glyph boundary
    band (toner spread), flip a random pixel fraction by +-strength, then
    clamp. All randomness comes from profile.seed.
    """
    out = img.pixels.astype(np.float64)
    ink = img.pixels < 128
    out[ink] = profile.ink_level

    if profile.banding_amplitude != 0:
        rows = np.arange(out.shape[0], dtype=np.float64)
        banding = profile.banding_amplitude * np.sin(2.0 * math.pi * rows / profile.banding_period)
        out += np.where(ink, banding[:, None], 0.0)

    if profile.toner_spread_radius > 0:
        blurred = ndimage.gaussian_filter(out, sigma=profile.toner_spread_radius, mode="nearest")
        width = max(1, int(math.ceil(profile.toner_spread_radius)))
        band = ndimage.binary_dilation(ink, iterations=width) & ~ndimage.binary_erosion(ink, iterations=width)
        out[band] = blurred[band]

    if profile.dot_noise_density > 0 and profile.dot_noise_strength != 0:
        gen = rng.stream(profile.seed)
        flip = gen.random(out.shape) < profile.dot_noise_density
        sign = np.where(gen.random(out.shape) < 0.5, -1.0, 1.0)
        out += np.where(flip, sign * profile.dot_noise_strength, 0.0)

    return DocumentImage(_to_u8(out), source_id=img.source_id)


def apply_camera(img: DocumentImage, profile: CameraProfile) -> DocumentImage:
    """Simulate smartphone acquisition of the printed page.

    Order: perspective tilt about the page's horizontal center axis
    (bilinear resampling, white fill), multiplicative illumination,
    Gaussian blur, additive Gaussian sensor noise, clamp.
    """
    out = img.pixels.astype(np.float64)
    if abs(profile.tilt_degrees) >= 90:
        raise DegenerateProjectionError(f"tilt {profile.tilt_degrees} degrees flattens the page edge-on")
    if profile.tilt_degrees != 0:
        out = _tilt_warp(out, profile.tilt_degrees, profile.distance_factor)
    if profile.illumination_scale != 1.0:
        out = out * profile.illumination_scale
    if profile.blur_sigma > 0:
        out = ndimage.gaussian_filter(out, sigma=profile.blur_sigma, mode="nearest")
    if profile.sensor_noise_sigma > 0:
        gen = rng.stream(profile.seed)
        out = out + gen.normal(0.0, profile.sensor_noise_sigma, size=out.shape)
    return DocumentImage(_to_u8(out), source_id=img.source_id)


def _tilt_warp(pixels: np.ndarray, tilt_degrees: float, distance_factor: float) -> np.ndarray:
    """Pinhole view of the page rotated about its horizontal center axis.

    Positive tilt moves the page top away from the camera, so top rows
    shrink and bottom rows magnify. Focal length equals the camera
    distance, giving unit magnification at the page center.
    """
    h, w = pixels.shape
    theta = math.radians(tilt_degrees)
    d = distance_factor * max(h, w)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0

    v = np.arange(h, dtype=np.float64)[:, None] - cy
    u = np.arange(w, dtype=np.float64)[None, :] - cx
    denom = d * math.cos(theta) + v * math.sin(theta)
    if np.any(np.abs(denom) < 1e-9):
        raise DegenerateProjectionError("projected horizon crosses the image frame")
    src_y = v * d / denom
    src_r = np.broadcast_to(src_y + cy, (h, w))
    src_c = u * (d - src_y * math.sin(theta)) / d + cx
    return _bilinear_sample(pixels, src_r, src_c, fill=255.0)


def _bilinear_sample(img: np.ndarray, rows: np.ndarray, cols: np.ndarray, fill: float) -> np.ndarray:
    h, w = img.shape
    inside = (rows >= 0) & (rows <= h - 1) & (cols >= 0) & (cols <= w - 1)
    r = np.clip(rows, 0, h - 1)
    c = np.clip(cols, 0, w - 1)
    r0 = np.floor(r).astype(int)
    c0 = np.floor(c).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = r - r0
    fc = c - c0
    top = img[r0, c0] * (1 - fc) + img[r0, c1] * fc
    bot = img[r1, c0] * (1 - fc) + img[r1, c1] * fc
    return np.where(inside, top * (1 - fr) + bot * fr, fill)


def _to_u8(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(arr + 0.5), 0, 255).astype(np.uint8)


def default_profiles(n_printers: int, master_seed: int) -> list[PrinterProfile]:
    """Documented per-class artifact spread.

    Banding periods are strictly increasing (6 + 3i) so every class has a
    distinct mechanical signature; the remaining parameters cycle small
    tables so noise characteristics overlap between classes. Per-class
    seeds derive from the master seed.
    """
    profiles = []
    for i in range(n_printers):
        gen = rng.stream(master_seed, rng.PRINTER_PROFILE, i)
        profiles.append(
            PrinterProfile(
                banding_amplitude=24.0 + 6.0 * ((i * 2) % 5),
                banding_period=6.0 + 3.0 * i,
                toner_spread_radius=0.4 + 0.2 * (i % 4),
                dot_noise_density=0.008 + 0.007 * ((i + 1) % 5),
                dot_noise_strength=36.0 + 7.0 * ((i * 3) % 5),
                ink_level=16.0 + 9.0 * (i % 5),
                seed=int(gen.integers(0, 2**63)),
            )
        )
    return profiles


def random_text(n_chars: int, gen: np.random.Generator) -> str:
    """Random lowercase words totalling roughly n_chars characters."""
    alphabet = "abcdefghijklmnopqrstuvwxyz"
    words = []
    total = 0
    while total < n_chars:
        length = int(gen.integers(2, 9))
        words.append("".join(alphabet[int(k)] for k in gen.integers(0, 26, size=length)))
        total += length + 1
    return " ".join(words)


def generate_corpus(
    out_dir: str | Path,
    n_printers: int,
    pages_per_printer: int,
    page_spec: PageSpec,
    camera: CameraProfile,
    master_seed: int,
    chars_per_page: int = 240,
    profiles: list[PrinterProfile] | None = None,
    force: bool = False,
) -> list[PrinterProfile]:
    """Write a labeled dataset directory of simulated pages.

    Layout is <out_dir>/<printer_id>/page_NNN.png plus a manifest that
    records every profile and seed. Page texts depend only on
    (master_seed, page index), so all printers print the same documents,
    mirroring a shared source corpus.
    """
    if n_printers < 2:
        raise InsufficientDataError(f"need at least 2 printers, got {n_printers}")
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not force:
        raise FileExistsError(f"output directory {out_dir} is not empty (use force to overwrite)")
    out_dir.mkdir(parents=True, exist_ok=True)

    if profiles is None:
        profiles = default_profiles(n_printers, master_seed)
    texts = [
        random_text(chars_per_page, rng.stream(master_seed, rng.PAGE_TEXT, j))
        for j in range(pages_per_printer)
    ]

    for i, profile in enumerate(profiles):
        printer_dir = out_dir / f"printer{i:02d}"
        printer_dir.mkdir(exist_ok=True)
        for j in range(pages_per_printer):
            clean = render_page(replace(page_spec, text=texts[j]))
            page_profile = replace(
                profile, seed=int(rng.stream(master_seed, rng.PAGE_PRINTER, i, j).integers(0, 2**63))
            )
            page_camera = replace(
                camera, seed=int(rng.stream(master_seed, rng.PAGE_CAMERA, i, j).integers(0, 2**63))
            )
            shot = apply_camera(apply_printer(clean, page_profile), page_camera)
            save_image(shot.pixels, printer_dir / f"page_{j:03d}.png")

    _write_manifest(out_dir, n_printers, pages_per_printer, page_spec, camera, master_seed, chars_per_page, profiles)
    return profiles


def _write_manifest(out_dir, n_printers, pages, spec, camera, seed, chars_per_page, profiles) -> None:
    lines = [
        f"manifest-version {MANIFEST_VERSION}",
        f"master-seed {seed}",
        f"printers {n_printers}",
        f"pages-per-printer {pages}",
        f"chars-per-page {chars_per_page}",
        f"page glyph_height={spec.glyph_height} margin={spec.margin} line_spacing={spec.line_spacing}"
        f" page_width={spec.page_width} page_height={spec.page_height}",
        f"camera tilt_degrees={camera.tilt_degrees} illumination_scale={camera.illumination_scale}"
        f" blur_sigma={camera.blur_sigma} sensor_noise_sigma={camera.sensor_noise_sigma}"
        f" distance_factor={camera.distance_factor} seed={camera.seed}",
    ]
    for i, p in enumerate(profiles):
        lines.append(
            f"printer{i:02d} banding_amplitude={p.banding_amplitude} banding_period={p.banding_period}"
            f" toner_spread_radius={p.toner_spread_radius} dot_noise_density={p.dot_noise_density}"
            f" dot_noise_strength={p.dot_noise_strength} ink_level={p.ink_level} seed={p.seed}"
        )
    (Path(out_dir) / MANIFEST_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")
