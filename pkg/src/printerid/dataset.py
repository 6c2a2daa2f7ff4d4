"""Dataset directory ingestion: images -> labeled two-channel patches.

Datasets are laid out as <root>/<printer_id>/<page>.png (PGM/PPM also
accepted); printer directories define class labels in lexicographic
order. Extraction is a pure function of (image, params, patch size), so
documents may be processed in parallel; outputs keep document order and
in-document reading order either way.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .cache import PatchSet
from .errors import DegenerateImageError, InsufficientDataError
from .glyphs import ExtractOptions, extract_glyphs
from .images import DocumentImage, load_image
from .preprocess import ResidualParams, TwoChannelPatch, glyph_to_patch

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")


def scan_dataset(root: str | Path) -> tuple[list[str], list[tuple[int, str, Path]]]:
    """Class names plus (label, source_id, path) for every page image."""
    root = Path(root)
    if not root.is_dir():
        raise InsufficientDataError(f"dataset root {root} is not a directory")
    class_names = sorted(p.name for p in root.iterdir() if p.is_dir())
    if len(class_names) < 2:
        raise InsufficientDataError(f"dataset {root} needs at least 2 printer directories")
    docs = []
    for label, name in enumerate(class_names):
        pages = sorted(p for p in (root / name).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not pages:
            raise InsufficientDataError(f"printer directory {root / name} holds no page images")
        docs.extend((label, f"{name}/{p.name}", p) for p in pages)
    return class_names, docs


def document_patches(
    doc: DocumentImage,
    label: int,
    params: ResidualParams,
    patch_size: int,
    opts: ExtractOptions | None = None,
) -> list[TwoChannelPatch]:
    """Extract every surviving glyph of one page as a labeled patch."""
    return [glyph_to_patch(g, params, patch_size, label) for g in extract_glyphs(doc, opts)]


def _extract_one(task):
    label, source_id, path, params, patch_size, opts = task
    doc = load_image(path)
    doc.source_id = source_id
    try:
        return source_id, document_patches(doc, label, params, patch_size, opts), None
    except DegenerateImageError as exc:
        return source_id, [], str(exc)


def build_patchset(
    root: str | Path,
    params: ResidualParams,
    patch_size: int,
    opts: ExtractOptions | None = None,
    jobs: int = 1,
    warn=None,
) -> tuple[PatchSet, list[str]]:
    """Extract the whole dataset; returns (patches, class names).

    Pages that cannot be thresholded (degenerate images) contribute no
    patches and are reported through warn(message) instead of aborting
    the batch.
    """
    class_names, docs = scan_dataset(root)
    tasks = [(label, sid, path, params, patch_size, opts) for label, sid, path in docs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_extract_one, tasks, chunksize=4))
    else:
        results = [_extract_one(t) for t in tasks]

    patches: list[TwoChannelPatch] = []
    for source_id, doc_patches, problem in results:
        if problem and warn is not None:
            warn(f"{source_id}: {problem}")
        patches.extend(doc_patches)
    return PatchSet.from_patches(patch_size, len(class_names), patches), class_names
