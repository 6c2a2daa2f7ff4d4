"""Versioned binary patch cache ("PTPC").

Layout: magic "PTPC", format version u16, patch size u16, channel count
u16, class count u16, record count u32, then per record: label u16,
meta length u16 + UTF-8 meta, P*P*2 little-endian float32 values. The
meta string is "<source_id>|row,col,height,width".
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FileFormatError
from .preprocess import PatchMeta, TwoChannelPatch

MAGIC = b"PTPC"
FORMAT_VERSION = 1
CHANNELS = 2


def _encode_meta(meta: PatchMeta) -> bytes:
    r, c, h, w = meta.bbox
    return f"{meta.source_id}|{r},{c},{h},{w}".encode("utf-8")


def _decode_meta(raw: bytes) -> PatchMeta:
    text = raw.decode("utf-8")
    source_id, _, bbox = text.rpartition("|")
    parts = bbox.split(",")
    if len(parts) != 4:
        raise FileFormatError(f"malformed patch meta {text!r}")
    return PatchMeta(source_id, tuple(int(p) for p in parts))


@dataclass
class PatchSet:
    """All patches of one extraction run, ready for training/inference."""

    patch_size: int
    class_count: int
    data: np.ndarray  # (n, P, P, 2) float32
    labels: np.ndarray  # (n,) int64
    metas: list[PatchMeta] = field(default_factory=list)

    def __len__(self) -> int:
        return self.data.shape[0]

    def subset(self, indices) -> "PatchSet":
        indices = np.asarray(indices, dtype=int)
        return PatchSet(
            self.patch_size,
            self.class_count,
            self.data[indices],
            self.labels[indices],
            [self.metas[i] for i in indices],
        )

    def doc_indices(self) -> dict[str, list[int]]:
        """Patch indices grouped by source document, insertion-ordered."""
        groups: dict[str, list[int]] = {}
        for i, meta in enumerate(self.metas):
            groups.setdefault(meta.source_id, []).append(i)
        return groups

    @staticmethod
    def split_source_id(source_id: str) -> tuple[str, str]:
        """Dataset source ids look like "<printer_id>/<page_file>"."""
        printer, _, page = source_id.partition("/")
        return printer, page

    @classmethod
    def from_patches(cls, patch_size: int, class_count: int, patches: list[TwoChannelPatch]) -> "PatchSet":
        if patches:
            data = np.stack([p.data for p in patches]).astype(np.float32)
        else:
            data = np.zeros((0, patch_size, patch_size, CHANNELS), dtype=np.float32)
        labels = np.array([p.label for p in patches], dtype=np.int64)
        return cls(patch_size, class_count, data, labels, [p.meta for p in patches])


def write_cache(path: str | Path, patches: PatchSet) -> None:
    parts = [
        MAGIC,
        struct.pack("<HHHHI", FORMAT_VERSION, patches.patch_size, CHANNELS,
                    patches.class_count, len(patches)),
    ]
    for i in range(len(patches)):
        meta = _encode_meta(patches.metas[i])
        parts.append(struct.pack("<HH", int(patches.labels[i]), len(meta)))
        parts.append(meta)
        parts.append(np.ascontiguousarray(patches.data[i], dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_cache(path: str | Path) -> PatchSet:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FileFormatError(f"{path}: not a PTPC patch cache")
    try:
        version, patch_size, channels, class_count, count = struct.unpack_from("<HHHHI", raw, 4)
    except struct.error as exc:
        raise FileFormatError(f"{path}: truncated header") from exc
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported cache format version {version}")
    if channels != CHANNELS:
        raise FileFormatError(f"{path}: expected {CHANNELS} channels, found {channels}")

    offset = 4 + struct.calcsize("<HHHHI")
    floats = patch_size * patch_size * CHANNELS
    data = np.zeros((count, patch_size, patch_size, CHANNELS), dtype=np.float32)
    labels = np.zeros(count, dtype=np.int64)
    metas: list[PatchMeta] = []
    for i in range(count):
        try:
            label, meta_len = struct.unpack_from("<HH", raw, offset)
        except struct.error as exc:
            raise FileFormatError(f"{path}: truncated record {i}") from exc
        offset += 4
        metas.append(_decode_meta(raw[offset : offset + meta_len]))
        offset += meta_len
        if offset + 4 * floats > len(raw):
            raise FileFormatError(f"{path}: truncated pixel data in record {i}")
        data[i] = np.frombuffer(raw, dtype="<f4", count=floats, offset=offset).reshape(
            patch_size, patch_size, CHANNELS
        )
        offset += 4 * floats
        labels[i] = label
    if offset != len(raw):
        raise FileFormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return PatchSet(patch_size, class_count, data, labels, metas)
