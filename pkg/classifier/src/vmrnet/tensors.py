"""Reading .vmr1 tensor files.

The file format is the sole interface to the signal-extraction pipeline:
magic ``VMR1``, rank byte (always 3), three little-endian uint32 dims, a
C-order float32 payload, then a little-endian uint32 length prefix and a
UTF-8 JSON metadata object holding ``fps``, ``segment_start``, the
channel order, and (for training data) the ``label``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

MAGIC = b"VMR1"
INPUT_SHAPE = (24, 120, 18)  # regions x samples x channels


@dataclass
class TensorFile:
    """One decoded tensor segment with its metadata."""

    data: np.ndarray  # (regions, samples, channels) float32
    fps: float = 30.0
    segment_start: int = 0
    label: int | None = None
    channel_order: tuple[str, ...] = field(default_factory=tuple)
    path: Path | None = None


def read_tensor(path) -> TensorFile:
    """Decode one .vmr1 file, checking every section of the layout."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 17 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a VMR1 file")
    rank = blob[4]
    if rank != 3:
        raise FormatError(f"{path}: rank {rank}, expected 3")
    dims = struct.unpack("<III", blob[5:17])
    count = dims[0] * dims[1] * dims[2]
    end = 17 + 4 * count
    if len(blob) < end + 4:
        raise FormatError(f"{path}: truncated data section")
    data = np.frombuffer(blob[17:end], dtype="<f4").reshape(dims)
    (meta_len,) = struct.unpack("<I", blob[end : end + 4])
    if len(blob) != end + 4 + meta_len:
        raise FormatError(f"{path}: metadata length mismatch")
    try:
        meta = json.loads(blob[end + 4 :].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad metadata JSON ({exc})") from exc
    label = meta.get("label")
    return TensorFile(
        data=data.copy(),
        fps=float(meta.get("fps", 30.0)),
        segment_start=int(meta.get("segment_start", 0)),
        label=None if label is None else int(label),
        channel_order=tuple(meta.get("channel_order", ())),
        path=path,
    )


def load_dir(directory, require_labels: bool = False) -> list[TensorFile]:
    """Read every .vmr1 file in a directory, sorted by segment start."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.vmr1"))
    if not paths:
        raise DataError(f"no .vmr1 files in {directory}")
    tensors = [read_tensor(p) for p in paths]
    for t in tensors:
        if t.data.shape != INPUT_SHAPE:
            raise FormatError(
                f"{t.path}: shape {t.data.shape}, expected {INPUT_SHAPE}"
            )
        if require_labels and t.label is None:
            raise DataError(f"{t.path}: tensor carries no label")
    tensors.sort(key=lambda t: t.segment_start)
    return tensors


def as_batch(tensors: list[TensorFile]) -> np.ndarray:
    """Stack tensors into a (N, channels, regions, samples) float32 batch."""
    stacked = np.stack([t.data for t in tensors])
    return np.ascontiguousarray(stacked.transpose(0, 3, 1, 2), dtype=np.float32)
