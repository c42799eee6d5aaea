"""Weighted spatial-temporal tensors and their file format.

Filtered region traces for the nine color channels are scaled by
per-region vessel-density weights, cut into fixed-length overlapping
segments, and stacked with their unit-range-normalized twins into
(regions, samples, 18) tensors. Tensors serialize to a small binary
format (magic ``VMR1``) with a JSON metadata trailer.
"""

from __future__ import annotations

import importlib.resources
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .affine import fit_affine, warp_frame
from .errors import FormatError, SegmentError
from .signals import CHANNEL_NAMES, GRID_COLS, GRID_ROWS, RoiGrid, normalize_unit_range

SEGMENT_LEN = 120
SEGMENT_STRIDE = 3
TENSOR_MAGIC = b"VMR1"
TENSOR_SHAPE = (GRID_ROWS * GRID_COLS, SEGMENT_LEN, 2 * len(CHANNEL_NAMES))
_DEFAULT_WEIGHTS_RESOURCE = "default_vessel_weights.json"


@dataclass
class VesselWeightMap:
    """Per-region trace weights, normalized to mean 1."""

    weights: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 1:
            raise ValueError("weights must be 1-D")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")
        total = self.weights.sum()
        if total <= 0:
            raise ValueError("weights must not be all zero")
        self.weights = self.weights * (len(self.weights) / total)

    def to_json(self) -> str:
        return json.dumps({"source": self.source, "weights": self.weights.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "VesselWeightMap":
        doc = json.loads(text)
        return cls(np.asarray(doc["weights"], dtype=float), doc.get("source", ""))


def default_vessel_weights() -> VesselWeightMap:
    """The bundled weight map (high cheeks/mandible, low forehead)."""
    text = (
        importlib.resources.files("pulsestitch.data")
        .joinpath(_DEFAULT_WEIGHTS_RESOURCE)
        .read_text()
    )
    return VesselWeightMap.from_json(text)


def vessel_weights_from_mask(
    mask, mask_landmarks, face_landmarks, grid: RoiGrid
) -> VesselWeightMap:
    """Region weights from a vessel-density mask image.

    The mask (nonzero where vessels are dense) is registered onto the
    face via an affine fit of its landmarks to the face landmarks, then
    each grid cell's weight is its count of dense pixels, normalized to
    mean 1 over the grid.
    """
    mask = np.asarray(mask, dtype=float)
    if mask.ndim != 2:
        raise ValueError("mask must be a single-channel image")
    t = fit_affine(list(zip(np.asarray(mask_landmarks, float), np.asarray(face_landmarks, float))))
    xs = [x + w for x, _, w, _ in grid.cells]
    ys = [y + h for _, y, _, h in grid.cells]
    # binarize before warping: a warped pixel is dense when the majority
    # of its bilinear support was, which keeps boundaries crisp
    warped, valid = warp_frame((mask > 0).astype(float), t, out_size=(max(xs), max(ys)))
    dense = (warped >= 0.5) & valid
    counts = np.array(
        [dense[y : y + h, x : x + w].sum() for x, y, w, h in grid.cells], dtype=float
    )
    if counts.sum() == 0:
        raise ValueError("no dense mask pixels fall inside the region grid")
    return VesselWeightMap(counts, source="mask")


def apply_vascular_weights(traces, weight_map: VesselWeightMap) -> np.ndarray:
    """Scale each region row of a trace matrix.

    Accepts either a (regions, samples) matrix or a (channels, regions,
    samples) stack; the region axis is always the second-to-last one.
    """
    arr = np.asarray(traces, dtype=float)
    if arr.ndim not in (2, 3):
        raise ValueError("traces must be 2-D (regions, samples) or 3-D (channels, regions, samples)")
    if arr.shape[-2] != len(weight_map.weights):
        raise ValueError(
            f"{arr.shape[-2]} trace rows vs {len(weight_map.weights)} weights"
        )
    return arr * weight_map.weights[:, None]


@dataclass
class STRTensor:
    """One segment's spatial-temporal representation.

    ``data`` is (regions, samples, channels) with the nine filtered
    channels first and their unit-range-normalized twins after.
    """

    data: np.ndarray
    fps: float = 30.0
    segment_start: int = 0
    label: int | None = None
    channel_order: tuple = field(
        default_factory=lambda: tuple(CHANNEL_NAMES)
        + tuple(f"{c}_norm" for c in CHANNEL_NAMES)
    )

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != TENSOR_SHAPE:
            raise ValueError(f"tensor shape {self.data.shape} != {TENSOR_SHAPE}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("tensor contains non-finite values")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError("label must be 0, 1, or None")

    def channel(self, name: str) -> np.ndarray:
        return self.data[:, :, self.channel_order.index(name)]


def segment_starts(
    total_frames: int, length: int = SEGMENT_LEN, stride: int = SEGMENT_STRIDE
) -> list[int]:
    """Start offsets of every full segment: 0, stride, ... while they fit."""
    if length < 1 or stride < 1:
        raise ValueError("length and stride must be positive")
    if total_frames < length:
        raise SegmentError(f"{total_frames} frames < segment length {length}")
    return list(range(0, total_frames - length + 1, stride))


def assemble_str(
    channel_traces: np.ndarray, segment_start: int, fps: float = 30.0, label=None
) -> STRTensor:
    """Build one tensor from weighted filtered traces.

    Parameters
    ----------
    channel_traces : (9, regions, total_samples) float
        Filtered, vessel-weighted traces, channel order R, G, B, Y, U,
        V, L, a, b.
    segment_start : first sample of the segment window

    The normalized twin of each channel is the unit-range normalization
    of each region row over the segment window.
    """
    arr = np.asarray(channel_traces, dtype=float)
    if arr.ndim != 3 or arr.shape[0] != len(CHANNEL_NAMES):
        raise ValueError(f"expected (9, regions, samples), got {arr.shape}")
    if arr.shape[1] != TENSOR_SHAPE[0]:
        raise ValueError(f"expected {TENSOR_SHAPE[0]} regions, got {arr.shape[1]}")
    stop = segment_start + SEGMENT_LEN
    if segment_start < 0 or stop > arr.shape[2]:
        raise SegmentError(
            f"segment [{segment_start}, {stop}) outside {arr.shape[2]} samples"
        )
    window = arr[:, :, segment_start:stop]
    data = np.empty(TENSOR_SHAPE)
    for c in range(len(CHANNEL_NAMES)):
        data[:, :, c] = window[c]
        for r in range(TENSOR_SHAPE[0]):
            data[r, :, len(CHANNEL_NAMES) + c] = normalize_unit_range(window[c, r])
    return STRTensor(data, fps=fps, segment_start=segment_start, label=label)


def build_str_tensors(
    channel_traces: np.ndarray,
    fps: float = 30.0,
    label=None,
    length: int = SEGMENT_LEN,
    stride: int = SEGMENT_STRIDE,
) -> list[STRTensor]:
    """All segments of a trace matrix as tensors."""
    arr = np.asarray(channel_traces, dtype=float)
    return [
        assemble_str(arr, start, fps=fps, label=label)
        for start in segment_starts(arr.shape[2], length, stride)
    ]


def write_str_tensor(tensor: STRTensor, path) -> None:
    """Serialize one tensor (magic, rank, dims, float32 data, JSON meta)."""
    meta = {
        "fps": tensor.fps,
        "segment_start": tensor.segment_start,
        "channel_order": list(tensor.channel_order),
    }
    if tensor.label is not None:
        meta["label"] = tensor.label
    meta_bytes = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<B", 3))
        fh.write(struct.pack("<III", *tensor.data.shape))
        fh.write(tensor.data.astype("<f4").tobytes())
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)


def read_str_tensor(path) -> STRTensor:
    """Read a tensor file written by ``write_str_tensor``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 17 or blob[:4] != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {TENSOR_MAGIC!r}")
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
    kwargs = {}
    if meta.get("channel_order"):
        kwargs["channel_order"] = tuple(meta["channel_order"])
    return STRTensor(
        data.astype(np.float64),
        fps=float(meta.get("fps", 30.0)),
        segment_start=int(meta.get("segment_start", 0)),
        label=meta.get("label"),
        **kwargs,
    )
