"""Video and annotation loading.

Two on-disk video layouts are supported:

* a directory of ``%06d.png`` (or ``.ppm``) frames plus a ``meta.json``
  holding ``{"fps": float, "face_box": [x, y, w, h]}``;
* a raw-planar file: magic ``VMRV``, u32-LE width / height / frame count,
  then per frame the R, G and B planes as unsigned bytes, with a JSON
  sidecar at ``<path>.json`` for the metadata.

Annotations are a JSON document keyed by frame index carrying landmark
points and, optionally, externally computed keypoints with descriptors.
"""

from __future__ import annotations

import json
import logging
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import AnnotationError, FormatError, SequenceGapError

logger = logging.getLogger(__name__)

RAW_MAGIC = b"VMRV"
FPS_MIN = 10.0
FPS_MAX = 120.0
DESCRIPTOR_DIM = 128

_FRAME_NAME = re.compile(r"^(\d{6})\.(png|ppm)$")


@dataclass
class Frame:
    """Single RGB frame.

    ``data`` is (height, width, 3). File-backed frames are uint8; frames
    generated in memory (synthetic sequences) may be float64 so that
    sub-quantization signal amplitudes survive — the 8-bit constraint
    applies at the file boundary, where writers round.
    """

    data: np.ndarray
    index: int
    colorspace: str = "RGB"

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError(f"frame data must be (h, w, 3), got {self.data.shape}")
        if self.index < 0:
            raise ValueError("frame index must be non-negative")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class FrameSequence:
    """Ordered frames with a frame rate and a face bounding box."""

    frames: list[Frame]
    fps: float
    face_box: tuple[int, int, int, int] | None = None

    def __post_init__(self):
        if not self.frames:
            raise ValueError("sequence must contain at least one frame")
        if not (FPS_MIN <= self.fps <= FPS_MAX):
            raise ValueError(f"fps {self.fps} outside [{FPS_MIN}, {FPS_MAX}]")
        h, w = self.frames[0].height, self.frames[0].width
        for f in self.frames:
            if (f.height, f.width) != (h, w):
                raise FormatError(
                    f"frame {f.index} is {f.width}x{f.height}, expected {w}x{h}"
                )
        if self.face_box is None:
            self.face_box = (0, 0, w, h)
        x, y, bw, bh = self.face_box
        if bw <= 0 or bh <= 0 or x < 0 or y < 0 or x + bw > w or y + bh > h:
            raise ValueError(f"face_box {self.face_box} outside {w}x{h} frame")
        self.face_box = (int(x), int(y), int(bw), int(bh))

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    @property
    def frame_size(self) -> tuple[int, int]:
        """(width, height) of every frame."""
        return self.frames[0].width, self.frames[0].height

    def stack(self) -> np.ndarray:
        """All frames as one (n, h, w, 3) float64 array."""
        return np.stack([f.data for f in self.frames]).astype(float)


@dataclass
class AnnotationSet:
    """Per-frame landmarks and optional precomputed keypoints.

    ``landmarks[i]`` is an (n, 2) float array or None where unannotated;
    ``keypoints[i]`` is a (positions (m, 2), descriptors (m, 128)) pair
    or None. Landmark count n is constant across annotated frames.
    """

    landmarks: dict[int, np.ndarray] = field(default_factory=dict)
    keypoints: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def landmark_count(self) -> int | None:
        for pts in self.landmarks.values():
            return pts.shape[0]
        return None


def _quantize(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return data
    return np.clip(np.floor(data + 0.5), 0, 255).astype(np.uint8)


def load_sequence(path, fps_override: float | None = None) -> FrameSequence:
    """Load a frame directory or raw-planar file into a FrameSequence.

    ``fps_override`` replaces the metadata frame rate when given.
    """
    p = Path(path)
    if p.is_dir():
        return _load_frame_dir(p, fps_override)
    if p.is_file():
        return _load_raw_planar(p, fps_override)
    raise FormatError(f"no such video path: {p}")


def _read_meta(meta: dict, where: str):
    fps = meta.get("fps")
    if not isinstance(fps, (int, float)):
        raise FormatError(f"{where}: missing or non-numeric fps")
    box = meta.get("face_box")
    if box is not None:
        if (
            not isinstance(box, (list, tuple))
            or len(box) != 4
            or not all(isinstance(v, (int, float)) for v in box)
        ):
            raise FormatError(f"{where}: face_box must be [x, y, w, h]")
        box = tuple(int(v) for v in box)
    return float(fps), box


def _load_frame_dir(p: Path, fps_override) -> FrameSequence:
    meta_path = p / "meta.json"
    if not meta_path.is_file():
        raise FormatError(f"{p}: missing meta.json")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{meta_path}: invalid JSON ({exc})") from exc
    fps, box = _read_meta(meta, str(meta_path))

    found: dict[int, Path] = {}
    for child in p.iterdir():
        m = _FRAME_NAME.match(child.name)
        if m:
            found[int(m.group(1))] = child
    if not found:
        raise FormatError(f"{p}: no %06d.png/.ppm frames")
    count = max(found) + 1
    missing = sorted(set(range(count)) - set(found))
    if missing:
        raise SequenceGapError(missing)

    frames = []
    for idx in range(count):
        with Image.open(found[idx]) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        frames.append(Frame(arr, idx))
    return FrameSequence(frames, fps_override or fps, box)


def _load_raw_planar(p: Path, fps_override) -> FrameSequence:
    blob = p.read_bytes()
    if len(blob) < 16 or blob[:4] != RAW_MAGIC:
        raise FormatError(f"{p}: bad magic, expected {RAW_MAGIC!r}")
    w, h, count = struct.unpack("<III", blob[4:16])
    expect = 16 + count * 3 * w * h
    if len(blob) != expect:
        raise FormatError(f"{p}: size {len(blob)} != expected {expect}")

    sidecar = Path(str(p) + ".json")
    fps, box = None, None
    if sidecar.is_file():
        try:
            meta = json.loads(sidecar.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{sidecar}: invalid JSON ({exc})") from exc
        fps, box = _read_meta(meta, str(sidecar))
    if fps_override is not None:
        fps = float(fps_override)
    if fps is None:
        raise FormatError(f"{p}: no fps sidecar and no override given")

    plane = w * h
    raw = np.frombuffer(blob, dtype=np.uint8, offset=16)
    frames = []
    for idx in range(count):
        base = idx * 3 * plane
        rgb = np.empty((h, w, 3), dtype=np.uint8)
        for c in range(3):
            rgb[:, :, c] = raw[base + c * plane : base + (c + 1) * plane].reshape(h, w)
        frames.append(Frame(rgb, idx))
    return FrameSequence(frames, fps, box)


def save_raw_planar(seq: FrameSequence, path) -> None:
    """Write a sequence as a raw-planar file plus its JSON sidecar."""
    p = Path(path)
    w, h = seq.frame_size
    parts = [RAW_MAGIC, struct.pack("<III", w, h, len(seq))]
    for f in seq.frames:
        data = _quantize(f.data)
        for c in range(3):
            parts.append(data[:, :, c].tobytes())
    p.write_bytes(b"".join(parts))
    sidecar = {"fps": seq.fps, "face_box": list(seq.face_box)}
    Path(str(p) + ".json").write_text(json.dumps(sidecar))


def save_frame_dir(seq: FrameSequence, path) -> None:
    """Write a sequence as %06d.png frames plus meta.json."""
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    for f in seq.frames:
        Image.fromarray(_quantize(f.data)).save(p / f"{f.index:06d}.png")
    meta = {"fps": seq.fps, "face_box": list(seq.face_box)}
    (p / "meta.json").write_text(json.dumps(meta))


def load_annotations(path, seq: FrameSequence) -> AnnotationSet:
    """Load and validate an annotation JSON document against ``seq``.

    Descriptors are renormalized to unit length on load.
    """
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError:
        raise FormatError(f"no such annotation file: {p}")
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p}: invalid JSON ({exc})") from exc
    frames_doc = doc.get("frames")
    if not isinstance(frames_doc, dict):
        raise FormatError(f"{p}: missing 'frames' object")

    w, h = seq.frame_size
    out = AnnotationSet()
    n_landmarks = None
    for key, entry in frames_doc.items():
        try:
            idx = int(key)
        except ValueError:
            raise FormatError(f"{p}: non-integer frame key {key!r}")
        if not (0 <= idx < len(seq)):
            raise AnnotationError(f"frame index {idx} outside sequence of {len(seq)}")
        lm = entry.get("landmarks")
        if lm is not None:
            pts = np.asarray(lm, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 2:
                raise AnnotationError(f"frame {idx}: landmarks must be (n, 2)")
            if n_landmarks is None:
                n_landmarks = pts.shape[0]
            elif pts.shape[0] != n_landmarks:
                raise AnnotationError(
                    f"frame {idx}: {pts.shape[0]} landmarks, expected {n_landmarks}"
                )
            _check_bounds(pts, w, h, idx)
            out.landmarks[idx] = pts
        kps = entry.get("keypoints")
        if kps is not None:
            pos = np.asarray([k["p"] for k in kps], dtype=float).reshape(-1, 2)
            desc = np.asarray([k["d"] for k in kps], dtype=float)
            if desc.size and desc.shape[1] != DESCRIPTOR_DIM:
                raise FormatError(
                    f"frame {idx}: descriptor length {desc.shape[1]}, "
                    f"expected {DESCRIPTOR_DIM}"
                )
            _check_bounds(pos, w, h, idx)
            norms = np.linalg.norm(desc, axis=1)
            if np.any(norms == 0):
                raise FormatError(f"frame {idx}: zero-norm descriptor")
            out.keypoints[idx] = (pos, desc / norms[:, None])
    return out


def _check_bounds(pts: np.ndarray, w: int, h: int, idx: int) -> None:
    if pts.size == 0:
        return
    if (
        pts[:, 0].min() < 0
        or pts[:, 1].min() < 0
        or pts[:, 0].max() >= w
        or pts[:, 1].max() >= h
    ):
        bad = pts[
            (pts[:, 0] < 0) | (pts[:, 1] < 0) | (pts[:, 0] >= w) | (pts[:, 1] >= h)
        ][0]
        raise AnnotationError(
            f"frame {idx}: point ({bad[0]}, {bad[1]}) outside {w}x{h} frame"
        )


def save_annotations(ann: AnnotationSet, path) -> None:
    """Write an AnnotationSet in the JSON layout ``load_annotations`` reads."""
    doc: dict = {"frames": {}}
    indices = sorted(set(ann.landmarks) | set(ann.keypoints))
    for idx in indices:
        entry: dict = {}
        if idx in ann.landmarks:
            entry["landmarks"] = ann.landmarks[idx].tolist()
        if idx in ann.keypoints:
            pos, desc = ann.keypoints[idx]
            entry["keypoints"] = [
                {"p": p.tolist(), "d": d.tolist()} for p, d in zip(pos, desc)
            ]
        doc["frames"][str(idx)] = entry
    Path(path).write_text(json.dumps(doc))


def equalize_histogram(frame: Frame) -> Frame:
    """Per-channel histogram equalization of an 8-bit RGB frame.

    Output level for value v is floor(255 * cdf(v) / npixels); a channel
    with a single occupied bin is left unchanged. Monotone by
    construction, and idempotent on an already-uniform histogram.
    """
    data = frame.data
    if data.dtype != np.uint8:
        raise FormatError("histogram equalization requires 8-bit frame data")
    out = np.empty_like(data)
    npix = data.shape[0] * data.shape[1]
    for c in range(3):
        chan = data[:, :, c]
        hist = np.bincount(chan.ravel(), minlength=256)
        if np.count_nonzero(hist) <= 1:
            out[:, :, c] = chan
            continue
        cdf = np.cumsum(hist)
        lut = (255 * cdf // npix).astype(np.uint8)
        out[:, :, c] = lut[chan]
    return Frame(out, frame.index, frame.colorspace)
