"""End-to-end glue: frames to aligned stacks to traces to tensors."""

from __future__ import annotations

import logging

import numpy as np

from .affine import warp_frame
from .errors import SegmentError
from .features import DetectorParams, detect_keypoints, to_grayscale
from .ingest import AnnotationSet, FrameSequence, equalize_histogram
from .representation import (
    VesselWeightMap,
    apply_vascular_weights,
    build_str_tensors,
    default_vessel_weights,
)
from .signals import (
    CHANNEL_NAMES,
    bandpass_filter,
    color_channels,
    normalize_unit_range,
    partition_rois,
    resample_to_30fps,
    roi_mean_series,
)
from .stitching import AlignmentPlan, FrameFeatures

logger = logging.getLogger(__name__)


def extract_frame_features(
    seq: FrameSequence,
    annotations: AnnotationSet | None = None,
    detector: DetectorParams | None = None,
    equalize: bool = False,
) -> list[FrameFeatures]:
    """Keypoints plus landmarks for every frame.

    Annotated keypoints are used where present; otherwise the detector
    runs on the (optionally histogram-equalized) frame.
    """
    out = []
    for frame in seq:
        idx = frame.index
        landmarks = None
        if annotations is not None and idx in annotations.landmarks:
            landmarks = annotations.landmarks[idx]
        if annotations is not None and idx in annotations.keypoints:
            pos, desc = annotations.keypoints[idx]
            out.append(FrameFeatures(pos, desc, landmarks))
            continue
        work = equalize_histogram(frame) if equalize else frame
        kps = detect_keypoints(to_grayscale(work), detector, seq.face_box)
        feat = FrameFeatures.from_keypoints(kps, landmarks)
        out.append(feat)
        logger.debug("frame %d: %d keypoints", idx, len(kps))
    return out


def render_aligned(seq: FrameSequence, plan: AlignmentPlan):
    """Warp every frame into template geometry.

    Returns (stack (n, h, w, 3) float64, valid (n, h, w) bool).
    """
    w, h = seq.frame_size
    n = len(seq)
    stack = np.empty((n, h, w, 3))
    valid = np.empty((n, h, w), dtype=bool)
    for frame in seq:
        t = plan.frames[frame.index].transform
        stack[frame.index], valid[frame.index] = warp_frame(
            frame.data, t, (w, h)
        )
    return stack, valid


def alignment_heatmap(stack: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Per-pixel temporal standard deviation of luma over valid samples.

    Residual motion shows up as high deviation along texture edges.
    Pixels valid in fewer than 2 frames read 0.
    """
    luma = (
        0.299 * stack[:, :, :, 0]
        + 0.587 * stack[:, :, :, 1]
        + 0.114 * stack[:, :, :, 2]
    )
    counts = valid.sum(axis=0)
    v = valid.astype(float)
    mean = np.where(counts > 0, (luma * v).sum(axis=0) / np.maximum(counts, 1), 0.0)
    var = (((luma - mean) * v) ** 2).sum(axis=0) / np.maximum(counts - 1, 1)
    return np.where(counts >= 2, np.sqrt(var), 0.0)


def extract_channel_traces(stack: np.ndarray, valid: np.ndarray, face_box) -> np.ndarray:
    """Raw region traces for all nine channels: (9, rois, n) float64."""
    grid = partition_rois(face_box)
    n = stack.shape[0]
    planes = np.empty((n, stack.shape[1], stack.shape[2], len(CHANNEL_NAMES)))
    for k in range(n):
        planes[k] = color_channels(stack[k])
    traces = np.empty((len(CHANNEL_NAMES), len(grid), n))
    for c in range(len(CHANNEL_NAMES)):
        traces[c], _ = roi_mean_series(planes[:, :, :, c], valid, grid)
    return traces


def condition_traces(
    raw: np.ndarray, fps: float, normalize_first: bool = False
) -> np.ndarray:
    """Resample every trace row to 30 FPS and band-pass it.

    ``normalize_first`` switches to unit-range normalizing each trace
    before the filter instead of leaving normalization to the
    per-segment tensor assembly.
    """
    rows = []
    for c in range(raw.shape[0]):
        chan = []
        for r in range(raw.shape[1]):
            t = resample_to_30fps((raw[c, r], fps))
            if normalize_first:
                t = normalize_unit_range(t)
            chan.append(bandpass_filter(t))
        rows.append(np.stack(chan))
    return np.stack(rows)


def sequence_tensors(
    seq: FrameSequence,
    plan: AlignmentPlan,
    weights: VesselWeightMap | None = None,
    label=None,
):
    """Aligned frames to weighted spatial-temporal tensors."""
    stack, valid = render_aligned(seq, plan)
    return stack_tensors(stack, valid, seq.face_box, seq.fps, weights, label)


def stack_tensors(
    stack: np.ndarray,
    valid: np.ndarray,
    face_box,
    fps: float,
    weights: VesselWeightMap | None = None,
    label=None,
    normalize_first: bool = False,
):
    """Tensor pipeline from an already-aligned stack."""
    raw = extract_channel_traces(stack, valid, face_box)
    conditioned = condition_traces(raw, fps, normalize_first)
    if conditioned.shape[2] < 120:
        raise SegmentError(
            f"{conditioned.shape[2]} conditioned samples, need at least 120"
        )
    if weights is None:
        weights = default_vessel_weights()
    weighted = apply_vascular_weights(conditioned, weights)
    return build_str_tensors(weighted, fps=30.0, label=label)
