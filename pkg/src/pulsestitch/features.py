"""Blob keypoint detection and description.

Difference-of-Gaussians pyramid with quadratic subpixel refinement and
edge-response rejection. Descriptors are 4x4 spatial x 8 orientation
gradient histograms with trilinear weighting; no dominant-orientation
assignment is performed, so descriptors are not rotation invariant
(consecutive video frames of the same face do not need them to be).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import BoundaryError, SizeError
from .ingest import Frame

DESCRIPTOR_DIM = 128
BASE_SIGMA = 1.6
# assumed blur of the input image before pyramid construction
INPUT_SIGMA = 0.5
DESCR_CLAMP = 0.2
MIN_FRAME_SIDE = 32
_GRID = 18  # descriptor sample grid, gradients on the inner 16x16
_REFINE_STEPS = 5


@dataclass
class DetectorParams:
    octaves: int = 4
    scales_per_octave: int = 3
    dog_threshold: float = 0.03  # on intensity range 1.0
    edge_ratio: float = 10.0

    def __post_init__(self):
        if self.octaves < 1 or self.scales_per_octave < 1:
            raise ValueError("octaves and scales_per_octave must be >= 1")
        if self.dog_threshold <= 0:
            raise ValueError("dog_threshold must be positive")
        if self.edge_ratio < 1:
            raise ValueError("edge_ratio must be >= 1")


@dataclass
class Keypoint:
    """Detected blob: subpixel position, characteristic scale, descriptor."""

    x: float
    y: float
    scale: float
    response: float = 0.0
    descriptor: np.ndarray | None = field(default=None, repr=False)


def to_grayscale(frame) -> np.ndarray:
    """Luma view of an RGB frame (or (h, w, 3) array) scaled to [0, 1]."""
    data = frame.data if isinstance(frame, Frame) else np.asarray(frame)
    if data.ndim != 3 or data.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) input, got {data.shape}")
    data = data.astype(float)
    gray = 0.299 * data[:, :, 0] + 0.587 * data[:, :, 1] + 0.114 * data[:, :, 2]
    return gray / 255.0


def _gaussian_pyramid(gray: np.ndarray, params: DetectorParams):
    s = params.scales_per_octave
    k = 2.0 ** (1.0 / s)
    base_blur = np.sqrt(max(BASE_SIGMA**2 - INPUT_SIGMA**2, 0.01))
    seed = ndimage.gaussian_filter(gray, base_blur, mode="nearest")
    octaves = []
    for o in range(params.octaves):
        if min(seed.shape) < 8:
            break
        levels = [seed]
        for i in range(1, s + 3):
            # incremental blur from sigma0*k^(i-1) to sigma0*k^i
            inc = BASE_SIGMA * (k ** (i - 1)) * np.sqrt(k * k - 1.0)
            levels.append(ndimage.gaussian_filter(levels[-1], inc, mode="nearest"))
        octaves.append(np.stack(levels))
        seed = levels[s][::2, ::2]
    return octaves


def _refine(dog: np.ndarray, lvl: int, y: int, x: int, n_levels: int):
    """Iterative quadratic refinement; returns (lvl, y, x, offset, value) or None."""
    h, w = dog.shape[1:]
    for _ in range(_REFINE_STEPS):
        d = dog
        gx = (d[lvl, y, x + 1] - d[lvl, y, x - 1]) / 2.0
        gy = (d[lvl, y + 1, x] - d[lvl, y - 1, x]) / 2.0
        gs = (d[lvl + 1, y, x] - d[lvl - 1, y, x]) / 2.0
        dxx = d[lvl, y, x + 1] - 2 * d[lvl, y, x] + d[lvl, y, x - 1]
        dyy = d[lvl, y + 1, x] - 2 * d[lvl, y, x] + d[lvl, y - 1, x]
        dss = d[lvl + 1, y, x] - 2 * d[lvl, y, x] + d[lvl - 1, y, x]
        dxy = (
            d[lvl, y + 1, x + 1]
            - d[lvl, y + 1, x - 1]
            - d[lvl, y - 1, x + 1]
            + d[lvl, y - 1, x - 1]
        ) / 4.0
        dxs = (
            d[lvl + 1, y, x + 1]
            - d[lvl + 1, y, x - 1]
            - d[lvl - 1, y, x + 1]
            + d[lvl - 1, y, x - 1]
        ) / 4.0
        dys = (
            d[lvl + 1, y + 1, x]
            - d[lvl + 1, y - 1, x]
            - d[lvl - 1, y + 1, x]
            + d[lvl - 1, y - 1, x]
        ) / 4.0
        grad = np.array([gx, gy, gs])
        hess = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
        try:
            offset = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            return None
        if np.all(np.abs(offset) < 0.5):
            value = d[lvl, y, x] + 0.5 * float(grad @ offset)
            return lvl, y, x, offset, value
        x += int(round(np.clip(offset[0], -1, 1)))
        y += int(round(np.clip(offset[1], -1, 1)))
        lvl += int(round(np.clip(offset[2], -1, 1)))
        if not (1 <= lvl <= n_levels and 1 <= x < w - 1 and 1 <= y < h - 1):
            return None
    return None


def detect_keypoints(
    image, params: DetectorParams | None = None, face_box=None
) -> list[Keypoint]:
    """Detect DoG extrema and attach descriptors.

    Parameters
    ----------
    image : Frame, (h, w, 3) array, or (h, w) grayscale in [0, 1]
    params : DetectorParams
    face_box : optional (x, y, w, h); keypoints outside it are dropped

    Returns keypoints sorted by descending response magnitude. Keypoints
    whose descriptor support leaves the frame are dropped.
    """
    params = params or DetectorParams()
    if isinstance(image, Frame) or (
        isinstance(image, np.ndarray) and image.ndim == 3
    ):
        gray = to_grayscale(image)
    else:
        gray = np.asarray(image, dtype=float)
    if min(gray.shape) < MIN_FRAME_SIDE:
        raise SizeError(
            f"frame {gray.shape[1]}x{gray.shape[0]} below "
            f"{MIN_FRAME_SIDE}x{MIN_FRAME_SIDE} minimum"
        )

    s = params.scales_per_octave
    thr = params.dog_threshold
    edge_limit = (params.edge_ratio + 1.0) ** 2 / params.edge_ratio
    footprint = np.ones((3, 3, 3), dtype=bool)
    footprint[1, 1, 1] = False

    found: dict[tuple, Keypoint] = {}
    for o, gauss in enumerate(_gaussian_pyramid(gray, params)):
        dog = gauss[1:] - gauss[:-1]
        neigh_max = ndimage.maximum_filter(dog, footprint=footprint, mode="nearest")
        neigh_min = ndimage.minimum_filter(dog, footprint=footprint, mode="nearest")
        strong = np.abs(dog) > 0.5 * thr
        extremum = (dog > neigh_max) | (dog < neigh_min)
        cand = strong & extremum
        cand[0] = cand[-1] = False
        cand[:, [0, -1], :] = False
        cand[:, :, [0, -1]] = False
        scale_factor = 2.0**o
        for lvl, y, x in zip(*np.nonzero(cand)):
            out = _refine(dog, int(lvl), int(y), int(x), s)
            if out is None:
                continue
            lvl_i, y_i, x_i, offset, value = out
            if abs(value) < thr:
                continue
            # 2x2 spatial Hessian at the refined integer location
            dxx = dog[lvl_i, y_i, x_i + 1] - 2 * dog[lvl_i, y_i, x_i] + dog[lvl_i, y_i, x_i - 1]
            dyy = dog[lvl_i, y_i + 1, x_i] - 2 * dog[lvl_i, y_i, x_i] + dog[lvl_i, y_i - 1, x_i]
            dxy = (
                dog[lvl_i, y_i + 1, x_i + 1]
                - dog[lvl_i, y_i + 1, x_i - 1]
                - dog[lvl_i, y_i - 1, x_i + 1]
                + dog[lvl_i, y_i - 1, x_i - 1]
            ) / 4.0
            tr = dxx + dyy
            det = dxx * dyy - dxy * dxy
            if det <= 0 or tr * tr / det >= edge_limit:
                continue
            px = (x_i + offset[0]) * scale_factor
            py = (y_i + offset[1]) * scale_factor
            scale = BASE_SIGMA * 2.0 ** (o + (lvl_i + offset[2]) / s)
            key = (o, int(round(2 * (x_i + offset[0]))), int(round(2 * (y_i + offset[1]))))
            prev = found.get(key)
            if prev is None or abs(value) > abs(prev.response):
                found[key] = Keypoint(float(px), float(py), float(scale), float(value))

    kps = list(found.values())
    if face_box is not None:
        bx, by, bw, bh = face_box
        kps = [k for k in kps if bx <= k.x < bx + bw and by <= k.y < by + bh]
    if not kps:
        return []

    xs = np.array([k.x for k in kps])
    ys = np.array([k.y for k in kps])
    scales = np.array([k.scale for k in kps])
    descs, ok = _descriptor_batch(gray, xs, ys, scales)
    out = []
    for keep, kp, d in zip(ok, kps, descs):
        if keep:
            kp.descriptor = d
            out.append(kp)
    out.sort(key=lambda k: (-abs(k.response), k.x, k.y))
    return out


def compute_descriptor(gray: np.ndarray, x: float, y: float, scale: float) -> np.ndarray:
    """Descriptor for one location; raises BoundaryError if support leaves the frame."""
    descs, ok = _descriptor_batch(
        np.asarray(gray, dtype=float),
        np.array([x], dtype=float),
        np.array([y], dtype=float),
        np.array([scale], dtype=float),
    )
    if not ok[0]:
        raise BoundaryError(
            f"descriptor support at ({x}, {y}) scale {scale} leaves the frame"
        )
    return descs[0]


def _descriptor_batch(gray: np.ndarray, xs, ys, scales):
    """Descriptors for K locations: ((K, 128) float64, (K,) bool feasible)."""
    h, w = gray.shape
    k = len(xs)
    spacing = scales / BASE_SIGMA
    offs = np.arange(_GRID) - (_GRID - 1) / 2.0  # symmetric half-integer offsets

    px = xs[:, None, None] + offs[None, None, :] * spacing[:, None, None]
    py = ys[:, None, None] + offs[None, :, None] * spacing[:, None, None]
    ok = (
        (px.min(axis=(1, 2)) >= 0.0)
        & (px.max(axis=(1, 2)) <= w - 1.0)
        & (py.min(axis=(1, 2)) >= 0.0)
        & (py.max(axis=(1, 2)) <= h - 1.0)
    )

    x0 = np.clip(np.floor(px), 0, w - 1).astype(np.intp)
    y0 = np.clip(np.floor(py), 0, h - 1).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(px - x0, 0.0, 1.0)
    fy = np.clip(py - y0, 0.0, 1.0)
    patch = (
        gray[y0, x0] * (1 - fx) * (1 - fy)
        + gray[y0, x1] * fx * (1 - fy)
        + gray[y1, x0] * (1 - fx) * fy
        + gray[y1, x1] * fx * fy
    )

    gx = patch[:, 1:-1, 2:] - patch[:, 1:-1, :-2]
    gy = patch[:, 2:, 1:-1] - patch[:, :-2, 1:-1]
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), 2 * np.pi)

    n = _GRID - 2  # 16
    rb = (np.arange(n) - 1.5) / 4.0  # spatial bin coordinates
    rbin = np.broadcast_to(rb[None, :, None], (k, n, n))
    cbin = np.broadcast_to(rb[None, None, :], (k, n, n))
    obin = ang / (2 * np.pi) * 8.0 - 0.5

    r0 = np.floor(rbin).astype(np.intp)
    c0 = np.floor(cbin).astype(np.intp)
    o0 = np.floor(obin).astype(np.intp)
    wr = rbin - r0
    wc = cbin - c0
    wo = obin - o0

    # padded spatial bins absorb the out-of-range halves of edge samples
    hist = np.zeros((k, 6, 6, 8))
    kidx = np.broadcast_to(np.arange(k)[:, None, None], (k, n, n))
    for dr, wgt_r in ((0, 1 - wr), (1, wr)):
        for dc, wgt_c in ((0, 1 - wc), (1, wc)):
            for do, wgt_o in ((0, 1 - wo), (1, wo)):
                np.add.at(
                    hist,
                    (kidx, r0 + 1 + dr, c0 + 1 + dc, (o0 + do) % 8),
                    mag * wgt_r * wgt_c * wgt_o,
                )
    vec = hist[:, 1:5, 1:5, :].reshape(k, DESCRIPTOR_DIM)

    norms = np.linalg.norm(vec, axis=1, keepdims=True)
    zero = norms[:, 0] == 0
    safe = np.where(norms == 0, 1.0, norms)
    vec = np.minimum(vec / safe, DESCR_CLAMP)
    norms2 = np.linalg.norm(vec, axis=1, keepdims=True)
    safe2 = np.where(norms2 == 0, 1.0, norms2)
    vec = vec / safe2
    vec[zero] = 1.0 / np.sqrt(DESCRIPTOR_DIM)
    return vec, ok
