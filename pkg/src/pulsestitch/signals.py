"""Region traces and their conditioning.

A face box is partitioned into a fixed grid of regions; each region
yields one mean-intensity trace per color channel. Traces are resampled
to a common 30 FPS clock, band-limited to the plausible pulse range with
a zero-phase Butterworth filter, and optionally normalized to unit range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps
from scipy.interpolate import CubicSpline

from .errors import SignalQualityError, TraceLengthError

GRID_ROWS = 4
GRID_COLS = 6
TARGET_FPS = 30.0
PULSE_BAND = (0.85, 3.5)
FILTER_ORDER = 4
MIN_VALID_PIXEL_FRACTION = 0.5
MAX_INVALID_SAMPLE_FRACTION = 0.2
MIN_RESAMPLE_LEN = 4
MIN_FILTER_LEN = 60

CHANNEL_NAMES = ("R", "G", "B", "Y", "U", "V", "L", "a", "b")

# sRGB -> XYZ (D65 white point), linear-light
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65 = np.array([0.95047, 1.0, 1.08883])


@dataclass(frozen=True)
class RoiGrid:
    """Grid of (x, y, w, h) cells tiling a face box exactly."""

    cells: tuple
    rows: int
    cols: int

    def __len__(self) -> int:
        return len(self.cells)


@dataclass
class Trace:
    """One region/channel time series."""

    values: np.ndarray
    fps: float
    roi: int = 0
    channel: str = ""
    interpolated: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("trace values must be 1-D")


def partition_rois(face_box, rows: int = GRID_ROWS, cols: int = GRID_COLS) -> RoiGrid:
    """Tile a face box into rows x cols cells.

    Cell widths/heights are the floor division of the box size; the
    remainder pixels go to the last column and last row, so the cells
    cover the box exactly with no overlap.
    """
    x, y, w, h = (int(v) for v in face_box)
    if w < cols or h < rows:
        raise ValueError(f"face box {w}x{h} too small for a {cols}x{rows} grid")
    cw, ch = w // cols, h // rows
    cells = []
    for r in range(rows):
        for c in range(cols):
            cx = x + c * cw
            cy = y + r * ch
            cwidth = cw if c < cols - 1 else w - cw * (cols - 1)
            cheight = ch if r < rows - 1 else h - ch * (rows - 1)
            cells.append((cx, cy, cwidth, cheight))
    return RoiGrid(tuple(cells), rows, cols)


def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def convert_color(rgb) -> tuple[np.ndarray, np.ndarray]:
    """RGB (0..255) to full-range BT.601 YUV and CIE 1976 Lab.

    Returns float64 (h, w, 3) arrays. YUV keeps the 0..255 scale with U
    and V biased by 128; Lab is in its native scale (L 0..100).
    """
    arr = np.asarray(rgb, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3), got {arr.shape}")
    r, g, b = arr[:, :, 0], arr[:, :, 1], arr[:, :, 2]

    yuv = np.empty_like(arr)
    yuv[:, :, 0] = 0.299 * r + 0.587 * g + 0.114 * b
    yuv[:, :, 1] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    yuv[:, :, 2] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0

    lin = _srgb_to_linear(arr / 255.0)
    xyz = lin @ _RGB_TO_XYZ.T / _D65
    eps = (6.0 / 29.0) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    lab = np.empty_like(arr)
    lab[:, :, 0] = 116.0 * f[:, :, 1] - 16.0
    lab[:, :, 1] = 500.0 * (f[:, :, 0] - f[:, :, 1])
    lab[:, :, 2] = 200.0 * (f[:, :, 1] - f[:, :, 2])
    return yuv, lab


def color_channels(rgb) -> np.ndarray:
    """Stack the nine analysis channels (R, G, B, Y, U, V, L, a, b)."""
    arr = np.asarray(rgb, dtype=float)
    yuv, lab = convert_color(arr)
    return np.concatenate([arr, yuv, lab], axis=2)


def roi_mean_series(stack: np.ndarray, valid: np.ndarray, grid: RoiGrid):
    """Per-region mean traces over an aligned single-channel stack.

    Parameters
    ----------
    stack : (n, h, w) float
    valid : (n, h, w) bool, False where warping left no source pixel
    grid : RoiGrid

    Returns
    -------
    (traces, interpolated) : ((n_rois, n) float64, (n_rois, n) bool)
        Samples whose region had under half its pixels valid are filled
        by linear interpolation from neighboring valid samples and
        flagged in ``interpolated``.

    Raises
    ------
    SignalQualityError
        A region has more than MAX_INVALID_SAMPLE_FRACTION of its
        samples invalid.
    """
    n = stack.shape[0]
    traces = np.zeros((len(grid), n))
    interp = np.zeros((len(grid), n), dtype=bool)
    for ri, (x, y, w, h) in enumerate(grid.cells):
        sub = stack[:, y : y + h, x : x + w].reshape(n, -1)
        vsub = valid[:, y : y + h, x : x + w].reshape(n, -1)
        counts = vsub.sum(axis=1)
        total = vsub.shape[1]
        good = counts >= MIN_VALID_PIXEL_FRACTION * total
        bad_frac = 1.0 - good.mean()
        if bad_frac > MAX_INVALID_SAMPLE_FRACTION:
            raise SignalQualityError(
                f"region {ri}: {bad_frac:.0%} of samples invalid"
            )
        sums = np.where(vsub, sub, 0.0).sum(axis=1)
        vals = np.full(n, np.nan)
        nz = counts > 0
        vals[nz & good] = sums[nz & good] / counts[nz & good]
        if not good.all():
            idx = np.arange(n)
            vals[~good] = np.interp(idx[~good], idx[good], vals[good])
            interp[ri, ~good] = True
        traces[ri] = vals
    return traces, interp


def resample_to_30fps(trace):
    """Natural cubic-spline resampling onto the 30 FPS clock.

    Accepts a Trace or a (values, fps) pair; returns the same kind. A
    30 FPS input is returned unchanged (bit-identical values). Output
    spans the same duration, sampled at k/30 for k = 0..floor(span*30).
    """
    values, fps, is_trace = _unpack(trace)
    if len(values) < MIN_RESAMPLE_LEN:
        raise TraceLengthError(
            f"{len(values)} samples, need {MIN_RESAMPLE_LEN} to resample"
        )
    if fps == TARGET_FPS:
        out = values.copy()
    else:
        t_in = np.arange(len(values)) / fps
        span = t_in[-1]
        n_out = int(np.floor(span * TARGET_FPS + 1e-9)) + 1
        t_out = np.arange(n_out) / TARGET_FPS
        out = CubicSpline(t_in, values, bc_type="natural")(t_out)
    return _repack(trace, out, TARGET_FPS) if is_trace else out


def bandpass_filter(
    trace,
    band: tuple[float, float] = PULSE_BAND,
    order: int = FILTER_ORDER,
    fps: float = TARGET_FPS,
):
    """Zero-phase Butterworth band-pass (forward-backward, mean removed)."""
    values, fps, is_trace = _unpack(trace, fps)
    if len(values) < MIN_FILTER_LEN:
        raise TraceLengthError(
            f"{len(values)} samples, need {MIN_FILTER_LEN} to filter"
        )
    sos = sps.butter(order, band, btype="bandpass", fs=fps, output="sos")
    out = sps.sosfiltfilt(sos, values - values.mean())
    return _repack(trace, out, fps) if is_trace else out


def normalize_unit_range(trace):
    """Scale to [0, 1]; a constant trace maps to 0.5 everywhere."""
    values, fps, is_trace = _unpack(trace)
    lo, hi = values.min(), values.max()
    if hi == lo:
        out = np.full_like(values, 0.5)
    else:
        out = (values - lo) / (hi - lo)
    return _repack(trace, out, fps) if is_trace else out


def _unpack(trace, default_fps: float = TARGET_FPS):
    if isinstance(trace, Trace):
        return trace.values, trace.fps, True
    if (
        isinstance(trace, tuple)
        and len(trace) == 2
        and np.isscalar(trace[1])
    ):
        return np.asarray(trace[0], dtype=float), float(trace[1]), False
    return np.asarray(trace, dtype=float), default_fps, False


def _repack(trace, values, fps):
    return Trace(values, fps, trace.roi, trace.channel, trace.interpolated)
