"""Synthetic face-video generation with known ground truth.

Sequences are rendered from a textured template canvas: each frame
samples the canvas through a known affine motion (plus optional
sub-pixel jitter), a pulse waveform modulates skin intensity per region
before warping, and landmark annotations carry optional measurement
noise. Everything is seeded and bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .affine import AffineTransform, compose, warp_frame
from .errors import SynthSpecError
from .ingest import AnnotationSet, Frame, FrameSequence
from .signals import PULSE_BAND, RoiGrid, partition_rois

CANVAS_MARGIN = 16
# landmark layout as face-box fractions: eyes, nose tip, mouth corners
_LANDMARK_FRAC = np.array(
    [[0.30, 0.35], [0.70, 0.35], [0.50, 0.55], [0.35, 0.75], [0.65, 0.75]]
)
_BLOB_DENSITY = 40.0  # one texture blob per this many pixels


@dataclass
class SynthSpec:
    """Parameters of one synthetic sequence."""

    width: int = 128
    height: int = 128
    duration: float = 4.0
    fps: float = 30.0
    pulse_freq: float = 1.2
    pulse_amplitude: float = 2.0  # intensity units on the 0..255 scale
    motion: dict = field(default_factory=lambda: {"kind": "static"})
    jitter_sigma: float = 0.0
    annotation_noise_sigma: float = 0.0
    texture_seed: int = 0
    vessel_layout: np.ndarray | None = None  # (rois,) per-region pulse gain

    def __post_init__(self):
        if self.width < 48 or self.height < 48:
            raise SynthSpecError("frame size must be at least 48x48")
        if self.duration <= 0:
            raise SynthSpecError("duration must be positive")
        if not (10.0 <= self.fps <= 120.0):
            raise SynthSpecError(f"fps {self.fps} outside [10, 120]")
        if self.pulse_amplitude < 0 or self.jitter_sigma < 0:
            raise SynthSpecError("amplitudes and sigmas must be non-negative")
        if self.pulse_amplitude > 0 and not (
            PULSE_BAND[0] <= self.pulse_freq <= PULSE_BAND[1]
        ):
            raise SynthSpecError(
                f"pulse_freq {self.pulse_freq} outside band {PULSE_BAND}"
            )
        if self.vessel_layout is not None:
            self.vessel_layout = np.asarray(self.vessel_layout, dtype=float)

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.fps))

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise SynthSpecError(f"unknown spec fields: {sorted(extra)}")
        return cls(**doc)


@dataclass
class SynthGroundTruth:
    """Everything the generator knew: motion, landmarks, injected pulse."""

    transforms: list  # per-frame AffineTransform mapping frame -> template
    landmark_tracks: np.ndarray  # (n_frames, 5, 2) noiseless positions
    pulse_rows: np.ndarray  # (rois, n_frames) injected per-region signal
    vessel_layout: np.ndarray  # (rois,)
    texture_anchors: np.ndarray  # blob centers in template coordinates
    grid: RoiGrid


def _motion_transforms(spec: SynthSpec) -> list[AffineTransform]:
    """Per-frame frame-to-template transforms from the motion description."""
    kind = spec.motion.get("kind", "static")
    n = spec.n_frames
    cx, cy = (spec.width - 1) / 2.0, (spec.height - 1) / 2.0
    out = []
    if kind == "static":
        out = [AffineTransform.identity() for _ in range(n)]
    elif kind == "ramp":
        dx = float(spec.motion.get("dx", 0.0))
        dy = float(spec.motion.get("dy", 0.0))
        out = [AffineTransform.translation(dx * k, dy * k) for k in range(n)]
    elif kind == "drift":
        amp_t = float(spec.motion.get("translation", 2.0))
        amp_r = math.radians(float(spec.motion.get("rotation_deg", 0.0)))
        amp_s = float(spec.motion.get("scale", 0.0))
        period = float(spec.motion.get("period", 4.0)) * spec.fps
        for k in range(n):
            tx = amp_t * math.sin(2 * math.pi * k / period)
            ty = 0.7 * amp_t * (math.cos(2 * math.pi * k / period) - 1.0)
            th = amp_r * math.sin(2 * math.pi * k / (1.37 * period))
            sc = 1.0 + amp_s * math.sin(2 * math.pi * k / (0.77 * period))
            cos_t, sin_t = sc * math.cos(th), sc * math.sin(th)
            # rotate/scale about the frame center, then translate
            about = AffineTransform(
                cos_t,
                -sin_t,
                cx - cos_t * cx + sin_t * cy,
                sin_t,
                cos_t,
                cy - sin_t * cx - cos_t * cy,
            )
            out.append(compose(AffineTransform.translation(tx, ty), about))
    elif kind == "explicit":
        coeffs = spec.motion.get("transforms", [])
        if len(coeffs) != n:
            raise SynthSpecError(
                f"explicit motion has {len(coeffs)} transforms for {n} frames"
            )
        out = [AffineTransform.from_coeffs(c) for c in coeffs]
    else:
        raise SynthSpecError(f"unknown motion kind {kind!r}")
    for t in out:
        if abs(t.determinant) < 1e-6:
            raise SynthSpecError("degenerate motion transform")
    return out


def _texture_canvas(spec: SynthSpec, rng: np.random.Generator):
    """Blob-and-noise skin texture on a margin-padded canvas."""
    ch = spec.height + 2 * CANVAS_MARGIN
    cw = spec.width + 2 * CANVAS_MARGIN
    smooth = ndimage.gaussian_filter(rng.standard_normal((ch, cw)), 1.5)
    smooth = smooth / max(np.abs(smooth).max(), 1e-9)
    base = 140.0 + 18.0 * smooth

    n_blobs = int(cw * ch / _BLOB_DENSITY)
    centers = rng.uniform([0, 0], [cw - 1, ch - 1], size=(n_blobs, 2))
    sigmas = rng.uniform(0.9, 2.2, size=n_blobs)
    amps = rng.uniform(45.0, 95.0, size=n_blobs) * rng.choice([-1, 1], size=n_blobs)
    ys, xs = np.mgrid[0:ch, 0:cw]
    for (bx, by), s, a in zip(centers, sigmas, amps):
        d2 = (xs - bx) ** 2 + (ys - by) ** 2
        near = d2 < (4 * s) ** 2  # beyond 4 sigma the blob is negligible
        base[near] += a * np.exp(-d2[near] / (2 * s * s))
    base = np.clip(base, 15.0, 240.0)

    chan_noise = [
        ndimage.gaussian_filter(rng.standard_normal((ch, cw)), 3.0) * 3.0
        for _ in range(3)
    ]
    rgb = np.stack(
        [
            base * 0.98 + 6.0 + chan_noise[0],
            base + chan_noise[1],
            base * 0.88 + 4.0 + chan_noise[2],
        ],
        axis=2,
    )
    anchors = centers - CANVAS_MARGIN  # report in template coordinates
    return np.clip(rgb, 5.0, 250.0), anchors


def _layout_map(spec: SynthSpec, grid: RoiGrid, layout: np.ndarray) -> np.ndarray:
    """Piecewise-constant per-region gain map on the padded canvas."""
    ch = spec.height + 2 * CANVAS_MARGIN
    cw = spec.width + 2 * CANVAS_MARGIN
    m = np.zeros((ch, cw))
    for gain, (x, y, w, h) in zip(layout, grid.cells):
        m[
            y + CANVAS_MARGIN : y + h + CANVAS_MARGIN,
            x + CANVAS_MARGIN : x + w + CANVAS_MARGIN,
        ] = gain
    return m


def generate_sequence(spec: SynthSpec):
    """Render a synthetic sequence.

    Returns (FrameSequence, AnnotationSet, SynthGroundTruth). Frames
    carry float64 data; writing them through the file formats quantizes
    to 8 bits. Identical specs produce bit-identical output.
    """
    rng = np.random.default_rng(spec.texture_seed)
    grid = partition_rois((0, 0, spec.width, spec.height))
    layout = (
        np.ones(len(grid))
        if spec.vessel_layout is None
        else np.asarray(spec.vessel_layout, dtype=float)
    )
    if layout.shape != (len(grid),):
        raise SynthSpecError(f"vessel_layout must have {len(grid)} entries")

    canvas, anchors = _texture_canvas(spec, rng)
    gain_map = _layout_map(spec, grid, layout)[:, :, None]
    motion = _motion_transforms(spec)
    jitter = (
        rng.normal(0.0, spec.jitter_sigma, size=(spec.n_frames, 2))
        if spec.jitter_sigma > 0
        else np.zeros((spec.n_frames, 2))
    )
    jitter[0] = 0.0  # frame 0 is the template

    lm_template = _LANDMARK_FRAC * [spec.width - 1, spec.height - 1]
    ann_noise = (
        rng.normal(0.0, spec.annotation_noise_sigma, size=(spec.n_frames, 5, 2))
        if spec.annotation_noise_sigma > 0
        else np.zeros((spec.n_frames, 5, 2))
    )

    to_canvas = AffineTransform.translation(CANVAS_MARGIN, CANVAS_MARGIN)
    frames = []
    transforms = []
    tracks = np.empty((spec.n_frames, 5, 2))
    pulse_rows = np.empty((len(grid), spec.n_frames))
    annotations = AnnotationSet()
    for k in range(spec.n_frames):
        t_k = compose(AffineTransform.translation(*jitter[k]), motion[k])
        transforms.append(t_k)
        phase = math.sin(2 * math.pi * spec.pulse_freq * k / spec.fps)
        pulse_rows[:, k] = spec.pulse_amplitude * phase * layout

        lit = canvas + spec.pulse_amplitude * phase * gain_map
        # warp_frame wants canvas -> frame; frame coords go through t_k
        # to template coords, then shift by the margin into the canvas
        canvas_to_frame = compose(to_canvas, t_k).inverse()
        data, _ = warp_frame(lit, canvas_to_frame, (spec.width, spec.height))
        frames.append(Frame(data, k))

        lm_k = t_k.inverse().apply(lm_template)
        tracks[k] = lm_k
        noisy = lm_k + ann_noise[k]
        np.clip(noisy[:, 0], 0, spec.width - 1, out=noisy[:, 0])
        np.clip(noisy[:, 1], 0, spec.height - 1, out=noisy[:, 1])
        annotations.landmarks[k] = noisy

    seq = FrameSequence(frames, spec.fps, (0, 0, spec.width, spec.height))
    gt = SynthGroundTruth(transforms, tracks, pulse_rows, layout, anchors, grid)
    return seq, annotations, gt


def alignment_residual(plan, ground_truth: SynthGroundTruth, face_box, step: int = 8):
    """Probe-grid distance between estimated and true alignment.

    For each frame the estimated and true frame-to-template transforms
    are applied to a grid of probe points across the face box; the
    residual is the mean point distance. Returns per-frame residuals
    plus their mean and max.
    """
    x, y, w, h = face_box
    gx, gy = np.meshgrid(np.arange(x, x + w, step), np.arange(y, y + h, step))
    probes = np.column_stack([gx.ravel(), gy.ravel()]).astype(float)
    per_frame = []
    for k, true_t in enumerate(ground_truth.transforms):
        est_t = plan.frames[k].transform
        d = est_t.apply(probes) - true_t.apply(probes)
        per_frame.append(float(np.mean(np.hypot(d[:, 0], d[:, 1]))))
    arr = np.array(per_frame)
    return {"mean": float(arr.mean()), "max": float(arr.max()), "per_frame": arr}


def pulse_snr(values, pulse_freq: float, fps: float = 30.0) -> float:
    """In-band SNR of a trace against a known pulse frequency, in dB.

    Signal power is the spectrum within pulse_freq +/- 0.1 Hz; noise is
    the rest of the pulse band. Traces whose length puts the pulse on a
    DFT bin measure cleanly; off-bin tones leak some of their own power
    into the noise band (rectangular window).
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size < 4:
        raise ValueError("need a 1-D trace of at least 4 samples")
    x = x - x.mean()
    power = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(x.size, 1.0 / fps)
    band = (freqs >= PULSE_BAND[0]) & (freqs <= PULSE_BAND[1])
    sig = band & (np.abs(freqs - pulse_freq) <= 0.1 + 1e-9)
    noise = band & ~sig
    p_sig = power[sig].sum()
    p_noise = power[noise].sum()
    if p_noise == 0:
        return math.inf if p_sig > 0 else 0.0
    return float(10.0 * np.log10(p_sig / p_noise)) if p_sig > 0 else -math.inf


def synthetic_vessel_mask(size=(128, 128), seed: int = 0):
    """A plausible vessel-density mask: dense cheeks and mandible, sparse
    forehead. Returns (mask uint8, landmarks (5, 2))."""
    w, h = size
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:h, 0:w]
    mask = np.zeros((h, w), dtype=np.uint8)

    def ellipse(cx, cy, rx, ry):
        return ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0

    mask[ellipse(0.28 * w, 0.62 * h, 0.16 * w, 0.14 * h)] = 255  # left cheek
    mask[ellipse(0.72 * w, 0.62 * h, 0.16 * w, 0.14 * h)] = 255  # right cheek
    mask[ellipse(0.50 * w, 0.86 * h, 0.30 * w, 0.10 * h)] = 255  # mandible
    speckle = rng.random((h, w)) < 0.02
    mask[speckle & (ys < 0.25 * h)] = 255  # sparse forehead capillaries
    landmarks = _LANDMARK_FRAC * [w - 1, h - 1]
    return mask, landmarks
