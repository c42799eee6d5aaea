"""Liveness scoring and biometric error metrics.

Scores follow the higher-is-live convention; labels are 1 for bona fide
and 0 for attack. Acceptance at a threshold t means score >= t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import MetricError
from .representation import STRTensor
from .signals import PULSE_BAND

_PAD_FACTOR = 8  # zero-padding for the coherent-peak scan


@dataclass
class ScoreSet:
    """Scores with their ground-truth labels."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ValueError("scores and labels must be matching 1-D arrays")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise ValueError("labels must be 0 or 1")

    @property
    def genuine(self) -> np.ndarray:
        return self.scores[self.labels == 1]

    @property
    def attack(self) -> np.ndarray:
        return self.scores[self.labels == 0]

    def require_both_classes(self) -> None:
        if self.genuine.size == 0 or self.attack.size == 0:
            raise MetricError("score set needs both genuine and attack samples")


def spectral_liveness_score(tensor: STRTensor) -> float:
    """Fraction of in-band energy at the cross-region coherent peak.

    Uses the filtered G channel. The peak frequency is located on a
    zero-padded mean power spectrum across regions; each region then
    contributes the energy of the native spectrum bins bracketing that
    frequency, as a fraction of its total in-band energy. Regions with
    no in-band energy contribute 0. A live pulse shared by all regions
    concentrates energy at one frequency and scores near 1; incoherent
    noise spreads it and scores low.
    """
    rows = tensor.channel("G")
    rows = rows - rows.mean(axis=1, keepdims=True)
    n = rows.shape[1]
    fs = tensor.fps

    power = np.abs(np.fft.rfft(rows, axis=1)) ** 2
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    band = (freqs >= PULSE_BAND[0]) & (freqs <= PULSE_BAND[1])
    if not band.any():
        raise MetricError("no spectrum bins inside the pulse band")

    padded = np.abs(np.fft.rfft(rows, n=_PAD_FACTOR * n, axis=1)) ** 2
    pad_freqs = np.fft.rfftfreq(_PAD_FACTOR * n, 1.0 / fs)
    pad_band = (pad_freqs >= PULSE_BAND[0]) & (pad_freqs <= PULSE_BAND[1])
    mean_power = padded.mean(axis=0)
    if mean_power[pad_band].max() == 0:
        return 0.0
    peak_freq = pad_freqs[pad_band][np.argmax(mean_power[pad_band])]

    df = fs / n
    bracket = {int(np.floor(peak_freq / df)), int(np.ceil(peak_freq / df))}
    sel = band & np.isin(np.arange(len(freqs)), sorted(bracket))

    scores = np.zeros(rows.shape[0])
    totals = power[:, band].sum(axis=1)
    nz = totals > 0
    scores[nz] = power[np.ix_(nz, sel)].sum(axis=1) / totals[nz]
    return float(scores.mean())


def majority_vote(decisions) -> int:
    """Per-segment decisions to one video decision; ties go to attack (0)."""
    arr = np.asarray(decisions, dtype=int)
    if arr.size == 0:
        raise MetricError("no decisions to vote on")
    if not np.all(np.isin(arr, (0, 1))):
        raise ValueError("decisions must be 0 or 1")
    ones = int(arr.sum())
    return 1 if ones > arr.size - ones else 0


def _rates(scores: ScoreSet, thresholds: np.ndarray):
    """FAR and FRR at each threshold under the score >= t acceptance rule."""
    gen = np.sort(scores.genuine)
    att = np.sort(scores.attack)
    # attacks accepted: score >= t; genuines rejected: score < t
    far = 1.0 - np.searchsorted(att, thresholds, side="left") / att.size
    frr = np.searchsorted(gen, thresholds, side="left") / gen.size
    return far, frr


def _threshold_grid(scores: ScoreSet) -> np.ndarray:
    uniq = np.unique(scores.scores)
    return np.append(uniq, uniq[-1] + 1.0)  # sentinel: reject everything


def compute_eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and its threshold.

    FAR falls and FRR rises over the swept thresholds; the EER is read
    at their crossing, linearly interpolating between the two adjacent
    sweep points when they do not meet exactly.
    """
    scores.require_both_classes()
    ts = _threshold_grid(scores)
    far, frr = _rates(scores, ts)
    idx = int(np.argmax(frr >= far))  # first crossover; idx 0 only if frr[0] >= far[0]
    if frr[idx] == far[idx]:
        return float(far[idx]), float(ts[idx])
    gap_prev = far[idx - 1] - frr[idx - 1]
    gap_here = frr[idx] - far[idx]
    u = gap_prev / (gap_prev + gap_here)
    eer = far[idx - 1] + u * (far[idx] - far[idx - 1])
    thr = ts[idx - 1] + u * (ts[idx] - ts[idx - 1])
    return float(eer), float(thr)


def compute_hter(dev: ScoreSet, test: ScoreSet) -> float:
    """Half total error rate on ``test`` at the dev-set EER threshold.

    The test set only needs to be non-empty: a missing class contributes
    zero error of its type, which keeps single-class folds (one video
    held out) well-defined.
    """
    dev.require_both_classes()
    if test.scores.size == 0:
        raise MetricError("test set is empty")
    _, thr = compute_eer(dev)
    far = float(np.mean(test.attack >= thr)) if test.attack.size else 0.0
    frr = float(np.mean(test.genuine < thr)) if test.genuine.size else 0.0
    return (far + frr) / 2.0


def compute_auc(scores: ScoreSet) -> float:
    """Area under the ROC curve (rank statistic, ties counted half)."""
    scores.require_both_classes()
    ranks = rankdata(scores.scores)
    n_gen = scores.genuine.size
    n_att = scores.attack.size
    rank_sum = ranks[scores.labels == 1].sum()
    return float((rank_sum - n_gen * (n_gen + 1) / 2.0) / (n_gen * n_att))


def bpcer_at_apcer(dev: ScoreSet, test: ScoreSet, target: float) -> float:
    """Bona-fide error rate on ``test`` at the loosest dev threshold whose
    attack acceptance rate is within ``target``."""
    if not (0.0 < target < 1.0):
        raise ValueError(f"target {target} outside (0, 1)")
    if dev.attack.size == 0:
        raise MetricError("dev set has no attack samples")
    if test.genuine.size == 0:
        raise MetricError("test set has no bona-fide samples")
    ts = _threshold_grid(dev)
    att = np.sort(dev.attack)
    apcer = 1.0 - np.searchsorted(att, ts, side="left") / att.size
    ok = np.nonzero(apcer <= target)[0]
    thr = ts[ok[0]]  # sentinel guarantees at least one qualifying threshold
    return float(np.mean(test.genuine < thr))
