"""Keypoint matching between a reference and a query frame.

Two stages: a ratio-tested nearest-neighbor pass over a fused
feature/spatial distance, then a statistical refinement that keeps the
matches whose distances sit closest to the fitted distance distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

RATIO_THRESHOLD = 0.6
SPATIAL_WEIGHT = 3.0
ACCEPTANCE_RATE = 0.5


@dataclass(frozen=True)
class MatchPair:
    """One accepted correspondence, with its normalized distances."""

    ref_index: int
    query_index: int
    d_feature: float
    d_spatial: float

    @property
    def d_fused(self) -> float:
        return math.sqrt(self.d_feature + self.d_spatial)


@dataclass(frozen=True)
class MatchStats:
    """Distance distribution fitted over an initial match set."""

    mu_feature: float
    sigma_feature: float
    mu_spatial: float
    sigma_spatial: float


def normalize_distances(raw_feature, raw_spatial):
    """Scale each distance list by its own maximum (all-zero stays zero)."""
    rf = np.asarray(raw_feature, dtype=float)
    rs = np.asarray(raw_spatial, dtype=float)
    if np.any(rf < 0) or np.any(rs < 0):
        raise ValueError("distances must be non-negative")
    fmax = rf.max() if rf.size else 0.0
    smax = rs.max() if rs.size else 0.0
    nf = rf / fmax if fmax > 0 else rf
    ns = rs / smax if smax > 0 else rs
    return nf, ns


def fused_distance(d_feature, d_spatial):
    """Combined match distance sqrt(d_feature + d_spatial)."""
    return np.sqrt(np.asarray(d_feature, dtype=float) + np.asarray(d_spatial, dtype=float))


def _as_arrays(keypoints):
    if isinstance(keypoints, tuple):
        pos, desc = keypoints
        return np.asarray(pos, dtype=float), np.asarray(desc, dtype=float)
    pos = np.array([[k.x, k.y] for k in keypoints], dtype=float)
    desc = np.array([k.descriptor for k in keypoints], dtype=float)
    return pos, desc


def _distance_matrices(ref_pos, ref_desc, qry_pos, qry_desc):
    # descriptor euclidean distances via the expanded-square identity
    cross = ref_desc @ qry_desc.T
    sq = (
        np.sum(ref_desc**2, axis=1)[:, None]
        + np.sum(qry_desc**2, axis=1)[None, :]
        - 2.0 * cross
    )
    d_feat = np.sqrt(np.maximum(sq, 0.0))
    diff = ref_pos[:, None, :] - qry_pos[None, :, :]
    d_spat = np.sqrt(np.sum(diff**2, axis=2))
    return d_feat, d_spat


def initial_match(ref_keypoints, query_keypoints, ratio_threshold: float = RATIO_THRESHOLD):
    """Ratio-tested nearest-neighbor matching on the fused distance.

    Both raw distance matrices are normalized by their global maxima
    before fusing. A reference keypoint matches its nearest query
    neighbor when the fused distance is at most ``ratio_threshold``
    times the second-nearest; with a single query keypoint the ratio
    test is skipped and the match is accepted iff its fused distance is
    at most ``ratio_threshold``. Conflicting matches to one query
    keypoint are resolved by keeping the smallest fused distance.

    Parameters
    ----------
    ref_keypoints, query_keypoints : list of Keypoint, or (positions, descriptors)
    ratio_threshold : float in (0, 1]

    Returns matches ordered by reference index.
    """
    if not (0.0 < ratio_threshold <= 1.0):
        raise ValueError(f"ratio_threshold {ratio_threshold} outside (0, 1]")
    ref_pos, ref_desc = _as_arrays(ref_keypoints)
    qry_pos, qry_desc = _as_arrays(query_keypoints)
    if ref_pos.shape[0] == 0 or qry_pos.shape[0] == 0:
        raise ValueError("both keypoint sets must be non-empty")

    d_feat_raw, d_spat_raw = _distance_matrices(ref_pos, ref_desc, qry_pos, qry_desc)
    fmax = d_feat_raw.max()
    smax = d_spat_raw.max()
    d_feat = d_feat_raw / fmax if fmax > 0 else d_feat_raw
    d_spat = d_spat_raw / smax if smax > 0 else d_spat_raw
    d_fused = np.sqrt(d_feat + d_spat)

    n_ref, n_qry = d_fused.shape
    candidates = []
    for i in range(n_ref):
        row = d_fused[i]
        if n_qry == 1:
            if row[0] <= ratio_threshold:
                candidates.append((row[0], i, 0))
            continue
        j1, j2 = np.argpartition(row, 1)[:2]
        if row[j1] > row[j2]:
            j1, j2 = j2, j1
        if row[j1] <= ratio_threshold * row[j2]:
            candidates.append((row[j1], i, int(j1)))

    # one-to-one: smaller fused distance wins a contested query keypoint
    candidates.sort(key=lambda c: (c[0], c[1]))
    taken_q: set[int] = set()
    kept = []
    for dist, i, j in candidates:
        if j in taken_q:
            continue
        taken_q.add(j)
        kept.append(MatchPair(i, j, float(d_feat[i, j]), float(d_spat[i, j])))
    kept.sort(key=lambda m: m.ref_index)
    return kept


def fit_match_stats(matches) -> MatchStats:
    """Mean and population std of the match distance distributions."""
    if len(matches) < 2:
        raise ValueError("need at least 2 matches to fit distance statistics")
    df = np.array([m.d_feature for m in matches])
    ds = np.array([m.d_spatial for m in matches])
    return MatchStats(
        float(df.mean()), float(df.std()), float(ds.mean()), float(ds.std())
    )


def match_score(d_feature, d_spatial, stats: MatchStats, spatial_weight: float = SPATIAL_WEIGHT):
    """Joint Gaussian log-score of a match under fitted distance statistics.

    A zero-variance term contributes 0 for every match.
    """
    score = 0.0
    if stats.sigma_feature > 0:
        score -= (d_feature - stats.mu_feature) ** 2 / (2 * stats.sigma_feature**2)
    if stats.sigma_spatial > 0:
        score -= (
            spatial_weight
            * (d_spatial - stats.mu_spatial) ** 2
            / (2 * stats.sigma_spatial**2)
        )
    return score


def fine_match(
    matches,
    spatial_weight: float = SPATIAL_WEIGHT,
    acceptance_rate: float = ACCEPTANCE_RATE,
):
    """Keep the ceil(acceptance_rate * n) best-scoring matches.

    Scores come from ``match_score`` with statistics fitted on the input
    set. Output is ordered by descending score, ties broken by ascending
    reference index.
    """
    if len(matches) < 2:
        raise ValueError("need at least 2 initial matches")
    if not (0.0 < acceptance_rate <= 1.0):
        raise ValueError(f"acceptance_rate {acceptance_rate} outside (0, 1]")
    if spatial_weight < 0:
        raise ValueError("spatial_weight must be non-negative")
    stats = fit_match_stats(matches)
    scores = np.array(
        [match_score(m.d_feature, m.d_spatial, stats, spatial_weight) for m in matches]
    )
    ref_idx = np.array([m.ref_index for m in matches])
    order = np.lexsort((ref_idx, -scores))
    keep = math.ceil(acceptance_rate * len(matches))
    return [matches[i] for i in order[:keep]]


def match_keypoints(
    ref_keypoints,
    query_keypoints,
    ratio_threshold: float = RATIO_THRESHOLD,
    spatial_weight: float = SPATIAL_WEIGHT,
    acceptance_rate: float = ACCEPTANCE_RATE,
):
    """Full two-stage matching; falls back to the initial set when it is
    too small for statistics fitting."""
    first = initial_match(ref_keypoints, query_keypoints, ratio_threshold)
    if len(first) < 2:
        return first
    return fine_match(first, spatial_weight, acceptance_rate)
