"""Sequence alignment by stitching through intermediate frames.

Every frame is registered to a template frame, either directly or via a
chain through one intermediate whose own registration is already known.
For frame k the candidate intermediates are all earlier-processed frames
i; the chosen one minimizes

    L(1, k) = L_kp(1, i) + hop_rms(i, k) + landmark_rms(P(1, i) * P(i, k))

where L_kp accumulates per-hop keypoint registration residuals along the
chain and the landmark term anchors the composed transform to the
annotated landmarks of the template. Processing k frames evaluates
exactly k*(k-1)/2 candidates.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .affine import AffineTransform, compose, fit_affine
from .errors import InsufficientCorrespondenceError, StitchingFailureError
from .matching import (
    ACCEPTANCE_RATE,
    RATIO_THRESHOLD,
    SPATIAL_WEIGHT,
    fine_match,
    initial_match,
)

logger = logging.getLogger(__name__)

MIN_FIT_MATCHES = 3


@dataclass
class FrameFeatures:
    """Per-frame matching inputs: keypoints, descriptors, landmarks."""

    positions: np.ndarray  # (m, 2)
    descriptors: np.ndarray  # (m, 128)
    landmarks: np.ndarray | None = None  # (n, 2)
    landmarks_propagated: bool = False

    @classmethod
    def from_keypoints(cls, keypoints, landmarks=None):
        pos = np.array([[k.x, k.y] for k in keypoints], dtype=float).reshape(-1, 2)
        if keypoints:
            desc = np.array([k.descriptor for k in keypoints], dtype=float)
        else:
            desc = np.empty((0, 128))
        lm = None if landmarks is None else np.asarray(landmarks, dtype=float)
        return cls(pos, desc, lm)


@dataclass
class HopResult:
    """Fitted transform and residual for one frame-to-frame hop."""

    transform: AffineTransform | None
    hop_error: float
    match_count: int
    landmark_fit: bool  # transform came from landmarks, not keypoint matches
    zero_match: bool  # no keypoint matches at all; error term is 0

    @property
    def feasible(self) -> bool:
        return self.transform is not None


@dataclass
class FramePlan:
    """Alignment decision for one frame."""

    frame_index: int
    intermediate: int | None  # chosen hop frame; None for the template
    transform: AffineTransform  # maps this frame's coordinates to the template
    keypoint_loss: float
    total_loss: float
    landmark_fit: bool = False
    zero_match: bool = False


@dataclass
class AlignmentPlan:
    """Full-sequence alignment: one FramePlan per frame, template included."""

    template_index: int
    frames: dict[int, FramePlan] = field(default_factory=dict)
    candidate_evaluations: int = 0

    def transform_for(self, frame_index: int) -> AffineTransform:
        return self.frames[frame_index].transform

    def to_json(self) -> str:
        doc = {
            "template_index": self.template_index,
            "candidate_evaluations": self.candidate_evaluations,
            "frames": {
                str(i): {
                    "intermediate": p.intermediate,
                    "transform": p.transform.coeffs(),
                    "keypoint_loss": p.keypoint_loss,
                    "total_loss": p.total_loss,
                    "landmark_fit": p.landmark_fit,
                    "zero_match": p.zero_match,
                }
                for i, p in self.frames.items()
            },
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "AlignmentPlan":
        doc = json.loads(text)
        plan = cls(doc["template_index"], {}, doc.get("candidate_evaluations", 0))
        for key, p in doc["frames"].items():
            idx = int(key)
            plan.frames[idx] = FramePlan(
                idx,
                p["intermediate"],
                AffineTransform.from_coeffs(p["transform"]),
                p["keypoint_loss"],
                p["total_loss"],
                p.get("landmark_fit", False),
                p.get("zero_match", False),
            )
        return plan

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "AlignmentPlan":
        return cls.from_json(Path(path).read_text())


def keypoint_hop_error(query_points, ref_points, transform: AffineTransform) -> float:
    """RMS distance between transformed query keypoints and their matches."""
    q = np.asarray(query_points, dtype=float).reshape(-1, 2)
    r = np.asarray(ref_points, dtype=float).reshape(-1, 2)
    if q.shape[0] == 0:
        raise ValueError("need at least one matched point")
    diff = transform.apply(q) - r
    return float(np.sqrt(np.mean(np.sum(diff**2, axis=1))))


def landmark_error(query_landmarks, ref_landmarks, transform: AffineTransform) -> float:
    """RMS distance between transformed query landmarks and the reference set."""
    return keypoint_hop_error(query_landmarks, ref_landmarks, transform)


def _landmark_transform(src: FrameFeatures, dst: FrameFeatures):
    if src.landmarks is None or dst.landmarks is None:
        return None
    if src.landmarks.shape != dst.landmarks.shape or src.landmarks.shape[0] < 3:
        return None
    try:
        return fit_affine(list(zip(src.landmarks, dst.landmarks)))
    except InsufficientCorrespondenceError:
        return None


def evaluate_hop(
    ref: FrameFeatures,
    query: FrameFeatures,
    ratio_threshold: float = RATIO_THRESHOLD,
    spatial_weight: float = SPATIAL_WEIGHT,
    acceptance_rate: float = ACCEPTANCE_RATE,
) -> HopResult:
    """Match two frames and fit the query-to-reference transform.

    Fewer than MIN_FIT_MATCHES matches (or a degenerate keypoint fit)
    falls back to a landmark fit, keeping whatever matches exist for the
    residual; with no matches at all the residual term is 0 and the hop
    is flagged. No usable fit at all makes the hop infeasible.
    """
    if ref.positions.shape[0] and query.positions.shape[0]:
        matches = initial_match(
            (ref.positions, ref.descriptors),
            (query.positions, query.descriptors),
            ratio_threshold,
        )
        if len(matches) >= 2:
            matches = fine_match(matches, spatial_weight, acceptance_rate)
    else:
        matches = []

    q_pts = query.positions[[m.query_index for m in matches]]
    r_pts = ref.positions[[m.ref_index for m in matches]]

    transform = None
    landmark_fit = False
    if len(matches) >= MIN_FIT_MATCHES:
        try:
            transform = fit_affine(list(zip(q_pts, r_pts)))
        except InsufficientCorrespondenceError:
            transform = None
    if transform is None:
        transform = _landmark_transform(query, ref)
        landmark_fit = True
        if transform is None:
            return HopResult(None, float("inf"), len(matches), True, not matches)

    if len(matches) > 0:
        err = keypoint_hop_error(q_pts, r_pts, transform)
    else:
        err = 0.0
    return HopResult(transform, err, len(matches), landmark_fit, not matches)


def select_template(n_frames: int, mode: str = "first") -> int:
    """Template frame index: 'first' or 'middle' of the sequence."""
    if mode == "first":
        return 0
    if mode == "middle":
        return n_frames // 2
    raise ValueError(f"unknown template mode {mode!r}")


def _dp_chain(features, order, counters, ratio_threshold, spatial_weight, acceptance_rate):
    """Run the stitching recursion over ``order`` (order[0] is the template).

    Returns {original_frame_index: FramePlan}. ``counters`` is a one-item
    list accumulating candidate evaluations.
    """
    plans: dict[int, FramePlan] = {}
    template_idx = order[0]
    # per-position accumulated state, indexed by position in `order`
    kp_loss = [0.0]
    to_template = [AffineTransform.identity()]
    plans[template_idx] = FramePlan(
        template_idx, None, AffineTransform.identity(), 0.0, 0.0
    )
    tmpl_feat = features[template_idx]

    for kpos in range(1, len(order)):
        frame_idx = order[kpos]
        query = features[frame_idx]
        best = None
        for ipos in range(kpos):
            counters[0] += 1
            hop = evaluate_hop(
                features[order[ipos]],
                query,
                ratio_threshold,
                spatial_weight,
                acceptance_rate,
            )
            if not hop.feasible:
                continue
            composed = compose(to_template[ipos], hop.transform)
            if query.landmarks is not None and tmpl_feat.landmarks is not None:
                lm_err = landmark_error(query.landmarks, tmpl_feat.landmarks, composed)
            else:
                lm_err = 0.0
            total = kp_loss[ipos] + hop.hop_error + lm_err
            if best is None or total < best[0]:
                best = (total, ipos, hop, composed)
        if best is None:
            raise StitchingFailureError(frame_idx)
        total, ipos, hop, composed = best
        kp_loss.append(kp_loss[ipos] + hop.hop_error)
        to_template.append(composed)
        plans[frame_idx] = FramePlan(
            frame_idx,
            order[ipos],
            composed,
            kp_loss[-1],
            total,
            hop.landmark_fit,
            hop.zero_match,
        )
    return plans


def propagate_landmarks(features, template_index: int) -> None:
    """Fill missing landmark sets from the nearest annotated frame toward
    the template, flagging the frames that received copies."""
    n = len(features)
    for rng in (range(template_index, n), range(template_index, -1, -1)):
        last = None
        for i in rng:
            if features[i].landmarks is not None and not features[i].landmarks_propagated:
                last = features[i].landmarks
            elif last is not None and features[i].landmarks is None:
                features[i].landmarks = last
                features[i].landmarks_propagated = True
                logger.debug("frame %d: landmarks propagated", i)


def align_sequence_dp(
    features,
    template_index: int | None = None,
    template_mode: str = "first",
    ratio_threshold: float = RATIO_THRESHOLD,
    spatial_weight: float = SPATIAL_WEIGHT,
    acceptance_rate: float = ACCEPTANCE_RATE,
) -> AlignmentPlan:
    """Stitch every frame to the template through chosen intermediates.

    With a middle template the two half-sequences are processed outward
    independently. Raises StitchingFailureError naming the first frame
    with no feasible candidate.
    """
    features = list(features)
    if not features:
        raise ValueError("empty feature sequence")
    if template_index is None:
        template_index = select_template(len(features), template_mode)
    if not (0 <= template_index < len(features)):
        raise ValueError(f"template index {template_index} out of range")

    propagate_landmarks(features, template_index)
    counters = [0]
    forward = list(range(template_index, len(features)))
    backward = list(range(template_index, -1, -1))
    plan = AlignmentPlan(template_index)
    plan.frames.update(
        _dp_chain(features, forward, counters, ratio_threshold, spatial_weight, acceptance_rate)
    )
    if len(backward) > 1:
        plan.frames.update(
            {
                i: p
                for i, p in _dp_chain(
                    features, backward, counters, ratio_threshold, spatial_weight, acceptance_rate
                ).items()
                if i != template_index
            }
        )
    plan.candidate_evaluations = counters[0]
    return plan


def align_sequence_landmarks(features, template_index: int = 0) -> AlignmentPlan:
    """Baseline: fit every frame to the template from landmarks alone."""
    features = list(features)
    propagate_landmarks(features, template_index)
    tmpl = features[template_index]
    if tmpl.landmarks is None:
        raise StitchingFailureError(template_index, "template frame has no landmarks")
    plan = AlignmentPlan(template_index)
    for i, feat in enumerate(features):
        if i == template_index:
            plan.frames[i] = FramePlan(i, None, AffineTransform.identity(), 0.0, 0.0)
            continue
        t = _landmark_transform(feat, tmpl)
        if t is None:
            raise StitchingFailureError(i, f"frame {i} has no usable landmarks")
        err = landmark_error(feat.landmarks, tmpl.landmarks, t)
        plan.frames[i] = FramePlan(i, template_index, t, err, err, True)
    return plan
