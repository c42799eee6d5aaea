"""Acceptance gate: end-to-end behavioral contract for the pipeline.

Each test pins one externally observable guarantee of the assembled system
— planning fidelity, alignment accuracy, signal recovery, filter response,
tensor layout, metric correctness, liveness discrimination, and matching
quality — with fixed tolerances. Oracles are kept self-contained in this
file (exhaustive enumeration and threshold sweeps) so the gate does not
depend on any implementation shortcut it is meant to check.
"""

from __future__ import annotations

import time

import numpy as np
import pytest
from numpy.random import default_rng

from pulsestitch import (
    AffineTransform,
    AlignmentPlan,
    FramePlan,
    ScoreSet,
    align_sequence_dp,
    align_sequence_landmarks,
    bandpass_filter,
    bpcer_at_apcer,
    build_str_tensors,
    compose,
    compute_auc,
    compute_eer,
    compute_hter,
    evaluate_hop,
    initial_match,
    landmark_error,
    propagate_landmarks,
    pulse_snr,
    read_str_tensor,
    resample_to_30fps,
    spectral_liveness_score,
    write_str_tensor,
)
from pulsestitch.harness import SynthSpec, alignment_residual, generate_sequence
from pulsestitch.pipeline import (
    extract_channel_traces,
    extract_frame_features,
    render_aligned,
    sequence_tensors,
)
from pulsestitch.representation import SEGMENT_LEN, SEGMENT_STRIDE, TENSOR_SHAPE

# ---------------------------------------------------------------------------
# Self-contained oracles
# ---------------------------------------------------------------------------


def enumeration_oracle(features, template_index=0):
    """Plan every frame by exhaustively scoring all earlier intermediates.

    Direct transcription of the recursive definition: the template costs
    nothing, and each later frame tries every already-planned frame as its
    hop source, accumulating keypoint loss down the chain and adding the
    landmark residual of the composed projection. Ties keep the earliest
    candidate, mirroring a strict less-than argmin.
    """
    features = list(features)
    propagate_landmarks(features, template_index)
    order = list(range(template_index, len(features)))
    tmpl = features[template_index]
    kp_loss = [0.0]
    to_template = [AffineTransform.identity()]
    plans = {
        template_index: FramePlan(
            template_index, None, AffineTransform.identity(), 0.0, 0.0
        )
    }
    evaluations = 0
    for kpos in range(1, len(order)):
        frame_idx = order[kpos]
        query = features[frame_idx]
        best = None
        for ipos in range(kpos):
            evaluations += 1
            hop = evaluate_hop(features[order[ipos]], query)
            if not hop.feasible:
                continue
            composed = compose(to_template[ipos], hop.transform)
            if query.landmarks is not None and tmpl.landmarks is not None:
                lm_err = landmark_error(query.landmarks, tmpl.landmarks, composed)
            else:
                lm_err = 0.0
            total = kp_loss[ipos] + hop.hop_error + lm_err
            if best is None or total < best[0]:
                best = (total, ipos, hop, composed)
        assert best is not None, f"frame {frame_idx} unreachable"
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
    return plans, evaluations


def _loop_rates(genuine, attack, threshold):
    """FAR/FRR at a threshold, counted one score at a time."""
    far = sum(1 for s in attack if s >= threshold) / len(attack) if len(attack) else 0.0
    frr = sum(1 for s in genuine if s < threshold) / len(genuine) if len(genuine) else 0.0
    return far, frr


def eer_sweep_oracle(genuine, attack):
    """Equal error rate by exhaustive threshold sweep.

    Sweeps every distinct score plus a top sentinel, finds the first
    threshold where FRR >= FAR, and linearly interpolates the crossing
    between that sweep point and its predecessor.
    """
    genuine = np.sort(np.asarray(genuine, dtype=float))
    attack = np.sort(np.asarray(attack, dtype=float))
    thresholds = np.unique(np.concatenate([genuine, attack]))
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)
    prev_far, prev_frr, prev_thr = 1.0, 0.0, thresholds[0]
    for thr in thresholds:
        far, frr = _loop_rates(genuine, attack, thr)
        if frr >= far:
            if frr == far:
                return far, float(thr)
            gap0 = prev_far - prev_frr
            gap1 = frr - far
            u = gap0 / (gap0 + gap1)
            eer = prev_far + u * (far - prev_far)
            return float(eer), float(prev_thr + u * (thr - prev_thr))
        prev_far, prev_frr, prev_thr = far, frr, thr
    return 0.0, float(thresholds[-1])


def auc_trapezoid_oracle(genuine, attack):
    """ROC area by trapezoid rule over the exhaustive threshold sweep."""
    scores = np.unique(np.concatenate([genuine, attack]))
    points = [(0.0, 0.0)]
    for thr in scores[::-1]:
        far, frr = _loop_rates(genuine, attack, thr)
        points.append((far, 1.0 - frr))
    points.append((1.0, 1.0))
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return float(area)


def bpcer_sweep_oracle(dev_genuine, dev_attack, test_genuine, test_attack, target):
    """BPCER at an attack-error budget, threshold fixed on the dev sweep.

    Chooses the lowest threshold whose dev APCER is within the target
    (falling back to the sentinel above all scores) and counts the test
    genuine rejections at that operating point.
    """
    thresholds = np.unique(np.concatenate([dev_genuine, dev_attack]))
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)
    chosen = thresholds[-1]
    for thr in thresholds:
        apcer, _ = _loop_rates(dev_genuine, dev_attack, thr)
        if apcer <= target:
            chosen = thr
            break
    _, bpcer = _loop_rates(test_genuine, test_attack, chosen)
    return float(bpcer)


def ground_truth_plan(ground_truth):
    """Wrap the generator's per-frame true projections as an alignment plan."""
    frames = {
        k: FramePlan(k, None if k == 0 else 0, t, 0.0, 0.0)
        for k, t in enumerate(ground_truth.transforms)
    }
    return AlignmentPlan(template_index=0, frames=frames)


def plans_equal(a: FramePlan, b: FramePlan) -> bool:
    return (
        a.frame_index == b.frame_index
        and a.intermediate == b.intermediate
        and a.transform.coeffs() == b.transform.coeffs()
        and a.keypoint_loss == b.keypoint_loss
        and a.total_loss == b.total_loss
        and a.landmark_fit == b.landmark_fit
        and a.zero_match == b.zero_match
    )


def mean_green_snr(seq, plan, pulse_freq):
    """Mean per-row pulse SNR of the green channel after the standard chain."""
    stack, valid = render_aligned(seq, plan)
    raw = extract_channel_traces(stack, valid, seq.face_box)
    green = raw[1]
    snrs = []
    for row in green:
        filtered = bandpass_filter(resample_to_30fps((row, seq.fps)))
        snrs.append(pulse_snr(filtered, pulse_freq))
    return float(np.mean(snrs))


# ---------------------------------------------------------------------------
# 1. Planning fidelity: DP equals exhaustive enumeration, term for term
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("seed", [11, 41])
def test_dp_plan_matches_enumeration_oracle_exactly(seed):
    spec = SynthSpec(
        width=64,
        height=64,
        duration=10 / 30.0,
        fps=30.0,
        pulse_amplitude=0.0,
        motion={"kind": "drift", "translation": 1.5, "rotation_deg": 0.5},
        jitter_sigma=0.3,
        annotation_noise_sigma=0.5,
        texture_seed=seed,
    )
    sequence, annotations, _ = generate_sequence(spec)
    features = extract_frame_features(sequence, annotations)

    start = time.monotonic()
    plan = align_sequence_dp(features)
    elapsed = time.monotonic() - start

    oracle_plans, oracle_evaluations = enumeration_oracle(features)

    assert elapsed < 5.0
    assert oracle_evaluations == 10 * 9 // 2
    assert plan.candidate_evaluations == oracle_evaluations
    assert set(plan.frames) == set(oracle_plans)
    for index in range(10):
        assert plans_equal(plan.frames[index], oracle_plans[index]), index


# ---------------------------------------------------------------------------
# 2. Alignment accuracy under sub-pixel jitter and noisy annotations
# ---------------------------------------------------------------------------


def test_stitched_alignment_beats_landmarks_below_half_pixel():
    spec = SynthSpec(
        width=128,
        height=128,
        duration=200 / 30.0,
        fps=30.0,
        pulse_amplitude=0.0,
        motion={"kind": "drift", "translation": 2.0, "rotation_deg": 1.0},
        jitter_sigma=0.5,
        annotation_noise_sigma=1.0,
        texture_seed=23,
    )
    sequence, annotations, gt_transforms = generate_sequence(spec)
    assert len(sequence) == 200
    features = extract_frame_features(sequence, annotations)

    start = time.monotonic()
    stitched = align_sequence_dp(features)
    elapsed = time.monotonic() - start
    landmark_only = align_sequence_landmarks(features, 0)

    stitched_res = alignment_residual(stitched, gt_transforms, sequence.face_box)
    landmark_res = alignment_residual(landmark_only, gt_transforms, sequence.face_box)

    assert elapsed < 60.0
    assert stitched.candidate_evaluations == 200 * 199 // 2
    assert stitched_res["mean"] < 0.5
    assert stitched_res["mean"] < landmark_res["mean"]


# ---------------------------------------------------------------------------
# 3. Pulse recovery: injected tone survives stitching + bandpass
# ---------------------------------------------------------------------------


def test_injected_pulse_recovered_above_10db_and_3db_over_landmarks():
    spec = SynthSpec(
        width=128,
        height=128,
        duration=10.0,
        fps=30.0,
        pulse_freq=1.2,
        pulse_amplitude=2.0,
        motion={"kind": "drift", "translation": 2.0, "rotation_deg": 1.0},
        jitter_sigma=0.5,
        annotation_noise_sigma=1.0,
        texture_seed=23,
    )
    sequence, annotations, _ = generate_sequence(spec)
    assert len(sequence) == 300
    features = extract_frame_features(sequence, annotations)

    stitched = align_sequence_dp(features)
    landmark_only = align_sequence_landmarks(features, 0)

    stitched_snr = mean_green_snr(sequence, stitched, spec.pulse_freq)
    landmark_snr = mean_green_snr(sequence, landmark_only, spec.pulse_freq)

    assert stitched_snr >= 10.0
    assert stitched_snr >= landmark_snr + 3.0


# ---------------------------------------------------------------------------
# 4. Filter contract: passband flat, stopbands down 20 dB, zero phase
# ---------------------------------------------------------------------------


def _steady_state_gain(freq_hz, fps=30.0, n=300):
    t = np.arange(n) / fps
    x = np.sin(2 * np.pi * freq_hz * t)
    y = bandpass_filter(x, fps=fps)
    core = slice(n // 5, -n // 5)
    return float(
        np.sqrt(np.mean(y[core] ** 2)) / np.sqrt(np.mean(x[core] ** 2))
    )


def test_bandpass_gain_and_attenuation_contract():
    assert 0.85 <= _steady_state_gain(1.5) <= 1.0
    # >= 20 dB down means the amplitude ratio is at most 0.1.
    assert _steady_state_gain(0.2) <= 0.1
    assert _steady_state_gain(5.0) <= 0.1


def test_bandpass_is_zero_phase_at_passband_center():
    fps, n = 30.0, 300
    t = np.arange(n) / fps
    x = np.sin(2 * np.pi * 1.5 * t)
    y = bandpass_filter(x, fps=fps)
    core = slice(n // 5, -n // 5)
    xc, yc = x[core], y[core]
    correlation = np.correlate(yc - yc.mean(), xc - xc.mean(), mode="full")
    lag = int(np.argmax(correlation)) - (len(xc) - 1)
    assert lag == 0


# ---------------------------------------------------------------------------
# 5. Tensor contract: fixed shape, stride-3 segmentation, file round-trip
# ---------------------------------------------------------------------------


def test_every_exported_tensor_has_contract_shape(tmp_path):
    rng = default_rng(5)
    traces = rng.uniform(0.0, 1.0, size=(9, 24, 300))
    tensors = build_str_tensors(traces, fps=30.0)

    assert len(tensors) == 61
    assert [t.segment_start for t in tensors] == list(range(0, 181, SEGMENT_STRIDE))
    assert SEGMENT_LEN == 120 and TENSOR_SHAPE == (24, 120, 18)
    for tensor in tensors:
        assert tensor.data.shape == TENSOR_SHAPE

    for tensor in tensors:
        path = tmp_path / f"segment_{tensor.segment_start:06d}.vmr1"
        write_str_tensor(tensor, path)
        loaded = read_str_tensor(path)
        assert loaded.data.shape == TENSOR_SHAPE
    # Files hold float32 payloads, so the round-trip is exact at that width.
    first = read_str_tensor(tmp_path / "segment_000000.vmr1")
    np.testing.assert_array_equal(first.data, tensors[0].data.astype(np.float32))


# ---------------------------------------------------------------------------
# 6. Metric fidelity: closed forms equal the exhaustive sweep oracles
# ---------------------------------------------------------------------------


def test_metrics_match_sweep_oracles_on_200_random_scores():
    rng = default_rng(777)
    genuine = rng.normal(0.5, 1.0, size=100)
    attack = rng.normal(-0.5, 1.0, size=100)
    scores = ScoreSet(
        scores=np.concatenate([genuine, attack]),
        labels=np.concatenate([np.ones(100, dtype=int), np.zeros(100, dtype=int)]),
    )

    eer, threshold = compute_eer(scores)
    oracle_eer, oracle_threshold = eer_sweep_oracle(genuine, attack)
    assert eer == pytest.approx(oracle_eer, abs=1e-9)
    assert threshold == pytest.approx(oracle_threshold, abs=1e-9)

    assert compute_auc(scores) == pytest.approx(
        auc_trapezoid_oracle(genuine, attack), abs=1e-9
    )

    dev = ScoreSet(
        scores=np.concatenate([genuine[:50], attack[:50]]),
        labels=np.concatenate([np.ones(50, dtype=int), np.zeros(50, dtype=int)]),
    )
    test = ScoreSet(
        scores=np.concatenate([genuine[50:], attack[50:]]),
        labels=np.concatenate([np.ones(50, dtype=int), np.zeros(50, dtype=int)]),
    )
    _, dev_threshold = eer_sweep_oracle(genuine[:50], attack[:50])
    far, frr = _loop_rates(genuine[50:], attack[50:], dev_threshold)
    assert compute_hter(dev, test) == pytest.approx((far + frr) / 2.0, abs=1e-9)

    for target in (0.01, 0.05, 0.1):
        oracle_bpcer = bpcer_sweep_oracle(
            genuine[:50], attack[:50], genuine[50:], attack[50:], target
        )
        assert bpcer_at_apcer(dev, test, target) == pytest.approx(
            oracle_bpcer, abs=1e-9
        )


def test_metric_trivial_cases_are_exact():
    separable = ScoreSet(
        scores=np.array([0.9, 0.8, 0.7, 0.2, 0.1, 0.0]),
        labels=np.array([1, 1, 1, 0, 0, 0]),
    )
    eer, _ = compute_eer(separable)
    assert eer == 0.0
    assert compute_auc(separable) == 1.0

    tied = ScoreSet(
        scores=np.full(6, 0.5),
        labels=np.array([1, 1, 1, 0, 0, 0]),
    )
    eer, _ = compute_eer(tied)
    assert eer == 0.5
    assert compute_auc(tied) == 0.5


# ---------------------------------------------------------------------------
# 7. Liveness baseline: pulse and no-pulse videos separate perfectly
# ---------------------------------------------------------------------------


def test_spectral_scores_separate_pulse_from_no_pulse_with_zero_eer():
    scores, labels = [], []
    for label in (1, 0):
        for i in range(20):
            spec = SynthSpec(
                width=64,
                height=64,
                duration=4.1,
                fps=30.0,
                pulse_freq=1.0 + 0.05 * i,
                pulse_amplitude=2.0 if label else 0.0,
                motion={"kind": "drift", "translation": 1.5, "rotation_deg": 0.5},
                jitter_sigma=0.3,
                texture_seed=100 + 7 * i + label,
            )
            sequence, _, gt_transforms = generate_sequence(spec)
            tensors = sequence_tensors(sequence, ground_truth_plan(gt_transforms))
            scores.append(
                float(np.mean([spectral_liveness_score(t) for t in tensors]))
            )
            labels.append(label)

    eer, _ = compute_eer(ScoreSet(scores=np.array(scores), labels=np.array(labels)))
    assert eer == 0.0


# ---------------------------------------------------------------------------
# 8. Matching quality against a brute-force nearest-neighbor oracle
# ---------------------------------------------------------------------------


def test_keypoint_matching_agrees_with_bruteforce_oracle():
    rng = default_rng(2024)
    n_points, desc_dim = 50, 128

    ref_pos = rng.uniform(10.0, 110.0, size=(n_points, 2))
    ref_desc = np.eye(n_points, desc_dim)
    ref_desc /= np.linalg.norm(ref_desc, axis=1, keepdims=True)

    query_pos = ref_pos + np.array([2.0, 1.0])
    query_desc = ref_desc + rng.normal(0.0, 0.01, size=ref_desc.shape)
    query_desc /= np.linalg.norm(query_desc, axis=1, keepdims=True)

    matches = initial_match((ref_pos, ref_desc), (query_pos, query_desc))

    # Brute-force oracle: fuse normalized descriptor and spatial distances,
    # then take the nearest reference for every query.
    d_feat = np.linalg.norm(
        ref_desc[:, None, :] - query_desc[None, :, :], axis=2
    )
    d_spat = np.linalg.norm(ref_pos[:, None, :] - query_pos[None, :, :], axis=2)
    fused = np.sqrt(d_feat / d_feat.max() + d_spat / d_spat.max())
    oracle_nn = fused.argmin(axis=0)

    assert len(matches) >= int(0.9 * n_points)
    agree = sum(1 for m in matches if oracle_nn[m.query_index] == m.ref_index)
    correct = sum(1 for m in matches if m.ref_index == m.query_index)
    assert agree >= int(0.9 * len(matches))
    assert correct >= int(0.9 * n_points)
