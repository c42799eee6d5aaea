"""Score live and spoofed synthetic videos with the spectral baseline.

Live faces carry a periodic blood-volume signal; replayed or printed
attacks do not. This demo generates a small batch of synthetic videos
with and without an injected pulse, scores every video by the spectral
concentration of its tensor segments, and sweeps the scores into an
equal error rate.
"""

import numpy as np

from pulsestitch import (
    AlignmentPlan,
    FramePlan,
    ScoreSet,
    compute_auc,
    compute_eer,
    spectral_liveness_score,
)
from pulsestitch.harness import SynthSpec, generate_sequence
from pulsestitch.pipeline import sequence_tensors

VIDEOS_PER_CLASS = 6


def ground_truth_plan(ground_truth):
    frames = {
        k: FramePlan(k, None if k == 0 else 0, t, 0.0, 0.0)
        for k, t in enumerate(ground_truth.transforms)
    }
    return AlignmentPlan(template_index=0, frames=frames)


def video_score(index, with_pulse):
    spec = SynthSpec(
        width=64,
        height=64,
        duration=4.1,
        fps=30.0,
        pulse_freq=1.0 + 0.05 * index,
        pulse_amplitude=2.0 if with_pulse else 0.0,
        motion={"kind": "drift", "translation": 1.5, "rotation_deg": 0.5},
        jitter_sigma=0.3,
        texture_seed=200 + 7 * index + int(with_pulse),
    )
    sequence, _, ground_truth = generate_sequence(spec)
    tensors = sequence_tensors(sequence, ground_truth_plan(ground_truth))
    return float(np.mean([spectral_liveness_score(t) for t in tensors]))


def main():
    scores, labels = [], []
    for with_pulse in (True, False):
        kind = "live " if with_pulse else "spoof"
        for i in range(VIDEOS_PER_CLASS):
            score = video_score(i, with_pulse)
            scores.append(score)
            labels.append(int(with_pulse))
            print(f"{kind} video {i}: score {score:.3f}")

    score_set = ScoreSet(scores=np.array(scores), labels=np.array(labels))
    eer, threshold = compute_eer(score_set)
    print(f"EER: {eer:.3f} at threshold {threshold:.3f}, "
          f"AUC: {compute_auc(score_set):.3f}")


if __name__ == "__main__":
    main()
