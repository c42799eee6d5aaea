"""Recover a faint pulse from a moving synthetic face video.

A 1.2 Hz brightness oscillation (about 2/255 peak) is injected into the
vessel-dense rows of a drifting, jittering synthetic face. The demo runs
the full chain — feature extraction, stitched alignment, warping, region
traces, resampling, band-pass filtering — and reports the pulse SNR, side
by side with the same chain driven by the noisy landmarks alone.
"""

import numpy as np

from pulsestitch import (
    align_sequence_dp,
    align_sequence_landmarks,
    bandpass_filter,
    pulse_snr,
    resample_to_30fps,
)
from pulsestitch.harness import SynthSpec, generate_sequence
from pulsestitch.pipeline import (
    extract_channel_traces,
    extract_frame_features,
    render_aligned,
)

PULSE_FREQ = 1.2     # Hz, i.e. 72 beats per minute
PULSE_AMPLITUDE = 2.0  # gray levels out of 255
SEED = 23


def green_snr(sequence, plan):
    """Mean per-region pulse SNR of the green channel for one alignment."""
    stack, valid = render_aligned(sequence, plan)
    raw = extract_channel_traces(stack, valid, sequence.face_box)
    green = raw[1]
    snrs = []
    for row in green:
        filtered = bandpass_filter(resample_to_30fps((row, sequence.fps)))
        snrs.append(pulse_snr(filtered, PULSE_FREQ))
    return float(np.mean(snrs))


def main():
    spec = SynthSpec(
        width=128,
        height=128,
        duration=10.0,
        fps=30.0,
        pulse_freq=PULSE_FREQ,
        pulse_amplitude=PULSE_AMPLITUDE,
        motion={"kind": "drift", "translation": 2.0, "rotation_deg": 1.0},
        jitter_sigma=0.5,
        annotation_noise_sigma=1.0,
        texture_seed=SEED,
    )
    print(f"injecting a {PULSE_FREQ} Hz pulse at {PULSE_AMPLITUDE}/255 amplitude")
    sequence, annotations, _ = generate_sequence(spec)
    features = extract_frame_features(sequence, annotations)

    stitched = align_sequence_dp(features)
    landmark_only = align_sequence_landmarks(features, 0)

    landmark_snr = green_snr(sequence, landmark_only)
    stitched_snr = green_snr(sequence, stitched)

    print(f"landmark-only pulse SNR: {landmark_snr:6.2f} dB")
    print(f"stitched pulse SNR:      {stitched_snr:6.2f} dB")
    print(f"stitching gains {stitched_snr - landmark_snr:.2f} dB")


if __name__ == "__main__":
    main()
