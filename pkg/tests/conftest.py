import numpy as np
import pytest

from pulsestitch import SynthSpec, generate_sequence


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_sequence():
    """A short drifting sequence with annotations, shared across tests."""
    spec = SynthSpec(
        width=96,
        height=96,
        duration=0.5,
        fps=30.0,
        pulse_amplitude=0.0,
        motion={"kind": "ramp", "dx": 0.4, "dy": 0.25},
        jitter_sigma=0.0,
        texture_seed=7,
    )
    return generate_sequence(spec)
