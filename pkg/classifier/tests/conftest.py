"""Shared fixtures: a byte-level .vmr1 writer and a CLI-built corpus."""

import json
import shutil
import struct
import subprocess
import sys

import numpy as np
import pytest
import torch

from vmrnet import TensorFile, TrainConfig, build_network, load_dir, train


def _write_vmr1(path, data, fps=30.0, segment_start=0, label=None,
                channel_order=()):
    """Write a tensor file straight from the byte layout.

    Deliberately independent of the package reader: magic, rank byte,
    little-endian uint32 dims, C-order float32 payload, uint32 length
    prefix, UTF-8 JSON metadata.
    """
    data = np.ascontiguousarray(data, dtype="<f4")
    meta = {
        "fps": fps,
        "segment_start": segment_start,
        "channel_order": list(channel_order),
    }
    if label is not None:
        meta["label"] = label
    blob = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(b"VMR1")
        fh.write(struct.pack("<B", data.ndim))
        fh.write(struct.pack("<" + "I" * data.ndim, *data.shape))
        fh.write(data.tobytes(order="C"))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


@pytest.fixture
def write_vmr1():
    return _write_vmr1


@pytest.fixture
def make_tensor_dir(tmp_path):
    """Factory writing n random input-shaped tensors into a fresh dir."""

    def _make(n, labels=None, seed=0, shape=(24, 120, 18)):
        rng = np.random.default_rng(seed)
        for i in range(n):
            label = None if labels is None else labels[i]
            _write_vmr1(
                tmp_path / f"segment_{i:06d}.vmr1",
                rng.normal(size=shape),
                segment_start=3 * i,
                label=label,
            )
        return tmp_path

    return _make


@pytest.fixture
def memory_tensors():
    """Factory for in-memory TensorFile lists (no files involved)."""

    def _make(n, labels=None, seed=0, shape=(24, 120, 18)):
        rng = np.random.default_rng(seed)
        return [
            TensorFile(
                data=rng.normal(size=shape).astype(np.float32),
                segment_start=3 * i,
                label=None if labels is None else labels[i],
            )
            for i in range(n)
        ]

    return _make


def run_pipeline(*args, cwd):
    """Invoke the signal-extraction pipeline CLI in a subprocess."""
    proc = subprocess.run(
        [sys.executable, "-m", "pulsestitch.cli", *args],
        cwd=cwd,
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, f"pulsestitch {args[0]} failed: {proc.stderr}"
    return proc


@pytest.fixture(scope="session")
def harness_corpus(tmp_path_factory):
    """Live and spoofed tensors produced end-to-end by the pipeline CLI.

    One pulsed and one pulse-free synthetic video are generated, aligned,
    and exported to labeled .vmr1 segments; a combined ``train`` directory
    holds both videos' segments under distinct names.
    """
    root = tmp_path_factory.mktemp("corpus")
    videos = {"live": (2.0, 1, 99), "spoof": (0.0, 0, 47)}
    for name, (amplitude, label, texture_seed) in videos.items():
        spec = {
            "width": 64,
            "height": 64,
            "duration": 5.0,
            "fps": 30.0,
            "pulse_freq": 1.3,
            "pulse_amplitude": amplitude,
            "motion": {"kind": "drift", "translation": 1.5,
                       "rotation_deg": 0.5},
            "jitter_sigma": 0.3,
            "texture_seed": texture_seed,
        }
        (root / f"{name}.json").write_text(json.dumps(spec))
        run_pipeline("synth", "--spec", f"{name}.json", "--out", name,
                     cwd=root)
        run_pipeline(
            "align",
            "--video", f"{name}/video.vmrv",
            "--annotations", f"{name}/annotations.json",
            "--out", f"{name}_aligned",
            cwd=root,
        )
        run_pipeline(
            "extract",
            "--video", f"{name}/video.vmrv",
            "--plan", f"{name}_aligned/plan.json",
            "--out", f"{name}_tensors",
            "--label", str(label),
            cwd=root,
        )
    train_dir = root / "train"
    train_dir.mkdir()
    for name in videos:
        for path in sorted((root / f"{name}_tensors").glob("*.vmr1")):
            shutil.copy(path, train_dir / f"{name}_{path.name}")
    return root


@pytest.fixture(scope="session")
def fitted(harness_corpus):
    """A network trained once on the corpus, with its history."""
    tensors = load_dir(harness_corpus / "train", require_labels=True)
    torch.manual_seed(0)
    model = build_network()
    history = train(model, tensors, TrainConfig(epochs=20, batch_size=8,
                                                seed=0))
    return model, history
