"""Inference: per-segment genuine confidences and the video-level vote.

Scores use the shared CSV schema ``video_id,segment,score,label`` so the
signal-extraction pipeline's ``eval`` command can consume them directly.
The video decision is the majority vote of per-segment decisions, with
ties counted as an attack.
"""

from __future__ import annotations

import csv
from pathlib import Path

import torch

from .errors import FormatError
from .network import VmrNet
from .tensors import INPUT_SHAPE, TensorFile, as_batch


def segment_scores(model: VmrNet, tensors: list[TensorFile]) -> list[float]:
    """Softmax genuine confidence (class 1) for every segment, in order."""
    if not tensors:
        raise FormatError("no tensors to score")
    for t in tensors:
        if t.data.shape != INPUT_SHAPE:
            raise FormatError(
                f"{t.path}: shape {t.data.shape}, expected {INPUT_SHAPE}"
            )
    model.eval()
    with torch.no_grad():
        confidences = model.confidences(torch.from_numpy(as_batch(tensors)))
    return [float(c[1]) for c in confidences]


def video_decision(scores: list[float]) -> int:
    """Majority vote of per-segment decisions; a tie counts as an attack."""
    genuine_votes = sum(1 for s in scores if s > 0.5)
    return int(genuine_votes * 2 > len(scores))


def write_scores_csv(path, video_id: str, tensors: list[TensorFile],
                     scores: list[float]) -> None:
    """Write the segment scores in the shared evaluation schema."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "segment", "score", "label"])
        for tensor, score in zip(tensors, scores):
            label = "" if tensor.label is None else tensor.label
            writer.writerow([video_id, tensor.segment_start, score, label])
