"""Training loop: two-term cross entropy, SGD with step decay.

The per-sample loss sums, over BOTH classes, the binary cross entropy
of the softmax confidence against the one-hot label:

    l_i = -sum_j [ y_ij log u_ij + (1 - y_ij) log(1 - u_ij) ].

Because the two confidences come from a softmax they sum to one, so the
off-class term log(1 - u_other) equals log(u_true) and the sum is
exactly twice the plain cross entropy. It is computed in that reduced
form through log-softmax, which is numerically stable at saturated
confidences. A batch's training loss is the mean of its samples'
losses, so the fixed schedule - SGD with momentum 0.9, learning
rate 0.1 decayed to 10% every 4 epochs, L2 penalty 5e-4 - is
independent of the batch size. The reported epoch loss is the sum over
all samples.

Accuracy is measured in inference mode after every epoch. While the
weights are moving fast the normalization layers' running estimates
trail far behind the statistics the weights were actually fitted
against, so they are re-estimated with a cumulative pass over the
training data before each measurement.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import DataError
from .network import NetworkSpec, VmrNet, build_network
from .tensors import TensorFile, as_batch


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; every value must be positive."""

    lr: float = 0.1
    lr_decay: float = 0.1
    decay_every: int = 4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 8
    epochs: int = 20
    seed: int = 0

    def validate(self) -> None:
        numeric = {
            "lr": self.lr,
            "lr_decay": self.lr_decay,
            "decay_every": self.decay_every,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
        }
        for name, value in numeric.items():
            if value <= 0:
                raise DataError(f"{name} must be positive, got {value}")


def sample_losses(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Two-term cross entropy per sample (both class terms summed).

    With two softmax confidences the off-class binary term collapses
    onto the true-class one, so each sample costs -2 log u_true.
    """
    log_probs = torch.log_softmax(logits, dim=1)
    return -2.0 * log_probs[torch.arange(len(labels)), labels]


def class_confidence_loss(logits: torch.Tensor,
                          labels: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of the per-sample two-term cross entropy."""
    return sample_losses(logits, labels).mean()


def recalibrate_batch_stats(model: VmrNet, inputs: torch.Tensor,
                            batch_size: int) -> None:
    """Re-estimate normalization running statistics for current weights.

    The exponential estimates lag when the weights move quickly, so
    inference-mode predictions misstate what the fitted model does.
    A cumulative pass over the data replaces them outright.
    """
    batches = [inputs[i : i + batch_size]
               for i in range(0, len(inputs), batch_size)]
    torch.optim.swa_utils.update_bn(batches, model)


def train(
    model: VmrNet,
    tensors: list[TensorFile],
    cfg: TrainConfig | None = None,
) -> dict:
    """Fit the model on labeled tensors; returns the per-epoch history.

    Deterministic for a fixed config seed: initialization is the
    caller's, batch order is a seeded permutation per epoch.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    if not tensors:
        raise DataError("no training tensors")
    for t in tensors:
        if t.label is None:
            raise DataError(f"{t.path}: tensor carries no label")

    inputs = torch.from_numpy(as_batch(tensors))
    labels = torch.tensor([t.label for t in tensors], dtype=torch.long)

    optimizer = torch.optim.SGD(
        model.parameters(),
        lr=cfg.lr,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
    )
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=cfg.decay_every, gamma=cfg.lr_decay
    )

    rng = np.random.default_rng(cfg.seed)
    history = {"loss": [], "accuracy": [], "lr": []}
    model.train()
    for _ in range(cfg.epochs):
        order = rng.permutation(len(tensors))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = torch.from_numpy(order[start : start + cfg.batch_size])
            optimizer.zero_grad()
            logits = model(inputs[batch])
            loss = class_confidence_loss(logits, labels[batch])
            loss.backward()
            optimizer.step()
            epoch_loss += loss.item() * len(batch)
        history["lr"].append(optimizer.param_groups[0]["lr"])
        scheduler.step()

        recalibrate_batch_stats(model, inputs, cfg.batch_size)
        model.eval()
        with torch.no_grad():
            predicted = model(inputs).argmax(dim=1)
        model.train()
        history["loss"].append(epoch_loss)
        history["accuracy"].append(float((predicted == labels).float().mean()))
        if history["accuracy"][-1] == 1.0:
            break
    model.eval()
    return history


def save_checkpoint(model: VmrNet, cfg: TrainConfig, history: dict,
                    path) -> None:
    """Write weights + config + history; the file is moved into place whole."""
    path = Path(path)
    payload = {
        "state_dict": model.state_dict(),
        "train_config": asdict(cfg),
        "history": history,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path) -> tuple[VmrNet, dict]:
    """Rebuild the model from a checkpoint; returns (model, history)."""
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    model = build_network(NetworkSpec())
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload.get("history", {})


def history_json(history: dict) -> str:
    return json.dumps(history, indent=1)
