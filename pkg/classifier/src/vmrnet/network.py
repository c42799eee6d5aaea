"""The lightweight EfficientNet-with-GRU tensor classifier.

The architecture is a fixed eight-stage schedule over ``(24, 120, 18)``
region-by-time tensors: a 3x3 stem, five mobile-inverted-bottleneck
stages with squeeze-and-excitation, a two-layer GRU that consumes one
feature column per time step, and a 1x1-conv + pooling + linear head
emitting two class confidences (attack, genuine).

Stage resolutions name the stage *output*; the time axis (width, 120
samples) and the region axis (height, 24 rows) are halved together by
the stride-2 stages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import SpecError
from .tensors import INPUT_SHAPE


@dataclass(frozen=True)
class StageSpec:
    """One row of the stage schedule."""

    operator: str
    resolution: tuple[int, int]  # (H, W) at the stage output
    channels: int
    layers: int


STAGE_TABLE: tuple[StageSpec, ...] = (
    StageSpec("Conv3x3", (24, 120), 64, 1),
    StageSpec("MBConv1,k3x3", (12, 60), 24, 1),
    StageSpec("MBConv6,k3x3", (12, 60), 48, 2),
    StageSpec("MBConv6,k5x5", (6, 30), 80, 2),
    StageSpec("MBConv6,k3x3", (6, 30), 160, 3),
    StageSpec("MBConv6,k3x3", (3, 15), 224, 1),
    StageSpec("GRU,Pooling", (1, 15), 448, 2),
    StageSpec("Conv1x1,Pooling,FC", (1, 15), 448, 1),
)


@dataclass(frozen=True)
class NetworkSpec:
    """The network blueprint; only the canonical schedule is buildable."""

    stages: tuple[StageSpec, ...] = STAGE_TABLE
    gru_hidden: int = 448
    classes: int = 2

    def validate(self) -> None:
        if tuple(self.stages) != STAGE_TABLE:
            raise SpecError("stage table deviates from the fixed schedule")
        gru = self.stages[6]
        if self.gru_hidden != gru.channels or gru.layers != 2:
            raise SpecError(
                f"GRU stage must have {gru.channels} channels in 2 layers"
            )
        if self.classes != 2:
            raise SpecError("the classifier emits exactly 2 confidences")


def _mbconv_params(operator: str) -> tuple[int, int]:
    """(expand_ratio, kernel) from an operator name like 'MBConv6,k5x5'."""
    name, kernel_part = operator.split(",")
    return int(name.removeprefix("MBConv")), int(kernel_part[1])


class SqueezeExcite(nn.Module):
    """Channel re-weighting from globally pooled activations."""

    def __init__(self, channels: int, reduced: int):
        super().__init__()
        self.squeeze = nn.Conv2d(channels, reduced, 1)
        self.expand = nn.Conv2d(reduced, channels, 1)
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        scale = x.mean(dim=(2, 3), keepdim=True)
        scale = self.expand(self.act(self.squeeze(scale)))
        return x * torch.sigmoid(scale)


class MBConv(nn.Module):
    """Mobile inverted bottleneck with squeeze-and-excitation."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int,
                 expand: int):
        super().__init__()
        mid = in_ch * expand
        self.expansion = (
            None
            if expand == 1
            else nn.Sequential(
                nn.Conv2d(in_ch, mid, 1, bias=False),
                nn.BatchNorm2d(mid),
                nn.SiLU(),
            )
        )
        self.depthwise = nn.Sequential(
            nn.Conv2d(mid, mid, kernel, stride=stride, padding=kernel // 2,
                      groups=mid, bias=False),
            nn.BatchNorm2d(mid),
            nn.SiLU(),
        )
        self.se = SqueezeExcite(mid, max(1, in_ch // 4))
        self.project = nn.Sequential(
            nn.Conv2d(mid, out_ch, 1, bias=False),
            nn.BatchNorm2d(out_ch),
        )
        self.residual = stride == 1 and in_ch == out_ch

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = x if self.expansion is None else self.expansion(x)
        y = self.project(self.se(self.depthwise(y)))
        return x + y if self.residual else y


class VmrNet(nn.Module):
    """Stages 1-8 of the schedule as one module.

    ``forward`` returns raw logits; ``confidences`` applies softmax.
    ``stage_output_shapes`` reports every stage's output as an
    ``(H, W, C)`` tuple (the head reports its class count), which is the
    introspection surface the conformance tests assert against.
    """

    def __init__(self, spec: NetworkSpec | None = None):
        super().__init__()
        self.spec = spec or NetworkSpec()
        self.spec.validate()
        stages = self.spec.stages

        stem = stages[0]
        self.stage1 = nn.Sequential(
            nn.Conv2d(INPUT_SHAPE[2], stem.channels, 3, stride=1, padding=1,
                      bias=False),
            nn.BatchNorm2d(stem.channels),
            nn.SiLU(),
        )

        self.conv_stages = nn.ModuleList()
        in_ch = stem.channels
        prev_res = stem.resolution
        for stage in stages[1:6]:
            expand, kernel = _mbconv_params(stage.operator)
            stride = 2 if stage.resolution != prev_res else 1
            blocks = []
            for layer in range(stage.layers):
                blocks.append(
                    MBConv(in_ch, stage.channels, kernel,
                           stride if layer == 0 else 1, expand)
                )
                in_ch = stage.channels
            self.conv_stages.append(nn.Sequential(*blocks))
            prev_res = stage.resolution

        gru_stage = stages[6]
        self.gru = nn.GRU(
            input_size=stages[5].channels,
            hidden_size=self.spec.gru_hidden,
            num_layers=gru_stage.layers,
            batch_first=True,
        )

        head = stages[7]
        self.head_conv = nn.Sequential(
            nn.Conv2d(self.spec.gru_hidden, head.channels, 1, bias=False),
            nn.BatchNorm2d(head.channels),
            nn.SiLU(),
        )
        self.fc = nn.Linear(head.channels, self.spec.classes)

    def _stage_tensors(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Run the network, collecting one output tensor per stage."""
        outputs = [self.stage1(x)]
        y = outputs[0]
        for stage in self.conv_stages:
            y = stage(y)
            outputs.append(y)
        # Pooling of the GRU stage: collapse the region axis, then feed
        # one column per time step.
        columns = y.mean(dim=2).permute(0, 2, 1)  # (N, W, C)
        seq, _ = self.gru(columns)  # (N, W, hidden)
        outputs.append(seq.permute(0, 2, 1).unsqueeze(2))  # (N, hidden, 1, W)
        h = self.head_conv(outputs[-1])
        logits = self.fc(h.mean(dim=(2, 3)))
        outputs.append(logits)
        return outputs

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self._stage_tensors(x)[-1]

    def confidences(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.forward(x), dim=1)

    @torch.no_grad()
    def stage_output_shapes(self) -> dict[int, tuple[int, ...]]:
        """Output shape per stage, probed with a single zero tensor."""
        was_training = self.training
        self.eval()
        probe = torch.zeros(1, INPUT_SHAPE[2], INPUT_SHAPE[0], INPUT_SHAPE[1])
        tensors = self._stage_tensors(probe)
        if was_training:
            self.train()
        shapes: dict[int, tuple[int, ...]] = {}
        for index, tensor in enumerate(tensors[:-1], start=1):
            _, c, h, w = tensor.shape
            shapes[index] = (h, w, c)
        shapes[len(tensors)] = tuple(tensors[-1].shape[1:])
        return shapes

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_network(spec: NetworkSpec | None = None) -> VmrNet:
    """Construct the classifier, rejecting any off-schedule spec."""
    return VmrNet(spec)
