"""Pipeline configuration with JSON round-trip."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .errors import FormatError
from .matching import ACCEPTANCE_RATE, RATIO_THRESHOLD, SPATIAL_WEIGHT
from .representation import SEGMENT_LEN, SEGMENT_STRIDE
from .signals import FILTER_ORDER, GRID_COLS, GRID_ROWS, PULSE_BAND, TARGET_FPS


@dataclass
class PipelineConfig:
    ratio_threshold: float = RATIO_THRESHOLD
    spatial_weight: float = SPATIAL_WEIGHT
    acceptance_rate: float = ACCEPTANCE_RATE
    template_mode: str = "first"
    equalize: bool = False
    normalize_before_filter: bool = False  # default: filter, then normalize
    band_low: float = PULSE_BAND[0]
    band_high: float = PULSE_BAND[1]
    filter_order: int = FILTER_ORDER
    target_fps: float = TARGET_FPS
    grid_rows: int = GRID_ROWS
    grid_cols: int = GRID_COLS
    segment_len: int = SEGMENT_LEN
    segment_stride: int = SEGMENT_STRIDE
    octaves: int = 4
    scales_per_octave: int = 3
    dog_threshold: float = 0.03
    edge_ratio: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.ratio_threshold <= 1.0):
            raise ValueError("ratio_threshold outside (0, 1]")
        if not (0.0 < self.acceptance_rate <= 1.0):
            raise ValueError("acceptance_rate outside (0, 1]")
        if self.spatial_weight < 0:
            raise ValueError("spatial_weight must be non-negative")
        if self.template_mode not in ("first", "middle"):
            raise ValueError(f"unknown template_mode {self.template_mode!r}")
        if not (0 < self.band_low < self.band_high < self.target_fps / 2):
            raise ValueError("pulse band must sit inside (0, nyquist)")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise FormatError("config JSON must be an object")
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(doc) - known
        if extra:
            raise FormatError(f"unknown config fields: {sorted(extra)}")
        try:
            return cls(**doc)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"bad config value: {exc}") from exc
