"""Deep classifier for pulse-signal tensor files."""

from .errors import DataError, FormatError, SpecError, VmrnetError
from .network import (
    STAGE_TABLE,
    MBConv,
    NetworkSpec,
    SqueezeExcite,
    StageSpec,
    VmrNet,
    build_network,
)
from .predict import segment_scores, video_decision, write_scores_csv
from .tensors import INPUT_SHAPE, TensorFile, as_batch, load_dir, read_tensor
from .training import (
    TrainConfig,
    class_confidence_loss,
    load_checkpoint,
    recalibrate_batch_stats,
    sample_losses,
    save_checkpoint,
    train,
)

__all__ = [
    "DataError",
    "FormatError",
    "SpecError",
    "VmrnetError",
    "STAGE_TABLE",
    "MBConv",
    "NetworkSpec",
    "SqueezeExcite",
    "StageSpec",
    "VmrNet",
    "build_network",
    "segment_scores",
    "video_decision",
    "write_scores_csv",
    "INPUT_SHAPE",
    "TensorFile",
    "as_batch",
    "load_dir",
    "read_tensor",
    "TrainConfig",
    "class_confidence_loss",
    "load_checkpoint",
    "recalibrate_batch_stats",
    "sample_losses",
    "save_checkpoint",
    "train",
]
