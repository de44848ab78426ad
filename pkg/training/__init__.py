from .optim import AdamState, NonFiniteGradientError, adam_step
from .corruption import corrupt
from inference.checkpoint import (
    Checkpoint,
    CheckpointError,
    BadMagicError,
    UnsupportedVersionError,
    TruncatedCheckpointError,
    TensorDirectoryError,
    save_checkpoint,
    load_checkpoint,
    checkpoint_from_model,
    model_from_checkpoint,
)
from .trainer import TrainConfig, TrainingError, NonFiniteLossError, EpochMetrics, train

__all__ = [
    "AdamState",
    "NonFiniteGradientError",
    "adam_step",
    "corrupt",
    "Checkpoint",
    "CheckpointError",
    "BadMagicError",
    "UnsupportedVersionError",
    "TruncatedCheckpointError",
    "TensorDirectoryError",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_from_model",
    "model_from_checkpoint",
    "TrainConfig",
    "TrainingError",
    "NonFiniteLossError",
    "EpochMetrics",
    "train",
]
