"""Audio-visual idling vehicle detection: synthetic scenes, log-mel frontend,
metrics, and training of the fusion detector."""

import torch  # noqa: F401  loads the libtorch the extension links against

from ._havt import (
    Box,
    ConfigError,
    Detection,
    GroundTruthBox,
    IoError,
    NumericError,
    ShapeError,
    ValidationError,
    VehicleState,
    ablate,
    evaluate,
    evaluate_checkpoint,
    generate_corpus,
    generate_scene,
    iou,
    melspec,
    nms,
    split_dataset,
    train,
)

__all__ = [
    "Box",
    "ConfigError",
    "Detection",
    "GroundTruthBox",
    "IoError",
    "NumericError",
    "ShapeError",
    "ValidationError",
    "VehicleState",
    "ablate",
    "evaluate",
    "evaluate_checkpoint",
    "generate_corpus",
    "generate_scene",
    "iou",
    "melspec",
    "nms",
    "split_dataset",
    "train",
]
