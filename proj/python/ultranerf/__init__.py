"""Differentiable ultrasound rendering and neural field training."""

from ._core import (
    Checkpoint,
    ConfigError,
    DataError,
    GeometryError,
    ShapeError,
    TrainingError,
    combined_loss,
    load_dataset,
    render,
    run_cli,
    ssim,
)

__all__ = [
    "Checkpoint",
    "ConfigError",
    "DataError",
    "GeometryError",
    "ShapeError",
    "TrainingError",
    "combined_loss",
    "load_dataset",
    "render",
    "run_cli",
    "ssim",
]
