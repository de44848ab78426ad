from .unet import (
    UNetConfig,
    ModelState,
    UNetShapeError,
    BackwardError,
    build_unet,
    forward,
    backward,
    mse_loss,
    conv2d_same,
    instance_norm2d,
    parameter_count,
)
from .stylizer import (
    StrokeStylizer,
    StylizeError,
    get_stylizer_instance,
    stylize,
    stylize_sweep,
)

__all__ = [
    "UNetConfig",
    "ModelState",
    "UNetShapeError",
    "BackwardError",
    "build_unet",
    "forward",
    "backward",
    "mse_loss",
    "conv2d_same",
    "instance_norm2d",
    "parameter_count",
    "StrokeStylizer",
    "StylizeError",
    "get_stylizer_instance",
    "stylize",
    "stylize_sweep",
]
