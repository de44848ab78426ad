import gc
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import torch

from config import resolve_device, settings
from inference.unet import ModelState, forward
from inference.checkpoint import Checkpoint, load_checkpoint, model_from_checkpoint
from utils.image_ops import crop, pad_to_multiple, resize

logger = logging.getLogger(__name__)


class StylizeError(ValueError):
    """Image/scale combination the model cannot process."""


def _as_model(model: Union[Checkpoint, ModelState]) -> ModelState:
    return model_from_checkpoint(model) if isinstance(model, Checkpoint) else model


def infer_padded(model: ModelState, image: np.ndarray) -> np.ndarray:
    """Pad to a multiple of 2**depth, run the model, crop back."""
    padded, dims = pad_to_multiple(image, model.config.size_multiple)
    output = forward(model, padded).detach().to("cpu", torch.float32).numpy()
    return crop(output, dims)


def stylize(model: Union[Checkpoint, ModelState], image: np.ndarray, scale_factor: float = 1.0) -> np.ndarray:
    """Shrink by ``scale_factor``, stylize, enlarge back to the input size."""
    if not 0.0 < scale_factor <= 1.0:
        raise StylizeError(f"Scale factor must lie in (0, 1], got {scale_factor}")
    model = _as_model(model)
    if image.shape[0] != model.config.in_channels:
        raise StylizeError(f"Image has {image.shape[0]} channels, model expects {model.config.in_channels}")

    _, height, width = image.shape
    if scale_factor == 1.0:
        return infer_padded(model, image)

    m = model.config.size_multiple
    reduced_h, reduced_w = int(round(height * scale_factor)), int(round(width * scale_factor))
    if reduced_h < m or reduced_w < m:
        raise StylizeError(
            f"Scaling {width}x{height} by {scale_factor} gives {reduced_w}x{reduced_h}, smaller than "
            f"the model's minimum of {m}x{m}; use a larger scale factor"
        )
    small = resize(image, scale_factor)
    styled = infer_padded(model, small)
    return resize(styled, size=(height, width))


def stylize_sweep(model: Union[Checkpoint, ModelState], image: np.ndarray,
                  factors: Sequence[float] = (1.0, 0.5, 0.25)) -> List[np.ndarray]:
    """The same image stylized at several scale factors."""
    model = _as_model(model)
    return [stylize(model, image, r) for r in factors]


class StrokeStylizer:
    """Cached checkpoint + model for repeated stylization requests."""

    def __init__(self, checkpoint_path: Union[str, Path], device: Optional[str] = None):
        self.checkpoint_path = Path(checkpoint_path)
        self.device = resolve_device(device or settings.device)
        self.checkpoint: Optional[Checkpoint] = None
        self.model: Optional[ModelState] = None
        self.is_loaded = False

        logger.info(f"Initializing stylizer for {self.checkpoint_path.name} on {self.device}")

    def load_model(self) -> ModelState:
        """Load the checkpoint; errors propagate to the caller."""
        self.checkpoint = load_checkpoint(self.checkpoint_path)
        self.model = model_from_checkpoint(self.checkpoint).to(device=self.device)
        self.model.net.eval()
        self.is_loaded = True
        logger.info(f"Stylizer model loaded: {self.checkpoint_path} "
                    f"(style={self.checkpoint.metadata.get('style')})")
        return self.model

    def stylize(self, image: np.ndarray, scale_factor: float = 1.0) -> np.ndarray:
        if not self.is_loaded:
            self.load_model()
        started = time.time()
        output = stylize(self.model, image, scale_factor)
        logger.info(f"Stylized {image.shape[2]}x{image.shape[1]} image at r={scale_factor} "
                    f"in {time.time() - started:.2f}s")
        return output

    def unload_model(self):
        if self.model is not None:
            self.model = None
            self.checkpoint = None
            self.is_loaded = False
            if self.device == 'cuda':
                torch.cuda.empty_cache()
            gc.collect()
            logger.info("Stylizer model unloaded")


# Stylizers are cached per checkpoint path for the worker's lifetime.
_stylizer_instances: Dict[str, StrokeStylizer] = {}


def get_stylizer_instance(checkpoint_path: Union[str, Path]) -> StrokeStylizer:
    key = str(Path(checkpoint_path).resolve())
    if key not in _stylizer_instances:
        _stylizer_instances[key] = StrokeStylizer(checkpoint_path)
    return _stylizer_instances[key]


def clear_stylizer_cache():
    for instance in _stylizer_instances.values():
        instance.unload_model()
    _stylizer_instances.clear()


def evict_stylizer(checkpoint_path: Union[str, Path]):
    """Forget the cached stylizer for a checkpoint that has been rewritten."""
    instance = _stylizer_instances.pop(str(Path(checkpoint_path).resolve()), None)
    if instance is not None:
        instance.unload_model()
