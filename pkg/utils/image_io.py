import io
import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)

PathOrBytes = Union[str, Path, bytes]


class ImageIOError(RuntimeError):
    """PNG decode/encode failure."""


def pil_to_tensor(image: Image.Image) -> np.ndarray:
    """PIL image -> (3, H, W) float32 in [0, 1]; alpha is composited over white."""
    if image.mode == "P":
        image = image.convert("RGBA")
    if image.mode in ("LA", "RGBA"):
        image = image.convert("RGBA")
        rgba = np.asarray(image, dtype=np.float64) / 255.0
        alpha = rgba[:, :, 3:4]
        rgb = rgba[:, :, :3] * alpha + (1.0 - alpha)
    else:
        rgb = np.asarray(image.convert("RGB"), dtype=np.float64) / 255.0
    return np.ascontiguousarray(rgb.transpose(2, 0, 1)).astype(np.float32)


def tensor_to_pil(img: np.ndarray) -> Image.Image:
    """(C, H, W) float image -> 8-bit PIL image (round half to even)."""
    if img.ndim != 3 or img.shape[0] not in (1, 3, 4):
        raise ImageIOError(f"Cannot encode image of shape {img.shape}")
    quantized = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    hwc = np.ascontiguousarray(quantized.transpose(1, 2, 0))
    if img.shape[0] == 1:
        return Image.fromarray(hwc[:, :, 0], mode="L")
    return Image.fromarray(hwc, mode="RGB" if img.shape[0] == 3 else "RGBA")


def load_png(source: PathOrBytes) -> np.ndarray:
    """Decode a PNG file (or raw bytes) to a (3, H, W) image."""
    try:
        if isinstance(source, bytes):
            image = Image.open(io.BytesIO(source))
        else:
            image = Image.open(source)
        image.load()
    except Exception as e:
        raise ImageIOError(f"Could not decode image: {e}") from e
    logger.debug(f"Loaded image {image.size} mode={image.mode}")
    return pil_to_tensor(image)


def encode_png(img: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    tensor_to_pil(img).save(buffer, format="PNG")
    return buffer.getvalue()


def save_png(img: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.write_bytes(encode_png(img))
    except OSError as e:
        raise ImageIOError(f"Could not write {path}: {e}") from e
    return path
