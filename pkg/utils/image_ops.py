"""Corruption and resampling operators on channels-first float images.

An image ("ImageTensor") is a numpy array of shape ``(C, H, W)`` with
C in {1, 3, 4}; values live in [0, 1] after any clamping step. No operation
writes into its input.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import cv2
import numpy as np

logger = logging.getLogger(__name__)

NOISE_NONE = "none"
NOISE_GAUSSIAN = "gaussian"
NOISE_UNIFORM = "uniform"


class ImageOpError(ValueError):
    """Invalid argument to an image operator."""


@dataclass(frozen=True)
class BlurKernel:
    radius: float
    weights: np.ndarray  # 1-D, symmetric, sums to 1

    @property
    def half_width(self) -> int:
        return len(self.weights) // 2


def _check_image(img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[0] not in (1, 3, 4):
        raise ImageOpError(f"Expected a (C, H, W) image with C in 1/3/4, got shape {img.shape}")
    if img.shape[1] < 1 or img.shape[2] < 1:
        raise ImageOpError(f"Image must be at least 1x1, got {img.shape[1]}x{img.shape[2]}")


def _to_hwc(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(img.transpose(1, 2, 0))


def _from_hwc(arr: np.ndarray, channels: int) -> np.ndarray:
    # OpenCV drops a trailing singleton channel axis
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return np.ascontiguousarray(arr.transpose(2, 0, 1)).reshape(channels, arr.shape[0], arr.shape[1])


def sample_noise(shape: Tuple[int, ...], noise, rng: np.random.Generator) -> np.ndarray:
    """Draw the un-clamped noise field for ``noise`` (a NoiseSpec-like object).

    Magnitudes are given in 8-bit units and divided by 255 here.
    """
    scale = float(noise.sigma_8bit) / 255.0
    if noise.kind == NOISE_GAUSSIAN:
        return rng.normal(0.0, scale, size=shape)
    if noise.kind == NOISE_UNIFORM:
        return rng.uniform(-scale, scale, size=shape)
    return np.zeros(shape, dtype=np.float64)


def add_noise(img: np.ndarray, noise, rng: np.random.Generator) -> np.ndarray:
    """Additive noise followed by a clamp to [0, 1]."""
    _check_image(img)
    if noise.kind == NOISE_NONE:
        return img.copy()
    field = sample_noise(img.shape, noise, rng)
    return np.clip(img + field, 0.0, 1.0).astype(img.dtype)


def blur_kernel(radius: float) -> BlurKernel:
    """Sampled Gaussian with sigma = radius / 2, truncated at 3 sigma."""
    if radius < 0:
        raise ImageOpError(f"Blur radius must be >= 0, got {radius}")
    if radius == 0:
        return BlurKernel(radius=0.0, weights=np.ones(1, dtype=np.float64))
    sigma = radius / 2.0
    half = int(math.ceil(3.0 * sigma))
    weights = cv2.getGaussianKernel(2 * half + 1, sigma, cv2.CV_64F).ravel()
    weights = weights / weights.sum()
    return BlurKernel(radius=float(radius), weights=weights)


def gaussian_blur(img: np.ndarray, radius: float) -> np.ndarray:
    """Separable Gaussian blur with mirrored (edge-exclusive) borders."""
    _check_image(img)
    kernel = blur_kernel(radius)
    if kernel.radius == 0:
        return img.copy()
    taps = kernel.weights.astype(img.dtype if img.dtype == np.float64 else np.float32)
    out = cv2.sepFilter2D(
        _to_hwc(img), -1, taps, taps,
        borderType=cv2.BORDER_REFLECT_101,
    )
    return _from_hwc(out, img.shape[0])


def resize(img: np.ndarray, factor: float = 1.0,
           size: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """Bilinear resampling with half-pixel centres.

    ``size`` is ``(height, width)`` and overrides ``factor`` when given.
    """
    _check_image(img)
    _, height, width = img.shape
    if size is None:
        if not factor > 0:
            raise ImageOpError(f"Scale factor must be > 0, got {factor}")
        if factor == 1:
            return img.copy()
        size = (int(round(height * factor)), int(round(width * factor)))
    new_h, new_w = size
    if new_h < 1 or new_w < 1:
        raise ImageOpError(
            f"Resizing {height}x{width} by {factor} gives a degenerate {new_h}x{new_w} image"
        )
    if (new_h, new_w) == (height, width):
        return img.copy()
    out = cv2.resize(_to_hwc(img), (new_w, new_h), interpolation=cv2.INTER_LINEAR)
    return _from_hwc(out, img.shape[0])


def pad_to_multiple(img: np.ndarray, m: int) -> Tuple[np.ndarray, Tuple[int, int]]:
    """Reflect-pad right/bottom so both spatial dims divide by ``m``."""
    _check_image(img)
    if m < 1:
        raise ImageOpError(f"Padding multiple must be >= 1, got {m}")
    _, height, width = img.shape
    pad_h = (-height) % m
    pad_w = (-width) % m
    if pad_h == 0 and pad_w == 0:
        return img.copy(), (height, width)
    padded = np.pad(img, ((0, 0), (0, pad_h), (0, pad_w)), mode="reflect")
    return padded, (height, width)


def crop(img: np.ndarray, dims: Tuple[int, int]) -> np.ndarray:
    """Top-left crop to ``(height, width)``."""
    _check_image(img)
    height, width = dims
    if height > img.shape[1] or width > img.shape[2] or height < 1 or width < 1:
        raise ImageOpError(f"Cannot crop {img.shape[1]}x{img.shape[2]} image to {height}x{width}")
    return img[:, :height, :width].copy()


def edge_density(img: np.ndarray) -> float:
    """Mean absolute Laplacian of the luminance."""
    _check_image(img)
    if img.shape[0] == 1:
        luma = img[0]
    else:
        luma = 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]
    laplacian = cv2.Laplacian(luma.astype(np.float32), cv2.CV_32F, ksize=1)
    return float(np.mean(np.abs(laplacian)))
