import os
import logging
from typing import Optional
from pydantic import BaseSettings

logger = logging.getLogger(__name__)

_runtime_configured = False

def get_optimal_device():
    """Auto-detect the best available device for training and inference."""
    try:
        import torch
        if torch.cuda.is_available():
            return "cuda"
        elif hasattr(torch.backends, 'mps') and torch.backends.mps.is_available():
            return "mps"  # Apple Silicon
        else:
            return "cpu"
    except ImportError:
        return "cpu"

def resolve_device(device: Optional[str]) -> str:
    """Map "auto" (or nothing) to a concrete torch device name."""
    if not device or device == "auto":
        return get_optimal_device()
    return device

class Settings(BaseSettings):
    # Application settings
    environment: str = "development"
    device: str = "cpu"  # "auto" picks cuda/mps when present; cpu is the reproducible path
    num_threads: int = 0  # 0 leaves torch/OpenCV defaults alone
    workers: int = 1  # patch rendering processes

    # Storage
    patch_root: str = "./patches"
    model_cache_dir: str = "./models"
    output_dir: str = "./outputs"
    temp_dir: str = "./temp"

    # Redis settings
    redis_broker: str = "redis://localhost:6379/0"
    redis_backend: str = "redis://localhost:6379/0"

    # API settings
    api_title: str = "Stroke Patch Stylizer API"
    api_version: str = "1.0.0"
    api_description: str = "Stroke-patch generation, denoising U-Net training and image stylization"

    # Limits
    max_file_size: int = 50 * 1024 * 1024  # 50MB
    max_image_pixels: int = 16 * 1024 * 1024
    default_style: str = "wet_brush"

    class Config:
        env_file = ".env"
        case_sensitive = False

settings = Settings()

def configure_runtime(num_threads: Optional[int] = None):
    """Apply thread-count settings to torch and OpenCV once per process."""
    global _runtime_configured
    threads = settings.num_threads if num_threads is None else num_threads
    if _runtime_configured and num_threads is None:
        return
    _runtime_configured = True
    if threads <= 0:
        return

    import cv2
    import torch
    torch.set_num_threads(threads)
    cv2.setNumThreads(threads)
    os.environ.setdefault("OMP_NUM_THREADS", str(threads))
    logger.info(f"Runtime limited to {threads} threads")
