import base64
import logging
import time
import traceback
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from celery import Celery
from pydantic import ValidationError

from config import configure_runtime, resolve_device, settings
from inference.checkpoint import CheckpointError
from inference.stylizer import StylizeError, evict_stylizer, get_stylizer_instance
from inference.unet import UNetConfig, UNetShapeError, build_unet
from patchgen.patch_set import PatchGenerationError, contact_sheet, open_patch_set, write_patch_set
from patchgen.styles import StyleSpecError, preset, spec_from_document
from training.optim import NonFiniteGradientError
from training.trainer import TrainConfig, TrainingError, train
from utils.checkpoint_store import ArtifactNameError, CheckpointStore, patch_set_dir
from utils.image_io import ImageIOError, load_png, save_png
from utils.image_ops import ImageOpError

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

# Initialize Celery
celery_app = Celery("tasks")
celery_app.config_from_object("celeryconfig")

# Failures caused by the request itself; these are reported, never retried.
DOMAIN_ERRORS = (
    StyleSpecError,
    PatchGenerationError,
    ArtifactNameError,
    ImageOpError,
    ImageIOError,
    UNetShapeError,
    TrainingError,
    NonFiniteGradientError,
    StylizeError,
    CheckpointError,
)

PREVIEW_PATCHES = 16


def _clean_result(result_dict: Dict[str, Any]) -> Dict[str, Any]:
    """Ensure result contains only JSON-serializable data."""
    cleaned = {}
    for key, value in result_dict.items():
        if isinstance(value, (str, int, float, bool, type(None))):
            cleaned[key] = value
        elif isinstance(value, dict):
            cleaned[key] = _clean_result(value)
        elif isinstance(value, (list, tuple)):
            cleaned[key] = [
                _clean_result(item) if isinstance(item, dict) else item
                for item in value
                if isinstance(item, (str, int, float, bool, type(None), dict))
            ]
        else:
            cleaned[key] = str(value)
    return cleaned


def _failure(task_id: str, error: str, **extra) -> Dict[str, Any]:
    return _clean_result({"success": False, "error": error, "task_id": task_id, **extra})


def _retry_or_fail(task, task_id: str, e: Exception) -> Dict[str, Any]:
    logger.error(f"Task {task_id}: Unexpected error: {e}")
    logger.error(f"Task {task_id}: Traceback: {traceback.format_exc()}")
    if task.request.retries < task.max_retries:
        logger.info(f"Task {task_id}: Retrying in 60 seconds (attempt {task.request.retries + 1})")
        raise task.retry(countdown=60, exc=e)
    return _failure(task_id, f"Processing failed after {task.max_retries} retries: {e}")


def output_path(task_id: str) -> Path:
    return Path(settings.output_dir) / f"{task_id}.png"


@celery_app.task(name="tasks.generate_patches", bind=True, max_retries=3)
def generate_patches(self, name: str, style: Optional[str] = None, spec: Optional[Dict] = None,
                     count: Optional[int] = None, size: Optional[Tuple[int, int]] = None,
                     seed: int = 0) -> Dict[str, Any]:
    """
    Render a stroke patch set into the patch root.

    Args:
        name: Patch set name (directory under ``settings.patch_root``)
        style: Preset name; ignored when ``spec`` is given
        spec: Style spec document (8-bit colours) as accepted by load_style_spec
        count, size: Overrides; ``size`` is ``(width, height)``
        seed: Root seed
    """
    start_time = time.time()
    task_id = self.request.id
    configure_runtime()

    try:
        logger.info(f"Task {task_id}: Generating patch set {name!r}")
        style_spec = spec_from_document(spec) if spec is not None else preset(style or settings.default_style)
        if count is not None or size is not None:
            style_spec = style_spec.with_overrides(count=count, size=tuple(size) if size else None)

        directory = patch_set_dir(name, settings.patch_root)
        write_patch_set(directory, style_spec, seed, workers=settings.workers)

        preview = directory / "preview.png"
        patchset = open_patch_set(directory)
        save_png(contact_sheet(patchset.patches[:PREVIEW_PATCHES]), preview)

        total_time = time.time() - start_time
        logger.info(f"Task {task_id}: Completed successfully in {total_time:.2f}s")
        return _clean_result({
            "success": True,
            "task_id": task_id,
            "patch_set": name,
            "style": style_spec.name,
            "path": str(directory),
            "preview": str(preview),
            "count": style_spec.count,
            "width": style_spec.width,
            "height": style_spec.height,
            "seed": seed,
            "total_time": round(total_time, 2),
        })
    except DOMAIN_ERRORS as e:
        logger.error(f"Task {task_id}: {e}")
        return _failure(task_id, str(e))
    except Exception as e:
        return _retry_or_fail(self, task_id, e)


@celery_app.task(name="tasks.train_model", bind=True, max_retries=1)
def train_model(self, patch_set: str, model_name: str, options: Optional[Dict] = None) -> Dict[str, Any]:
    """
    Train a U-Net on a stored patch set and store the checkpoint as ``model_name``.

    Options: epochs, learning_rate, batch_size, blur_radius, noise_probability,
    depth, base_channels, seed, max_steps.
    """
    start_time = time.time()
    task_id = self.request.id
    options = dict(options or {})
    configure_runtime()

    try:
        store = CheckpointStore(settings.model_cache_dir)
        checkpoint_path = store.model_path(model_name)
        patchset = open_patch_set(patch_set_dir(patch_set, settings.patch_root))
        try:
            model_config = UNetConfig(depth=options.pop("depth", None) or 4,
                                      base_channels=options.pop("base_channels", None) or 64)
        except ValidationError as e:
            raise TrainingError(f"Invalid model configuration: {e}") from e

        cfg = TrainConfig.for_patch_set(
            patchset,
            checkpoint_path=str(checkpoint_path),
            metrics_path=str(checkpoint_path.with_suffix(".csv")),
            device=resolve_device(settings.device),
            **options,
        )
        logger.info(f"Task {task_id}: Training {model_name!r} on {patch_set!r} "
                    f"({len(patchset)} patches, {cfg.epochs} epochs)")
        model = build_unet(model_config, seed=cfg.seed)
        checkpoint, metrics = train(patchset, model, cfg, style_name=patchset.spec.name)

        evict_stylizer(checkpoint_path)

        total_time = time.time() - start_time
        logger.info(f"Task {task_id}: Completed successfully in {total_time:.2f}s")
        return _clean_result({
            "success": True,
            "task_id": task_id,
            "model": model_name,
            "path": str(checkpoint_path),
            "parameters": checkpoint.parameter_count(),
            "final_loss": checkpoint.metadata["final_loss"],
            "epochs": [{"epoch": m.epoch, "mean_loss": m.mean_loss, "seconds": round(m.seconds, 2)}
                       for m in metrics],
            "total_time": round(total_time, 2),
        })
    except DOMAIN_ERRORS as e:
        logger.error(f"Task {task_id}: {e}")
        return _failure(task_id, str(e))
    except Exception as e:
        return _retry_or_fail(self, task_id, e)


@celery_app.task(name="tasks.stylize_image", bind=True, max_retries=3)
def stylize_image(self, image_b64: str, filename: str, model_name: str,
                  scale: float = 1.0) -> Dict[str, Any]:
    """
    Stylize an uploaded image with a stored checkpoint.

    The image travels base64-encoded; the result PNG is written to
    ``settings.output_dir/<task_id>.png``.
    """
    start_time = time.time()
    task_id = self.request.id
    configure_runtime()

    try:
        logger.info(f"Task {task_id}: Stylizing {filename} with {model_name!r} at r={scale}")
        image = load_png(base64.b64decode(image_b64))
        _, height, width = image.shape
        if height * width > settings.max_image_pixels:
            return _failure(task_id, f"Image too large. Maximum {settings.max_image_pixels} pixels allowed.")

        store = CheckpointStore(settings.model_cache_dir)
        path = store.get_model_path(model_name)
        if path is None:
            return _failure(task_id, f"Unknown model {model_name!r}")

        processing_start = time.time()
        styled = get_stylizer_instance(path).stylize(image, scale)
        processing_time = time.time() - processing_start

        out = output_path(task_id)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_png(styled, out)

        total_time = time.time() - start_time
        logger.info(f"Task {task_id}: Completed successfully in {total_time:.2f}s")
        return _clean_result({
            "success": True,
            "task_id": task_id,
            "model": model_name,
            "scale_factor": float(scale),
            "size": [width, height],
            "output_path": str(out),
            "output_url": f"/outputs/{task_id}",
            "processing_time": round(processing_time, 2),
            "total_time": round(total_time, 2),
        })
    except DOMAIN_ERRORS as e:
        logger.error(f"Task {task_id}: {e}")
        return _failure(task_id, str(e))
    except Exception as e:
        return _retry_or_fail(self, task_id, e)


@celery_app.task(name="tasks.health_check")
def health_check() -> Dict[str, Any]:
    """Health check task for monitoring."""
    import torch
    import psutil

    try:
        return {
            "status": "healthy",
            "timestamp": float(time.time()),
            "system_info": {
                "cpu_percent": float(psutil.cpu_percent()),
                "memory_percent": float(psutil.virtual_memory().percent),
                "device": resolve_device(settings.device),
                "cuda_available": bool(torch.cuda.is_available()),
                "torch_threads": int(torch.get_num_threads()),
            }
        }
    except Exception as e:
        return {
            "status": "error",
            "timestamp": float(time.time()),
            "error": str(e)
        }
