from fastapi import FastAPI, UploadFile, File, Form, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse
from celery.result import AsyncResult
from pydantic import BaseModel, Extra
import base64
import os
import logging
from typing import Dict, Any, Optional
import time

from config import configure_runtime, resolve_device, settings
from patchgen.patch_set import MANIFEST_NAME
from patchgen.styles import (
    StyleSpecError,
    UnknownPresetError,
    available_presets,
    dump_style_spec,
    preset,
    spec_from_document,
)
from tasks import celery_app, generate_patches, output_path, stylize_image, train_model
from utils.checkpoint_store import ArtifactNameError, CheckpointStore, check_name, patch_set_dir
from utils.image_io import ImageIOError, load_png

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

# Initialize FastAPI
app = FastAPI(
    title=settings.api_title,
    version=settings.api_version,
    description=settings.api_description,
    docs_url="/docs",
    redoc_url="/redoc"
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


class PatchRequest(BaseModel):
    name: str
    style: Optional[str] = None
    spec: Optional[Dict[str, Any]] = None
    count: Optional[int] = None
    width: Optional[int] = None
    height: Optional[int] = None
    seed: int = 0

    class Config:
        extra = Extra.forbid


class TrainRequest(BaseModel):
    patch_set: str
    model_name: str
    epochs: int = 10
    learning_rate: float = 0.001
    batch_size: int = 4
    blur_radius: float = 5.0
    noise_probability: Optional[float] = None
    depth: int = 4
    base_channels: int = 64
    seed: int = 0
    max_steps: Optional[int] = None

    class Config:
        extra = Extra.forbid


@app.exception_handler(UnknownPresetError)
async def unknown_preset_handler(request, exc):
    return JSONResponse(status_code=404, content={"detail": str(exc)})


@app.exception_handler(StyleSpecError)
async def style_spec_error_handler(request, exc):
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.exception_handler(ArtifactNameError)
async def artifact_name_error_handler(request, exc):
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.exception_handler(Exception)
async def general_exception_handler(request, exc):
    logger.error(f"Unhandled exception: {exc}")
    return JSONResponse(
        status_code=500,
        content={"detail": "Internal server error"}
    )

# Global variables for tracking
startup_complete = False


def get_store() -> CheckpointStore:
    return CheckpointStore(settings.model_cache_dir)


@app.on_event("startup")
async def startup_event():
    """Initialize the application on startup."""
    global startup_complete
    logger.info("Starting Stroke Patch Stylizer API...")

    for directory in (settings.patch_root, settings.model_cache_dir, settings.output_dir, settings.temp_dir):
        os.makedirs(directory, exist_ok=True)
    configure_runtime()

    models = get_store().list_models()
    logger.info(f"{len(models)} checkpoint(s) available in {settings.model_cache_dir}")

    startup_complete = True
    logger.info("API startup completed")


@app.on_event("shutdown")
async def shutdown_event():
    logger.info("Shutting down Stroke Patch Stylizer API...")


@app.get("/")
async def root():
    """Root endpoint."""
    return {
        "message": "Stroke Patch Stylizer API",
        "version": settings.api_version,
        "status": "running",
        "docs": "/docs"
    }


@app.get("/health")
async def health_check():
    """Health check endpoint."""
    return {
        "status": "healthy",
        "startup_complete": startup_complete,
        "timestamp": time.time(),
        "version": settings.api_version,
        "device": resolve_device(settings.device),
    }


@app.get("/presets")
async def list_presets():
    return {
        "success": True,
        "default": settings.default_style,
        "presets": [{"name": name, "fidelity": fidelity.value} for name, fidelity in available_presets()],
    }


@app.get("/presets/{name}")
async def get_preset(name: str):
    return {"success": True, "preset": dump_style_spec(preset(name))}


@app.get("/models")
async def list_models():
    return {"success": True, "models": get_store().list_models()}


@app.post("/patches")
async def generate_patches_endpoint(request: PatchRequest):
    """
    Render a stroke patch set in the background.

    - **name**: patch set name, later passed to /train
    - **style** or **spec**: preset name, or a full style document (8-bit colours)
    - **count**, **width**, **height**: overrides
    - **seed**: root seed; the same request always renders the same patches
    """
    check_name(request.name)
    if request.style and request.spec:
        raise HTTPException(status_code=400, detail="Give either style or spec, not both")
    if (request.width is None) != (request.height is None):
        raise HTTPException(status_code=400, detail="width and height must be given together")
    # Reject bad styles and overrides before queueing.
    if request.spec is not None:
        spec = spec_from_document(request.spec)
    else:
        spec = preset(request.style or settings.default_style)
    size = (request.width, request.height) if request.width is not None else None
    spec.with_overrides(count=request.count, size=size)

    task = generate_patches.apply_async(
        args=[request.name],
        kwargs={
            "style": request.style,
            "spec": request.spec,
            "count": request.count,
            "size": list(size) if size else None,
            "seed": request.seed,
        },
        queue="patches",
    )
    logger.info(f"Created patch generation task: {task.id}")
    return {
        "success": True,
        "task_id": task.id,
        "status": "queued",
        "message": "Patch generation started",
        "patch_set": request.name,
    }


@app.post("/train")
async def train_endpoint(request: TrainRequest):
    """Train a U-Net on a stored patch set; the checkpoint is stored as **model_name**."""
    check_name(request.model_name)
    directory = patch_set_dir(request.patch_set, settings.patch_root)
    if not (directory / MANIFEST_NAME).exists():
        raise HTTPException(status_code=404, detail=f"Unknown patch set {request.patch_set!r}")

    options = request.dict(exclude={"patch_set", "model_name"})
    task = train_model.apply_async(
        args=[request.patch_set, request.model_name, options],
        queue="training",
    )
    logger.info(f"Created training task: {task.id}")
    return {
        "success": True,
        "task_id": task.id,
        "status": "queued",
        "message": "Training started",
        "options": options,
    }


@app.post("/style")
async def style_endpoint(
    file: UploadFile = File(..., description="Image to stylize"),
    model: str = Form(..., description="Stored checkpoint name"),
    scale: float = Form(1.0, description="Shrink factor r in (0, 1]"),
):
    """
    Stylize an image with a trained checkpoint.

    - **file**: PNG (or any image PIL decodes); alpha is composited over white
    - **model**: name from /models
    - **scale**: smaller values give coarser strokes
    """
    if not 0.0 < scale <= 1.0:
        raise HTTPException(status_code=400, detail=f"scale must lie in (0, 1], got {scale}")
    if get_store().get_model_path(model) is None:
        raise HTTPException(status_code=404, detail=f"Unknown model {model!r}")

    contents = await file.read()
    if len(contents) > settings.max_file_size:
        raise HTTPException(
            status_code=413,
            detail=f"File too large. Maximum size: {settings.max_file_size // (1024*1024)}MB"
        )
    try:
        image = load_png(contents)
    except ImageIOError as e:
        raise HTTPException(status_code=400, detail=f"Invalid image: {e}")
    _, height, width = image.shape
    if height * width > settings.max_image_pixels:
        raise HTTPException(status_code=413, detail=f"Image too large. Maximum {settings.max_image_pixels} pixels.")

    task = stylize_image.apply_async(
        args=[base64.b64encode(contents).decode("ascii"), file.filename or "upload.png", model, scale],
        queue="styling",
    )
    logger.info(f"Created stylize task: {task.id}")
    return {
        "success": True,
        "task_id": task.id,
        "status": "queued",
        "message": "Stylization started",
        "image_info": {"filename": file.filename, "dimensions": [width, height]},
        "options": {"model": model, "scale": scale},
    }


@app.get("/result/{task_id}")
async def get_task_result(task_id: str):
    """Status and result of a patch, training or stylize task."""
    result = AsyncResult(task_id, app=celery_app)
    try:
        if not result.ready():
            return {
                "success": True,
                "status": "processing",
                "task_id": task_id,
                "message": "Task is still being processed"
            }
        if result.successful():
            task_result = result.get()
            return {
                "success": bool(task_result.get("success", False)),
                "status": "completed" if task_result.get("success") else "failed",
                "task_id": task_id,
                "result": task_result
            }
        return {
            "success": False,
            "status": "failed",
            "task_id": task_id,
            "error": str(result.info) if result.info else "Unknown error"
        }
    except Exception as e:
        logger.error(f"Get result error for task {task_id}: {e}")
        return {
            "success": False,
            "status": "error",
            "task_id": task_id,
            "error": str(e)
        }


@app.get("/outputs/{task_id}")
async def get_output(task_id: str):
    """The stylized PNG written by a finished stylize task."""
    path = output_path(check_name(task_id))
    if not path.exists():
        raise HTTPException(status_code=404, detail=f"No output for task {task_id}")
    return FileResponse(path, media_type="image/png", filename=f"stylized_{task_id}.png")


@app.get("/stats")
async def get_stats():
    """Get system and queue statistics."""
    try:
        import psutil
        import torch

        system_stats = {
            "cpu_percent": psutil.cpu_percent(interval=1),
            "memory": {
                "total": psutil.virtual_memory().total,
                "available": psutil.virtual_memory().available,
                "percent": psutil.virtual_memory().percent
            },
            "disk": {
                "total": psutil.disk_usage('/').total,
                "free": psutil.disk_usage('/').free,
                "percent": psutil.disk_usage('/').percent
            }
        }

        device_stats = {
            "device": resolve_device(settings.device),
            "torch_threads": torch.get_num_threads(),
            "cuda_available": torch.cuda.is_available(),
        }

        celery_stats = {
            "workers_online": 0,
            "active_task_count": 0
        }
        try:
            inspect = celery_app.control.inspect(timeout=1.0)
            stats = inspect.stats()
            if stats:
                celery_stats["workers_online"] = len(stats)
            active = inspect.active()
            if active:
                celery_stats["active_task_count"] = sum(len(tasks) for tasks in active.values())
        except Exception:
            pass  # broker unreachable

        return {
            "success": True,
            "system": system_stats,
            "device": device_stats,
            "celery": celery_stats,
            "timestamp": time.time()
        }

    except Exception as e:
        logger.error(f"Get stats error: {e}")
        return {
            "success": False,
            "error": str(e),
            "timestamp": time.time()
        }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
