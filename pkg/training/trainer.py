"""Denoising-regression training loop.

Each patch is corrupted (noise, clamp, blur) with a fresh random stream keyed
by ``(seed, epoch, patch index)``, the model regresses the clean patch under
MSE, and parameters are updated by Adam.
"""

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Extra, ValidationError, validator

from inference.unet import ModelState, backward, forward, mse_loss
from patchgen.patch_set import PatchSet
from patchgen.styles import NoiseSpec
from inference.checkpoint import Checkpoint, checkpoint_from_model, write_checkpoint
from training.corruption import corrupt
from training.optim import AdamState, adam_step
from utils.seeding import CORRUPT_STREAM, SHUFFLE_STREAM, check_seed, stream

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class NonFiniteLossError(TrainingError):
    pass


class TrainConfig(BaseModel):
    epochs: int = 10
    learning_rate: float = 0.001
    batch_size: int = 4
    blur_radius: float = 5.0
    noise: NoiseSpec = NoiseSpec()
    noise_probability: float = 0.0
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_path: Optional[str] = None
    metrics_path: Optional[str] = None
    workers: int = 1
    max_steps: Optional[int] = None
    device: str = "cpu"

    class Config:
        extra = Extra.forbid
        allow_mutation = False

    @validator("epochs", "batch_size", "workers")
    def _at_least_one(cls, v, field):
        if v < 1:
            raise ValueError(f"{field.name} must be >= 1")
        return v

    @validator("learning_rate")
    def _lr(cls, v):
        # lr=0 is accepted as a frozen-parameter run
        if v < 0:
            raise ValueError("learning_rate must be >= 0")
        return v

    @validator("blur_radius")
    def _radius(cls, v):
        if v < 0:
            raise ValueError("blur_radius must be >= 0")
        return v

    @validator("noise_probability")
    def _probability(cls, v):
        if not 0.0 <= v <= 1.0:
            raise ValueError("noise_probability must lie in [0, 1]")
        return v

    @validator("seed")
    def _seed(cls, v):
        return check_seed(v)

    @validator("max_steps")
    def _max_steps(cls, v):
        if v is not None and v < 1:
            raise ValueError("max_steps must be >= 1")
        return v

    @classmethod
    def for_patch_set(cls, patchset: PatchSet, **overrides) -> "TrainConfig":
        """Defaults with the noise settings taken from the patch set's style."""
        values = dict(noise=patchset.spec.noise, noise_probability=patchset.spec.noise_probability)
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except ValidationError as e:
            raise TrainingError(f"Invalid training configuration: {e}") from e


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    mean_loss: float
    seconds: float
    steps: int


def _append_metrics(path: Path, metrics: EpochMetrics, write_header: bool):
    with open(path, "a", newline="") as f:
        writer = csv.writer(f)
        if write_header:
            writer.writerow(["epoch", "mean_loss", "seconds"])
        writer.writerow([metrics.epoch, f"{metrics.mean_loss:.8g}", f"{metrics.seconds:.3f}"])


def _check_compatible(patchset: PatchSet, model: ModelState):
    channels, height, width = patchset.shape
    m = model.config.size_multiple
    if height % m or width % m:
        raise TrainingError(f"Patch size {width}x{height} is not divisible by 2**depth = {m}")
    if channels != model.config.in_channels or channels != model.config.out_channels:
        raise TrainingError(f"Patches have {channels} channels, model maps "
                            f"{model.config.in_channels} -> {model.config.out_channels}")


def train(patchset: PatchSet, model: ModelState, cfg: TrainConfig,
          style_name: Optional[str] = None) -> Tuple[Checkpoint, List[EpochMetrics]]:
    """Fit ``model`` in place; returns the final checkpoint and per-epoch metrics."""
    _check_compatible(patchset, model)
    model.to(device=cfg.device)
    params = model.params
    state = AdamState.zeros_like(params)
    metrics: List[EpochMetrics] = []
    metrics_path = Path(cfg.metrics_path) if cfg.metrics_path else None
    if metrics_path is not None:
        metrics_path.parent.mkdir(parents=True, exist_ok=True)
        metrics_path.unlink(missing_ok=True)

    n = len(patchset)
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    logger.info(f"Training on {n} patches for {cfg.epochs} epochs "
                f"(batch={cfg.batch_size}, lr={cfg.learning_rate}, blur={cfg.blur_radius})")

    def make_sample(epoch: int, index: int):
        patch = patchset.patches[index]
        return corrupt(patch, cfg, stream(cfg.seed, CORRUPT_STREAM, epoch, index)), patch

    steps = 0
    epochs_completed = 0
    final_loss = float("nan")
    try:
        for epoch in range(cfg.epochs):
            started = time.time()
            order = stream(cfg.seed, SHUFFLE_STREAM, epoch).permutation(n)
            loss_sum, seen, epoch_steps = 0.0, 0, 0
            for start in range(0, n, cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                if pool is not None:
                    samples = list(pool.map(lambda i: make_sample(epoch, int(i)), batch))
                else:
                    samples = [make_sample(epoch, int(i)) for i in batch]
                inputs = torch.from_numpy(np.stack([s[0] for s in samples])).to(model.device, model.dtype)
                targets = torch.from_numpy(np.stack([s[1] for s in samples])).to(model.device, model.dtype)

                output = forward(model, inputs, record=True)
                loss = mse_loss(output, targets)
                value = float(loss.detach())
                if not math.isfinite(value):
                    raise NonFiniteLossError(f"Loss became {value} at epoch {epoch + 1}, step {steps + 1}")
                backward(model, loss)
                adam_step(params, model.grads, state, cfg.learning_rate,
                          cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

                loss_sum += value * len(batch)
                seen += len(batch)
                steps += 1
                epoch_steps += 1
                final_loss = value
                if cfg.max_steps is not None and steps >= cfg.max_steps:
                    break

            record = EpochMetrics(epoch=epoch + 1, mean_loss=loss_sum / seen,
                                  seconds=time.time() - started, steps=epoch_steps)
            metrics.append(record)
            epochs_completed = epoch + 1
            if metrics_path is not None:
                _append_metrics(metrics_path, record, write_header=epoch == 0)
            logger.info(f"Epoch {record.epoch}/{cfg.epochs}: mean loss {record.mean_loss:.6f} "
                        f"({record.seconds:.1f}s, {epoch_steps} steps)")
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                logger.info(f"Stopping after {steps} optimizer steps (max_steps)")
                break
    finally:
        if pool is not None:
            pool.shutdown()

    metadata = {
        "style": style_name or patchset.spec.name,
        "seed": cfg.seed,
        "epochs_completed": epochs_completed,
        "steps": steps,
        "final_loss": final_loss,
        "learning_rate": cfg.learning_rate,
        "blur_radius": cfg.blur_radius,
    }
    checkpoint = checkpoint_from_model(model, metadata)
    if cfg.checkpoint_path:
        write_checkpoint(checkpoint, cfg.checkpoint_path)
    return checkpoint, metrics
