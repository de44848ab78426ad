#!/usr/bin/env python3
"""
Desk-scale training run: a small wet-brush set, a small U-Net, a few minutes on CPU.

Checks that training overfits (final epoch loss well below the first) and that
the trained model denoises held-out patches better than the corruption alone.
"""

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from config import configure_runtime
from inference.stylizer import infer_padded
from inference.unet import UNetConfig, build_unet
from patchgen.patch_set import generate_patch_set
from patchgen.styles import NoiseSpec, preset
from training.corruption import corrupt
from training.trainer import TrainConfig, train
from utils.seeding import stream

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

DESK_SPEC = dict(count=16, size=(64, 64), strokes_per_patch=12, stroke_length=16.0,
                 stroke_thickness=8.0, noise=NoiseSpec())


def desk_spec(count: int):
    return preset("wet_brush").with_overrides(**dict(DESK_SPEC, count=count))


def run(epochs: int, seed: int, out_dir: Path) -> bool:
    spec = desk_spec(16)
    patchset = generate_patch_set(spec, seed)
    model = build_unet(UNetConfig(depth=2, base_channels=16), seed=seed)
    cfg = TrainConfig.for_patch_set(
        patchset, epochs=epochs, learning_rate=1e-3, batch_size=4, blur_radius=2.5, seed=seed,
        checkpoint_path=str(out_dir / "desk.spck"), metrics_path=str(out_dir / "desk.csv"),
    )

    started = time.time()
    checkpoint, metrics = train(patchset, model, cfg, style_name="wet_brush_desk")
    elapsed = time.time() - started

    first, last = metrics[0].mean_loss, metrics[-1].mean_loss
    final = checkpoint.metadata["final_loss"]
    logger.info(f"📉 Epoch 1 loss {first:.5f} -> epoch {len(metrics)} loss {last:.5f} "
                f"(final step {final:.5f}, {checkpoint.metadata['steps']} steps, {elapsed:.0f}s)")
    overfit = last < 0.5 * first and final < 0.02

    held_out = generate_patch_set(desk_spec(20), seed + 1).patches
    wins = 0
    for index, patch in enumerate(held_out):
        corrupted = corrupt(patch, cfg, stream(seed + 1, 99, index))
        restored = infer_padded(model, corrupted)
        wins += np.mean((restored - patch) ** 2) < np.mean((corrupted - patch) ** 2)
    logger.info(f"🧹 Model beats the corrupted input on {wins}/{len(held_out)} held-out patches")
    denoises = wins >= 0.9 * len(held_out)

    if overfit and denoises:
        logger.info("✅ Desk-scale run passed")
    else:
        logger.error(f"❌ Desk-scale run failed (overfit={overfit}, denoises={denoises})")
    return overfit and denoises


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Desk-scale training check")
    parser.add_argument("--epochs", type=int, default=75, help="75 epochs x 4 batches = 300 steps")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("outputs/desk"))
    args = parser.parse_args()

    os.makedirs(args.out, exist_ok=True)
    configure_runtime()
    logger.info("🚀 Desk-scale run - wet brush, 16 patches at 64x64, depth-2/base-16 U-Net")
    sys.exit(0 if run(args.epochs, args.seed, args.out) else 1)
