#!/usr/bin/env python3
"""
Command-line front end: gen-patches, train, style, inspect.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Diagnostics go to
stderr, results (paths, losses, inspection dumps) to stdout.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence, Tuple

from pydantic import ValidationError

from config import configure_runtime, resolve_device, settings
from inference.checkpoint import CheckpointError, load_checkpoint
from inference.stylizer import StylizeError, stylize
from inference.unet import BackwardError, UNetConfig, UNetShapeError, build_unet, parameter_count
from patchgen.patch_set import (
    PatchGenerationError,
    contact_sheet,
    open_patch_set,
    write_patch_set,
)
from patchgen.styles import StyleSpecError, load_style_spec, preset
from training.optim import NonFiniteGradientError
from training.trainer import TrainConfig, TrainingError, train
from utils.image_io import ImageIOError, load_png, save_png
from utils.image_ops import ImageOpError

logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

PREVIEW_PATCHES = 16

RUNTIME_ERRORS = (
    StyleSpecError,
    PatchGenerationError,
    ImageOpError,
    ImageIOError,
    UNetShapeError,
    BackwardError,
    TrainingError,
    NonFiniteGradientError,
    StylizeError,
    CheckpointError,
    OSError,
)


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_size(value: str) -> Tuple[int, int]:
    """``WxH`` -> ``(width, height)``."""
    try:
        width, height = (int(v) for v in value.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like WIDTHxHEIGHT, got {value!r}")
    if width < 1 or height < 1:
        raise argparse.ArgumentTypeError(f"size must be positive, got {value!r}")
    return width, height


def parse_scale(value: str) -> float:
    try:
        scale = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"scale must be a number, got {value!r}")
    if not 0.0 < scale <= 1.0:
        raise argparse.ArgumentTypeError(f"scale must lie in (0, 1], got {value}")
    return scale


def parse_seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2**64), got {value}")
    return seed


def build_parser() -> CliParser:
    parser = CliParser(prog="stroke-stylizer",
                       description="Stroke-patch generation, denoising U-Net training and stylization")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--threads", type=int, default=None,
                        help="Thread count for torch/OpenCV (default: NUM_THREADS or library default)")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    gen = subparsers.add_parser("gen-patches", help="Render a stroke patch set to a directory")
    source = gen.add_mutually_exclusive_group(required=True)
    source.add_argument("--style", help="Preset name (see GET /presets or the README)")
    source.add_argument("--spec", type=Path, help="Style spec JSON file")
    gen.add_argument("--out", type=Path, required=True, help="Output directory")
    gen.add_argument("--count", type=int, help="Number of patches (overrides the style)")
    gen.add_argument("--size", type=parse_size, help="Patch size as WIDTHxHEIGHT (overrides the style)")
    gen.add_argument("--seed", type=parse_seed, default=0)
    gen.add_argument("--workers", type=int, default=settings.workers, help="Rendering processes")
    gen.add_argument("--preview", type=Path, help="Also write a contact sheet PNG of the first patches")
    gen.set_defaults(handler=cmd_gen_patches)

    tr = subparsers.add_parser("train", help="Train a U-Net on a patch directory")
    tr.add_argument("patches", type=Path, help="Patch directory written by gen-patches")
    tr.add_argument("--out", type=Path, required=True, help="Checkpoint path")
    tr.add_argument("--epochs", type=int, default=10)
    tr.add_argument("--lr", type=float, default=0.001)
    tr.add_argument("--batch", type=int, default=4)
    tr.add_argument("--blur-radius", type=float, default=5.0)
    tr.add_argument("--noise-probability", type=float, default=None,
                    help="Probability of adding the style's noise (default: from the patch set)")
    tr.add_argument("--depth", type=int, default=4)
    tr.add_argument("--base-channels", type=int, default=64)
    tr.add_argument("--seed", type=parse_seed, default=0)
    tr.add_argument("--metrics", type=Path, help="Per-epoch metrics CSV (default: next to the checkpoint)")
    tr.add_argument("--max-steps", type=int, help="Stop after this many optimizer steps")
    tr.add_argument("--workers", type=int, default=1, help="Corruption threads")
    tr.add_argument("--device", default=settings.device, help="cpu, cuda, mps or auto")
    tr.set_defaults(handler=cmd_train)

    st = subparsers.add_parser("style", help="Stylize a PNG with a trained checkpoint")
    st.add_argument("model", type=Path, help="Checkpoint file")
    st.add_argument("input", type=Path, help="Input PNG")
    st.add_argument("output", type=Path, help="Output PNG")
    st.add_argument("--scale", type=parse_scale, default=1.0,
                    help="Shrink factor r in (0, 1]; smaller r gives coarser strokes")
    st.set_defaults(handler=cmd_style)

    ins = subparsers.add_parser("inspect", help="Print a checkpoint's format, architecture and metadata")
    ins.add_argument("model", type=Path, help="Checkpoint file")
    ins.set_defaults(handler=cmd_inspect)
    return parser


def cmd_gen_patches(args) -> int:
    spec = preset(args.style) if args.style else load_style_spec(args.spec)
    if args.count is not None or args.size is not None:
        spec = spec.with_overrides(count=args.count, size=args.size)
    if args.workers < 1:
        raise UsageError(f"--workers must be >= 1, got {args.workers}")

    logger.info(f"Generating {spec.count} {spec.name!r} patches of {spec.width}x{spec.height} "
                f"(seed={args.seed}, workers={args.workers})")
    write_patch_set(args.out, spec, args.seed, workers=args.workers)

    if args.preview:
        patchset = open_patch_set(args.out)
        save_png(contact_sheet(patchset.patches[:PREVIEW_PATCHES]), args.preview)
        logger.info(f"Preview written to {args.preview}")
    print(args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        model_config = UNetConfig(depth=args.depth, base_channels=args.base_channels)
    except ValidationError as e:
        raise UsageError(f"Invalid model configuration: {e}")

    patchset = open_patch_set(args.patches)
    metrics = args.metrics or args.out.with_suffix(".csv")
    cfg = TrainConfig.for_patch_set(
        patchset,
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch,
        blur_radius=args.blur_radius,
        noise_probability=args.noise_probability,
        seed=args.seed,
        checkpoint_path=str(args.out),
        metrics_path=str(metrics),
        workers=args.workers,
        max_steps=args.max_steps,
        device=resolve_device(args.device),
    )
    model = build_unet(model_config, seed=args.seed)
    checkpoint, _ = train(patchset, model, cfg)
    print(f"final_loss={checkpoint.metadata['final_loss']:.8g}")
    print(args.out)
    return EXIT_OK


def cmd_style(args) -> int:
    checkpoint = load_checkpoint(args.model)
    image = load_png(args.input)
    output = stylize(checkpoint, image, args.scale)
    save_png(output, args.output)
    print(args.output)
    return EXIT_OK


def cmd_inspect(args) -> int:
    checkpoint = load_checkpoint(args.model)
    config = checkpoint.config
    print(f"format_version: {checkpoint.version}")
    print(f"config: {json.dumps(config.dict(), sort_keys=True)}")
    print(f"parameters: {checkpoint.parameter_count()} (expected {parameter_count(config)})")
    print(f"tensors: {len(checkpoint.params)}")
    print(f"metadata: {json.dumps(checkpoint.metadata, sort_keys=True)}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    configure_runtime(args.threads)

    try:
        return args.handler(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        logger.error(str(e))
        return EXIT_USAGE
    except RUNTIME_ERRORS as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
