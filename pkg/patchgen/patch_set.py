"""Patch rendering, patch-set generation and the on-disk patch directory format."""

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures.process import BrokenProcessPool
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from patchgen.raster import StrokeRecord, composite_stroke, new_canvas, sample_stroke
from patchgen.styles import StrokeStyleSpec, StyleSpecError, dump_style_spec, spec_from_document
from utils.image_io import ImageIOError, load_png, save_png
from utils.seeding import check_seed, stream

logger = logging.getLogger(__name__)

GENERATOR_VERSION = "stroke-patches/1"
MANIFEST_NAME = "manifest.json"


class PatchGenerationError(RuntimeError):
    """Patch set could not be produced or read back in full."""


def patch_filename(index: int) -> str:
    return f"patch_{index:05}.png"


@dataclass(frozen=True)
class PatchSet:
    spec: StrokeStyleSpec
    seed: int
    patches: Sequence[np.ndarray]
    stroke_logs: Optional[List[List[StrokeRecord]]] = None

    def __len__(self) -> int:
        return len(self.patches)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (3, self.spec.height, self.spec.width)


def render_patch(spec: StrokeStyleSpec, rng: np.random.Generator) -> Tuple[np.ndarray, List[StrokeRecord]]:
    """Render one patch; returns a (3, H, W) float32 image and its stroke log."""
    canvas = new_canvas(spec.height, spec.width, spec.background, channels=4)
    strokes = []
    for order in range(spec.strokes_per_patch):
        record = sample_stroke(spec, rng, order)
        composite_stroke(canvas, record)
        strokes.append(record)

    # Premultiplied canvas over white.
    alpha = canvas[3]
    rgb = canvas[:3] + (1.0 - alpha)
    return rgb.astype(np.float32), strokes


def render_indexed_patch(spec: StrokeStyleSpec, seed: int, index: int) -> Tuple[np.ndarray, List[StrokeRecord]]:
    """Patch ``index`` of the set ``(spec, seed)``, independent of every other index."""
    return render_patch(spec, stream(seed, index))


def iter_patches(spec: StrokeStyleSpec, seed: int, workers: int = 1,
                 indices: Optional[Sequence[int]] = None) -> Iterator[Tuple[int, np.ndarray, List[StrokeRecord]]]:
    """Yield ``(index, image, strokes)`` in index order."""
    seed = check_seed(seed)
    indices = list(range(spec.count)) if indices is None else list(indices)
    render = partial(render_indexed_patch, spec, seed)
    if workers <= 1:
        for index in indices:
            image, strokes = render(index)
            yield index, image, strokes
        return

    chunksize = max(1, len(indices) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for index, (image, strokes) in zip(indices, pool.map(render, indices, chunksize=chunksize)):
            yield index, image, strokes


def generate_patch_set(spec: StrokeStyleSpec, seed: int, workers: int = 1,
                       keep_stroke_logs: bool = False) -> PatchSet:
    """Render the whole set in memory."""
    started = time.time()
    patches: List[np.ndarray] = []
    logs: List[List[StrokeRecord]] = []
    try:
        for _, image, strokes in iter_patches(spec, seed, workers):
            patches.append(image)
            if keep_stroke_logs:
                logs.append(strokes)
    except (MemoryError, BrokenProcessPool) as e:
        raise PatchGenerationError(
            f"Could not render {spec.count} patches of {spec.width}x{spec.height}: {e!r}"
        ) from e

    logger.info(f"Generated {len(patches)} {spec.name} patches in {time.time() - started:.2f}s")
    return PatchSet(spec=spec, seed=check_seed(seed), patches=patches,
                    stroke_logs=logs if keep_stroke_logs else None)


# ----------------------------------------------------------------------------
# Patch directories
# ----------------------------------------------------------------------------

def _manifest(spec: StrokeStyleSpec, seed: int) -> dict:
    return {
        "generator": GENERATOR_VERSION,
        "seed": seed,
        "count": spec.count,
        "width": spec.width,
        "height": spec.height,
        "spec": dump_style_spec(spec),
    }


def write_patch_set(directory: Union[str, Path], spec: StrokeStyleSpec, seed: int,
                    workers: int = 1) -> Path:
    """Render straight to ``directory`` as PNGs plus a manifest.

    The manifest is written last, so a directory without one is incomplete.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise PatchGenerationError(f"Cannot create output directory {directory}: {e}") from e

    seed = check_seed(seed)
    step = max(1, spec.count // 10)
    started = time.time()
    try:
        for index, image, _ in iter_patches(spec, seed, workers):
            save_png(image, directory / patch_filename(index))
            if (index + 1) % step == 0:
                logger.info(f"Rendered {index + 1}/{spec.count} patches")
    except (MemoryError, BrokenProcessPool, ImageIOError) as e:
        raise PatchGenerationError(f"Patch generation into {directory} failed: {e}") from e

    manifest_path = directory / MANIFEST_NAME
    manifest_path.write_text(json.dumps(_manifest(spec, seed), indent=2, sort_keys=True) + "\n")
    logger.info(f"Wrote {spec.count} patches to {directory} in {time.time() - started:.2f}s")
    return manifest_path


def write_patches(patchset: PatchSet, directory: Union[str, Path]) -> Path:
    """Write an in-memory set using the same directory layout."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for index, image in enumerate(patchset.patches):
        save_png(image, directory / patch_filename(index))
    manifest_path = directory / MANIFEST_NAME
    manifest_path.write_text(json.dumps(_manifest(patchset.spec, patchset.seed), indent=2, sort_keys=True) + "\n")
    return manifest_path


class PatchFiles(Sequence):
    """Lazily decoded patch PNGs of a patch directory."""

    def __init__(self, directory: Path, count: int, shape: Tuple[int, int, int]):
        self.directory = directory
        self.count = count
        self.shape = shape

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(self.count))]
        if index < 0:
            index += self.count
        if not 0 <= index < self.count:
            raise IndexError(index)
        path = self.directory / patch_filename(index)
        try:
            image = load_png(path)
        except ImageIOError as e:
            raise PatchGenerationError(f"Unreadable patch {path}: {e}") from e
        if image.shape != self.shape:
            raise PatchGenerationError(f"{path} has shape {image.shape}, manifest says {self.shape}")
        return image


def open_patch_set(directory: Union[str, Path]) -> PatchSet:
    """Open a patch directory written by :func:`write_patch_set`."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise PatchGenerationError(f"No valid manifest in {directory}: {e}") from e

    try:
        spec = spec_from_document(manifest["spec"])
        seed = check_seed(manifest["seed"])
        count = int(manifest["count"])
    except (KeyError, TypeError, ValueError, StyleSpecError) as e:
        raise PatchGenerationError(f"Malformed manifest {manifest_path}: {e}") from e

    missing = [i for i in range(count) if not (directory / patch_filename(i)).exists()]
    if missing:
        raise PatchGenerationError(
            f"{directory} is missing {len(missing)} of {count} patches (first: {patch_filename(missing[0])})"
        )
    logger.info(f"Opened patch set {spec.name!r} with {count} patches from {directory}")
    return PatchSet(spec=spec.with_overrides(count=count), seed=seed,
                    patches=PatchFiles(directory, count, (3, spec.height, spec.width)))


def contact_sheet(patches: Sequence[np.ndarray], columns: int = 4, gap: int = 4) -> np.ndarray:
    """Tile patches into one preview image separated by white gutters."""
    if not patches:
        raise ValueError("contact_sheet needs at least one patch")
    channels, height, width = patches[0].shape
    rows = (len(patches) + columns - 1) // columns
    columns = min(columns, len(patches))
    sheet = np.ones((channels, rows * height + (rows - 1) * gap,
                     columns * width + (columns - 1) * gap), dtype=np.float32)
    for k, patch in enumerate(patches):
        r, c = divmod(k, columns)
        top, left = r * (height + gap), c * (width + gap)
        sheet[:, top:top + height, left:left + width] = patch
    return sheet
