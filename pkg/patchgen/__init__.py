from .styles import (
    StrokeStyleSpec,
    NoiseSpec,
    Primitive,
    ColorMode,
    Fidelity,
    StyleSpecError,
    UnknownPresetError,
    preset,
    available_presets,
    load_style_spec,
    dump_style_spec,
)
from .raster import (
    StrokeRecord,
    sample_stroke,
    draw_capsule,
    draw_primitive,
)
from .patch_set import (
    PatchSet,
    PatchGenerationError,
    render_patch,
    render_indexed_patch,
    generate_patch_set,
    write_patch_set,
    open_patch_set,
    contact_sheet,
)

__all__ = [
    "StrokeStyleSpec",
    "NoiseSpec",
    "Primitive",
    "ColorMode",
    "Fidelity",
    "StyleSpecError",
    "UnknownPresetError",
    "preset",
    "available_presets",
    "load_style_spec",
    "dump_style_spec",
    "StrokeRecord",
    "sample_stroke",
    "draw_capsule",
    "draw_primitive",
    "PatchSet",
    "PatchGenerationError",
    "render_patch",
    "render_indexed_patch",
    "generate_patch_set",
    "write_patch_set",
    "open_patch_set",
    "contact_sheet",
]
