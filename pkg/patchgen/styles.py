"""Stroke style specifications, presets and the JSON style-spec file format."""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, Extra, ValidationError, root_validator, validator

from utils.image_ops import NOISE_GAUSSIAN, NOISE_NONE, NOISE_UNIFORM

logger = logging.getLogger(__name__)

RGBA = Tuple[float, float, float, float]

WHITE: RGBA = (1.0, 1.0, 1.0, 1.0)
BLACK: RGBA = (0.0, 0.0, 0.0, 1.0)


class StyleSpecError(ValueError):
    """Invalid or malformed stroke style specification."""


class UnknownPresetError(StyleSpecError):
    pass


class Primitive(str, Enum):
    CAPSULE = "capsule"
    DIAMOND = "diamond"
    WEDGE = "wedge"
    POLYLINE = "polyline"


class ColorMode(str, Enum):
    RANDOM_RGB = "random_rgb"
    FIXED = "fixed"


class Fidelity(str, Enum):
    PUBLISHED = "published"
    APPROXIMATE = "approximate"


def _check_rgba(value: RGBA) -> RGBA:
    if any(not 0.0 <= c <= 1.0 for c in value):
        raise ValueError(f"colour channels must lie in [0, 1], got {value}")
    return value


class NoiseSpec(BaseModel):
    kind: str = NOISE_NONE
    sigma_8bit: float = 0.0

    class Config:
        extra = Extra.forbid
        allow_mutation = False

    @validator("kind")
    def _known_kind(cls, v):
        if v not in (NOISE_NONE, NOISE_GAUSSIAN, NOISE_UNIFORM):
            raise ValueError(f"noise kind must be none, gaussian or uniform, got {v!r}")
        return v

    @validator("sigma_8bit")
    def _non_negative(cls, v):
        if v < 0:
            raise ValueError("sigma_8bit must be >= 0")
        return v

    @property
    def is_active(self) -> bool:
        return self.kind != NOISE_NONE


class StrokeStyleSpec(BaseModel):
    name: str
    width: int = 400
    height: int = 400
    count: int = 5000
    background: RGBA = WHITE
    primitive: Primitive = Primitive.CAPSULE
    strokes_per_patch: int = 50
    stroke_length: float = 80.0
    stroke_thickness: float = 40.0
    color_mode: ColorMode = ColorMode.RANDOM_RGB
    color: Optional[RGBA] = None
    opacity: float = 1.0
    noise: NoiseSpec = NoiseSpec()
    noise_probability: Optional[float] = None
    fidelity: Fidelity = Fidelity.APPROXIMATE

    class Config:
        extra = Extra.forbid
        allow_mutation = False
        use_enum_values = False

    @validator("width", "height", "count")
    def _at_least_one(cls, v, field):
        if v < 1:
            raise ValueError(f"{field.name} must be >= 1")
        return v

    @validator("strokes_per_patch")
    def _non_negative_strokes(cls, v):
        if v < 0:
            raise ValueError("strokes_per_patch must be >= 0")
        return v

    @validator("stroke_length")
    def _non_negative_length(cls, v):
        if v < 0:
            raise ValueError("stroke_length must be >= 0")
        return v

    @validator("stroke_thickness")
    def _thickness(cls, v):
        if v < 1:
            raise ValueError("stroke_thickness must be >= 1 (sub-pixel strokes are not supported)")
        return v

    @validator("opacity")
    def _opacity(cls, v):
        if not 0.0 <= v <= 1.0:
            raise ValueError("opacity must lie in [0, 1]")
        return v

    @validator("background")
    def _background(cls, v):
        return _check_rgba(v)

    @validator("color")
    def _color(cls, v):
        return None if v is None else _check_rgba(v)

    @root_validator(skip_on_failure=True)
    def _color_mode_and_noise(cls, values):
        if values["color_mode"] == ColorMode.FIXED and values.get("color") is None:
            raise ValueError("color_mode 'fixed' requires a color")
        probability = values.get("noise_probability")
        if probability is None:
            values["noise_probability"] = 1.0 if values["noise"].is_active else 0.0
        elif not 0.0 <= probability <= 1.0:
            raise ValueError("noise_probability must lie in [0, 1]")
        return values

    def with_overrides(self, count: Optional[int] = None,
                       size: Optional[Tuple[int, int]] = None, **fields) -> "StrokeStyleSpec":
        """Copy with CLI-style overrides; ``size`` is ``(width, height)``."""
        data = self.dict()
        if count is not None:
            data["count"] = count
        if size is not None:
            data["width"], data["height"] = size
        data.update(fields)
        return build_spec(data)


def build_spec(data: Dict[str, Any]) -> StrokeStyleSpec:
    try:
        return StrokeStyleSpec.parse_obj(data)
    except ValidationError as e:
        raise StyleSpecError(f"Invalid style spec: {e}") from e


_WET_BRUSH = dict(
    width=400, height=400, count=5000, background=WHITE,
    primitive=Primitive.CAPSULE, strokes_per_patch=50,
    stroke_length=80.0, stroke_thickness=40.0,
    color_mode=ColorMode.RANDOM_RGB, opacity=1.0,
    noise=NoiseSpec(kind=NOISE_GAUSSIAN, sigma_8bit=500.0),
)

_SILVERPOINT = dict(
    _WET_BRUSH,
    strokes_per_patch=700, stroke_length=50.0, stroke_thickness=1.0,
    color_mode=ColorMode.FIXED, color=BLACK, noise=NoiseSpec(),
)

PRESETS: Dict[str, Dict[str, Any]] = {
    "wet_brush": dict(_WET_BRUSH, fidelity=Fidelity.PUBLISHED),
    "rough_silverpoint": dict(_SILVERPOINT, fidelity=Fidelity.PUBLISHED),
    "fine_silverpoint": dict(_SILVERPOINT, strokes_per_patch=1200, fidelity=Fidelity.PUBLISHED),
    "letratape": dict(_SILVERPOINT, strokes_per_patch=200, stroke_thickness=5.0,
                      fidelity=Fidelity.PUBLISHED),
    "smooth_brush": dict(_SILVERPOINT, strokes_per_patch=50, stroke_length=120.0,
                         stroke_thickness=40.0, noise=NoiseSpec(kind=NOISE_GAUSSIAN, sigma_8bit=500.0),
                         fidelity=Fidelity.PUBLISHED),
    # Styles only shown as imagery; parameters here are our own approximations.
    "speedball_pen": dict(_WET_BRUSH, primitive=Primitive.POLYLINE, strokes_per_patch=60,
                          stroke_length=60.0, stroke_thickness=6.0,
                          color_mode=ColorMode.FIXED, color=BLACK, noise=NoiseSpec()),
    "diamond_brush": dict(_WET_BRUSH, primitive=Primitive.DIAMOND, strokes_per_patch=80,
                          stroke_length=60.0, stroke_thickness=24.0),
    "cuneiform_brush": dict(_WET_BRUSH, primitive=Primitive.WEDGE, strokes_per_patch=120,
                            stroke_length=50.0, stroke_thickness=20.0,
                            color_mode=ColorMode.FIXED, color=(0.15, 0.1, 0.05, 1.0),
                            noise=NoiseSpec(kind=NOISE_UNIFORM, sigma_8bit=128.0)),
    "scribble_pencil": dict(_WET_BRUSH, primitive=Primitive.POLYLINE, strokes_per_patch=150,
                            stroke_length=90.0, stroke_thickness=2.0,
                            color_mode=ColorMode.FIXED, color=(0.2, 0.2, 0.2, 1.0),
                            opacity=0.8, noise=NoiseSpec()),
}


def available_presets() -> List[Tuple[str, Fidelity]]:
    return [(name, PRESETS[name].get("fidelity", Fidelity.APPROXIMATE)) for name in PRESETS]


def preset(name: str) -> StrokeStyleSpec:
    """Fully populated spec for a named preset."""
    if name not in PRESETS:
        available = ", ".join(PRESETS)
        raise UnknownPresetError(f"Unknown preset {name!r}. Available presets: {available}")
    return build_spec(dict(PRESETS[name], name=name))


# ----------------------------------------------------------------------------
# JSON style-spec files (colours as 8-bit RGBA arrays)
# ----------------------------------------------------------------------------

_COLOR_FIELDS = ("background", "color")


def _color_from_8bit(value: Any, field: str) -> RGBA:
    if (not isinstance(value, (list, tuple)) or len(value) != 4
            or not all(isinstance(c, int) and not isinstance(c, bool) and 0 <= c <= 255 for c in value)):
        raise StyleSpecError(f"{field} must be 4 integers in [0, 255], got {value!r}")
    return tuple(c / 255.0 for c in value)


def spec_from_document(document: Dict[str, Any]) -> StrokeStyleSpec:
    if not isinstance(document, dict):
        raise StyleSpecError("Style spec must be a JSON object")
    data = dict(document)
    for field in _COLOR_FIELDS:
        if data.get(field) is not None:
            data[field] = _color_from_8bit(data[field], field)
    return build_spec(data)


def dump_style_spec(spec: StrokeStyleSpec) -> Dict[str, Any]:
    """JSON-ready document mirroring the spec with 8-bit colours."""
    document = json.loads(spec.json())
    for field in _COLOR_FIELDS:
        if document.get(field) is not None:
            document[field] = [int(round(c * 255)) for c in document[field]]
    return document


def load_style_spec(path: Union[str, Path]) -> StrokeStyleSpec:
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise StyleSpecError(f"Malformed style spec {path}: {e}") from e
    except OSError as e:
        raise StyleSpecError(f"Could not read style spec {path}: {e}") from e
    spec = spec_from_document(document)
    logger.info(f"Loaded style spec {spec.name!r} from {path}")
    return spec
