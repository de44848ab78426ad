import math

import numpy as np
import pytest
from scipy import stats

from patchgen.raster import (
    POLYLINE_SEGMENTS,
    StrokeRecord,
    draw_capsule,
    draw_primitive,
    new_canvas,
    polyline_vertices,
    sample_stroke,
    stroke_coverage,
)
from patchgen.styles import BLACK, ColorMode, Primitive, WHITE, preset
from utils.seeding import stream

RED = (1.0, 0.0, 0.0)
SUPERSAMPLE = 16


def _record(primitive, x1, y1, x2, y2, thickness, bends=(), alpha=1.0, color=RED):
    return StrokeRecord(primitive=primitive, x1=x1, y1=y1, x2=x2, y2=y2, thickness=thickness,
                        color=color, alpha=alpha, order=0, bends=bends)


def _segment_distance(px, py, a, b):
    d = b - a
    denom = float(d @ d)
    if denom == 0.0:
        return np.hypot(px - a[0], py - a[1])
    t = np.clip(((px - a[0]) * d[0] + (py - a[1]) * d[1]) / denom, 0.0, 1.0)
    return np.hypot(px - a[0] - t * d[0], py - a[1] - t * d[1])


def _inside_convex(px, py, vertices):
    signs = []
    n = len(vertices)
    for k in range(n):
        a, b = vertices[k], vertices[(k + 1) % n]
        signs.append((b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]))
    signs = np.stack(signs)
    return np.all(signs >= 0, axis=0) | np.all(signs <= 0, axis=0)


def _oracle_polygon(record):
    c, s = math.cos(record.angle), math.sin(record.angle)
    n = np.array([-s, c])
    u = np.array([c, s])
    start = np.array([record.x1, record.y1])
    half_t = record.thickness / 2.0
    if record.primitive == Primitive.DIAMOND:
        half_l = record.length / 2.0
        return [start + u * half_l, start + n * half_t, start - u * half_l, start - n * half_t]
    return [start - n * half_t, np.array([record.x2, record.y2]), start + n * half_t]


def supersampled_coverage(record, height, width):
    """Fraction of a 16x16 grid of points per pixel that lies inside the stroke."""
    offsets = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE
    xs = (np.arange(width)[:, None] + offsets[None, :]).ravel()
    ys = (np.arange(height)[:, None] + offsets[None, :]).ravel()
    px, py = np.meshgrid(xs, ys)

    if record.primitive in (Primitive.CAPSULE, Primitive.POLYLINE):
        if record.primitive == Primitive.CAPSULE:
            points = [np.array([record.x1, record.y1]), np.array([record.x2, record.y2])]
        else:
            # Rebuild the joints from the bends independently of the rasterizer.
            step = record.length / POLYLINE_SEGMENTS
            heading = record.angle
            points = [np.array([record.x1, record.y1])]
            for k in range(POLYLINE_SEGMENTS):
                if k > 0:
                    heading += record.bends[k - 1]
                points.append(points[-1] + step * np.array([math.cos(heading), math.sin(heading)]))
        distance = np.min([_segment_distance(px, py, a, b) for a, b in zip(points[:-1], points[1:])], axis=0)
        inside = distance <= record.thickness / 2.0
    else:
        inside = _inside_convex(px, py, _oracle_polygon(record))

    return inside.reshape(height, SUPERSAMPLE, width, SUPERSAMPLE).mean(axis=(1, 3))


def rasterized_coverage(record, height, width):
    full = np.zeros((height, width))
    result = stroke_coverage(record, height, width)
    if result is not None:
        (y0, y1, x0, x1), coverage = result
        full[y0:y1, x0:x1] = coverage
    return full


@pytest.mark.parametrize("primitive", list(Primitive))
def test_rasterizer_agrees_with_supersampling(primitive):
    rng = stream(2024, list(Primitive).index(primitive))
    size = 32
    worst = 0.0
    for _ in range(50):
        polygon = primitive in (Primitive.DIAMOND, Primitive.WEDGE)
        thickness = rng.uniform(4.0, 12.0) if polygon else rng.uniform(6.0, 12.0)
        length = rng.uniform(2.0, 30.0)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        x1, y1 = rng.uniform(-4.0, size + 4.0, size=2)
        bends = tuple(rng.uniform(-math.pi / 4, math.pi / 4, size=3)) if primitive == Primitive.POLYLINE else ()
        record = _record(primitive, x1, y1, x1 + length * math.cos(phi), y1 + length * math.sin(phi),
                         thickness, bends=bends)
        diff = np.abs(rasterized_coverage(record, size, size) - supersampled_coverage(record, size, size))
        worst = max(worst, float(diff.max()))
    assert worst <= 0.1


@pytest.mark.parametrize("bends", [
    (math.pi / 4, math.pi / 4, math.pi / 4),
    (math.pi / 4, -math.pi / 4, math.pi / 4),
    (0.3, 0.0, -0.6),
])
def test_short_thick_polyline_creases_agree_with_supersampling(bends):
    # 3 px segments under a 10 px pen: neighbouring caps meet in creases.
    record = _record(Primitive.POLYLINE, 14.3, 15.6, 26.3, 15.6, 10.04, bends=bends)
    diff = np.abs(rasterized_coverage(record, 32, 32) - supersampled_coverage(record, 32, 32))
    assert diff.max() <= 0.1


def test_zero_length_capsule_disc():
    canvas = new_canvas(21, 21, WHITE)
    record = _record(Primitive.CAPSULE, 10.5, 10.5, 10.5, 10.5, 10.0)
    out = draw_capsule(canvas, record)
    np.testing.assert_array_equal(out[:3, 10, 10], RED)
    np.testing.assert_array_equal(out[:, 10, 17], WHITE)
    np.testing.assert_array_equal(canvas, new_canvas(21, 21, WHITE))


def test_transparent_stroke_leaves_canvas_unchanged():
    canvas = new_canvas(16, 16, WHITE)
    out = draw_capsule(canvas, _record(Primitive.CAPSULE, 2.0, 3.0, 14.0, 12.0, 6.0, alpha=0.0))
    np.testing.assert_array_equal(out, canvas)


def test_pixels_outside_expanded_box_are_untouched():
    background = (0.2, 0.4, 0.6, 1.0)
    canvas = new_canvas(40, 40, background)
    record = _record(Primitive.CAPSULE, 10.0, 12.0, 20.0, 15.0, 4.0)
    out = draw_capsule(canvas, record)
    changed_rows, changed_cols = np.nonzero(np.any(out != canvas, axis=0))
    assert changed_rows.min() >= math.floor(12.0 - 2.0) - 1
    assert changed_rows.max() < math.ceil(15.0 + 2.0) + 1
    assert changed_cols.min() >= math.floor(10.0 - 2.0) - 1
    assert changed_cols.max() < math.ceil(20.0 + 2.0) + 1
    np.testing.assert_array_equal(out[:, 30:, :], canvas[:, 30:, :])


def test_opaque_interior_fully_replaces():
    canvas = new_canvas(20, 40, WHITE)
    out = draw_capsule(canvas, _record(Primitive.CAPSULE, 5.0, 10.0, 35.0, 10.0, 8.0, color=(0.1, 0.2, 0.3)))
    np.testing.assert_array_equal(out[:3, 9, 20], (0.1, 0.2, 0.3))


def test_square_diamond_centre_takes_stroke_colour():
    canvas = new_canvas(21, 21, WHITE)
    record = _record(Primitive.DIAMOND, 10.5, 10.5, 10.5 + 8 * math.cos(0.3), 10.5 + 8 * math.sin(0.3), 8.0)
    out = draw_primitive(canvas, record)
    np.testing.assert_array_equal(out[:3, 10, 10], RED)


def test_wedge_apex_thinner_than_base():
    record = _record(Primitive.WEDGE, 5.5, 10.5, 25.5, 10.5, 8.0)
    coverage = rasterized_coverage(record, 21, 32)
    assert coverage[10, 25] < coverage[10, 5]


def test_straight_polyline_matches_capsule():
    canvas = new_canvas(48, 48, WHITE)
    start, end = (6.3, 9.1), (40.2, 37.7)
    polyline = _record(Primitive.POLYLINE, *start, *end, 5.0, bends=(0.0, 0.0, 0.0))
    capsule = _record(Primitive.CAPSULE, *start, *end, 5.0)
    np.testing.assert_allclose(draw_primitive(canvas, polyline), draw_capsule(canvas, capsule), atol=1e-9)
    np.testing.assert_allclose(polyline_vertices(polyline)[-1], end, atol=1e-9)


def test_sample_stroke_zero_length():
    spec = preset("wet_brush").with_overrides(stroke_length=0.0)
    record = sample_stroke(spec, stream(5))
    assert record.x2 == record.x1 and record.y2 == record.y1


def test_sample_stroke_fixed_colour():
    spec = preset("rough_silverpoint")
    for seed in range(5):
        record = sample_stroke(spec, stream(seed))
        assert record.color == (0.0, 0.0, 0.0)
        assert record.alpha == 1.0


def test_fixed_colour_alpha_scales_opacity():
    spec = preset("rough_silverpoint").with_overrides(
        color=(0.0, 0.0, 0.0, 0.5), opacity=0.5, color_mode=ColorMode.FIXED,
    )
    assert sample_stroke(spec, stream(0)).alpha == 0.25


def test_sample_stroke_random_colour_in_range():
    spec = preset("wet_brush")
    rng = stream(11)
    for _ in range(100):
        record = sample_stroke(spec, rng)
        assert all(0.0 <= c <= 1.0 for c in record.color)
        assert record.alpha == 1.0


def test_sample_stroke_distributions():
    spec = preset("wet_brush")
    rng = stream(7)
    records = [sample_stroke(spec, rng) for _ in range(100_000)]
    x1 = np.array([r.x1 for r in records])
    phis = np.mod([r.angle for r in records], 2.0 * math.pi)

    assert abs(x1.mean() - 200.0) <= 2.0
    assert x1.min() >= -40.0 and x1.max() <= 440.0
    assert stats.kstest(phis, "uniform", args=(0.0, 2.0 * math.pi)).pvalue > 0.01


def test_polyline_strokes_carry_bends():
    spec = preset("speedball_pen")
    record = sample_stroke(spec, stream(3))
    assert record.primitive == Primitive.POLYLINE
    assert len(record.bends) == POLYLINE_SEGMENTS - 1
    assert all(abs(b) <= math.pi / 4 for b in record.bends)


def test_black_background_canvas():
    canvas = new_canvas(4, 5, BLACK, channels=3)
    assert canvas.shape == (3, 4, 5)
    assert not canvas.any()
