"""
Deterministic figure output: PPM rasters (heatmaps, color strips) and SVG
documents (trajectories, bar charts, boxplots, polar correlation views).

Numbers in SVG output are written with 6 significant digits so identical
inputs give byte-identical files.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

from errors import (
    BadRange,
    EmptyEmbedding,
    EmptyInput,
    LengthMismatch,
    NegativeHeight,
    NonFinite,
    TooManyVariables,
    WrongDimensionality,
)

logger = logging.getLogger(__name__)

SVG_SIZE = 400
CHART_WIDTH = 480
CHART_HEIGHT = 320
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 48, 12, 20, 32
PLOT_WIDTH = CHART_WIDTH - MARGIN_LEFT - MARGIN_RIGHT
PLOT_HEIGHT = CHART_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
MAX_POLAR_VARIABLES = 12


# ----------------------------- Raster -----------------------------

@dataclass
class Image:
    width: int
    height: int
    pixels: np.ndarray  # height x width x 3, uint8, top row first

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width, 3):
            raise BadRange(f"Pixel array {self.pixels.shape} does not match {self.width}x{self.height} RGB")

    def to_ppm(self) -> bytes:
        header = f"P6\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + self.pixels.tobytes()


def write_ppm(image: Image, path) -> None:
    with open(path, "wb") as f:
        f.write(image.to_ppm())
    logger.info(f"Wrote {image.width}x{image.height} PPM to {path}")


@dataclass(frozen=True)
class ColorMap:
    name: str
    anchors: Tuple[Tuple[int, int, int], ...]

    def __post_init__(self):
        if len(self.anchors) < 2:
            raise BadRange("A colormap needs at least 2 anchors")

    def __call__(self, values) -> np.ndarray:
        """Map values in [0, 1] to RGB8 by linear interpolation between equally spaced anchors."""
        values = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
        anchors = np.asarray(self.anchors, dtype=np.float64)
        positions = np.linspace(0.0, 1.0, len(anchors))
        channels = [np.interp(values, positions, anchors[:, c]) for c in range(3)]
        return np.round(np.stack(channels, axis=-1)).astype(np.uint8)


GRAYSCALE = ColorMap("gray", ((0, 0, 0), (255, 255, 255)))
HEAT = ColorMap("heat", ((0, 0, 0), (255, 0, 0), (255, 255, 0)))
COLORMAPS = {"gray": GRAYSCALE, "grayscale": GRAYSCALE, "heat": HEAT}


def colormap_by_name(name: str) -> ColorMap:
    try:
        return COLORMAPS[name]
    except KeyError:
        raise BadRange(f"Unknown colormap {name!r}; expected one of {sorted(COLORMAPS)}")


def _minmax(values: np.ndarray, axis=None) -> np.ndarray:
    """Scale to [0, 1]; a constant range maps to 0."""
    lo = values.min(axis=axis, keepdims=axis is not None)
    span = values.max(axis=axis, keepdims=axis is not None) - lo
    return np.divide(values - lo, span, out=np.zeros_like(values), where=span > 0)


def render_heatmap(matrix, cmap: ColorMap = GRAYSCALE, invert: bool = False) -> Image:
    """One pixel per cell, matrix row 0 at the bottom of the image."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if not np.all(np.isfinite(matrix)):
        raise NonFinite("Heatmap input contains NaN or infinite values")
    normalized = _minmax(matrix)
    if invert:
        normalized = 1.0 - normalized
    pixels = cmap(np.flipud(normalized))
    return Image(width=matrix.shape[1], height=matrix.shape[0], pixels=pixels)


def render_color_strip(embedding, column_width: int = 4, height: int = 64) -> Image:
    """Paint point i as a column block whose RGB is its three min-max scaled coordinates."""
    points = np.asarray(embedding.points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise WrongDimensionality(f"A color strip needs a 3-dimensional embedding, got shape {points.shape}")
    if column_width < 1 or height < 1:
        raise BadRange("column_width and height must be at least 1 pixel")
    colors = np.round(_minmax(points, axis=0) * 255.0).astype(np.uint8)
    row = np.repeat(colors, column_width, axis=0)
    pixels = np.broadcast_to(row, (height,) + row.shape)
    return Image(width=row.shape[0], height=height, pixels=pixels)


# ----------------------------- SVG helpers -----------------------------

def _fmt(value: float) -> str:
    value = float(value)
    return f"{0.0 if value == 0 else value:.6g}"


def _svg_open(width: int, height: int) -> List[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]


def _svg_close(parts: List[str]) -> str:
    return "\n".join(parts + ["</svg>"]) + "\n"


def _line(x1, y1, x2, y2, cls: str, extra: str = "") -> str:
    return (f'<line class="{cls}" x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}"'
            f'{extra}/>')


def _text(x, y, content, cls: str = "label", anchor: str = "middle") -> str:
    return (f'<text class="{cls}" x="{_fmt(x)}" y="{_fmt(y)}" text-anchor="{anchor}" font-size="10">'
            f'{escape(str(content))}</text>')


def nice_ticks(maximum: float, target: int = 5) -> List[float]:
    """Axis ticks from 0 to maximum with a 1-2-5 step."""
    if maximum <= 0:
        return [0.0]
    raw = maximum / target
    magnitude = 10.0 ** math.floor(math.log10(raw))
    step = next(m * magnitude for m in (1, 2, 5, 10) if m * magnitude >= raw)
    count = int(math.floor(maximum / step + 1e-9))
    return [round(i * step, 12) for i in range(count + 1)]


# ----------------------------- Trajectory -----------------------------

def isometric_projection(points: np.ndarray) -> np.ndarray:
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    return np.column_stack([x - z * math.cos(math.pi / 6), y - z * math.sin(math.pi / 6)])


def render_trajectory(embedding, label_stride: int = 1, size: int = SVG_SIZE) -> str:
    """Order-annotated 3D trajectory under an isometric projection.

    Consecutive points are joined by line segments; every label_stride-th
    point is labelled with its index (0 disables labels).
    """
    points = np.asarray(embedding.points, dtype=np.float64)
    if points.size == 0:
        raise EmptyEmbedding("Cannot draw an empty trajectory")
    if points.shape[1] != 3:
        raise WrongDimensionality(f"A trajectory needs a 3-dimensional embedding, got {points.shape[1]}")
    if label_stride < 0:
        raise BadRange("label_stride must be >= 0")

    flat = isometric_projection(points)
    margin = 0.05 * size
    lo = flat.min(axis=0)
    span = flat.max(axis=0) - lo
    usable = size - 2 * margin
    scale = usable / span.max() if span.max() > 0 else 0.0
    offset = margin + (usable - span * scale) / 2.0
    xs = offset[0] + (flat[:, 0] - lo[0]) * scale
    # SVG y grows downwards
    ys = size - (offset[1] + (flat[:, 1] - lo[1]) * scale)

    parts = _svg_open(size, size)
    for i in range(len(points) - 1):
        parts.append(_line(xs[i], ys[i], xs[i + 1], ys[i + 1], "segment", ' stroke="black" stroke-width="1"'))
    for i, (x, y) in enumerate(zip(xs, ys)):
        parts.append(f'<circle class="point" cx="{_fmt(x)}" cy="{_fmt(y)}" r="2" fill="black"/>')
        if label_stride and i % label_stride == 0:
            parts.append(_text(x + 4, y - 4, i, anchor="start"))
    return _svg_close(parts)


# ----------------------------- Bar chart -----------------------------

def render_bar_chart(labels: Sequence[str], heights: Sequence[float], title: str = "") -> str:
    """Bar chart scaled so the tallest bar fills the plot height."""
    heights = np.asarray(heights, dtype=np.float64)
    if len(labels) != heights.size:
        raise LengthMismatch(f"{len(labels)} labels for {heights.size} heights")
    if heights.size == 0:
        raise EmptyInput("A bar chart needs at least one bar")
    if not np.all(np.isfinite(heights)):
        raise NonFinite("Bar heights must be finite")
    if np.any(heights < 0):
        raise NegativeHeight("Bar heights must be non-negative")

    top = float(heights.max())
    scale = PLOT_HEIGHT / top if top > 0 else 0.0
    baseline = MARGIN_TOP + PLOT_HEIGHT
    slot = PLOT_WIDTH / heights.size

    parts = _svg_open(CHART_WIDTH, CHART_HEIGHT)
    if title:
        parts.append(_text(CHART_WIDTH / 2, MARGIN_TOP - 6, title, cls="title"))
    parts.append(_line(MARGIN_LEFT, MARGIN_TOP, MARGIN_LEFT, baseline, "axis", ' stroke="black"'))
    parts.append(_line(MARGIN_LEFT, baseline, MARGIN_LEFT + PLOT_WIDTH, baseline, "axis", ' stroke="black"'))
    for tick in nice_ticks(top):
        y = baseline - tick * scale
        parts.append(_line(MARGIN_LEFT - 4, y, MARGIN_LEFT, y, "tick", ' stroke="black"'))
        parts.append(_text(MARGIN_LEFT - 6, y + 3, _fmt(tick), cls="tick-label", anchor="end"))
    for i, (label, value) in enumerate(zip(labels, heights)):
        bar_height = value * scale
        x = MARGIN_LEFT + i * slot + slot * 0.1
        parts.append(
            f'<rect class="bar" x="{_fmt(x)}" y="{_fmt(baseline - bar_height)}" width="{_fmt(slot * 0.8)}" '
            f'height="{_fmt(bar_height)}" fill="steelblue"/>'
        )
        parts.append(_text(MARGIN_LEFT + (i + 0.5) * slot, baseline + 14, label))
    return _svg_close(parts)


# ----------------------------- Boxplots -----------------------------

@dataclass
class BoxplotStats:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    whisker_low: float
    whisker_high: float
    outliers: List[float] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def boxplot_stats(values) -> BoxplotStats:
    """Five-number summary with linearly interpolated quartiles and 1.5 IQR whiskers."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyInput("boxplot_stats needs at least one value")
    if not np.all(np.isfinite(values)):
        raise NonFinite("boxplot_stats needs finite values")

    q1, median, q3 = np.percentile(values, [25, 50, 75], method="linear")
    iqr = q3 - q1
    low_fence, high_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = values[(values >= low_fence) & (values <= high_fence)]
    outliers = np.sort(values[(values < low_fence) | (values > high_fence)])
    return BoxplotStats(
        min=float(values.min()),
        q1=float(q1),
        median=float(median),
        q3=float(q3),
        max=float(values.max()),
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
        outliers=[float(v) for v in outliers],
    )


def render_boxplots(groups: Sequence[Tuple[str, BoxplotStats]], title: str = "") -> str:
    """Side-by-side box-and-whisker glyphs on one shared value axis."""
    if not groups:
        raise EmptyInput("render_boxplots needs at least one group")
    lo = min(stats.min for _, stats in groups)
    hi = max(stats.max for _, stats in groups)
    scale = PLOT_HEIGHT / (hi - lo) if hi > lo else 0.0
    baseline = MARGIN_TOP + PLOT_HEIGHT
    slot = PLOT_WIDTH / len(groups)

    def y_of(value):
        return baseline - (value - lo) * scale

    parts = _svg_open(CHART_WIDTH, CHART_HEIGHT)
    if title:
        parts.append(_text(CHART_WIDTH / 2, MARGIN_TOP - 6, title, cls="title"))
    parts.append(_line(MARGIN_LEFT, MARGIN_TOP, MARGIN_LEFT, baseline, "axis", ' stroke="black"'))
    parts.append(_text(MARGIN_LEFT - 6, y_of(lo) + 3, _fmt(lo), cls="tick-label", anchor="end"))
    parts.append(_text(MARGIN_LEFT - 6, y_of(hi) + 3, _fmt(hi), cls="tick-label", anchor="end"))

    for i, (label, stats) in enumerate(groups):
        center = MARGIN_LEFT + (i + 0.5) * slot
        half = slot * 0.25
        parts.append(_line(center, y_of(stats.whisker_low), center, y_of(stats.q1), "whisker", ' stroke="black"'))
        parts.append(_line(center, y_of(stats.q3), center, y_of(stats.whisker_high), "whisker", ' stroke="black"'))
        for cap in (stats.whisker_low, stats.whisker_high):
            parts.append(_line(center - half / 2, y_of(cap), center + half / 2, y_of(cap), "cap", ' stroke="black"'))
        parts.append(
            f'<rect class="box" x="{_fmt(center - half)}" y="{_fmt(y_of(stats.q3))}" width="{_fmt(2 * half)}" '
            f'height="{_fmt((stats.q3 - stats.q1) * scale)}" fill="none" stroke="black"/>'
        )
        parts.append(_line(center - half, y_of(stats.median), center + half, y_of(stats.median), "median",
                           ' stroke="black" stroke-width="2"'))
        for value in stats.outliers:
            parts.append(f'<circle class="outlier" cx="{_fmt(center)}" cy="{_fmt(y_of(value))}" r="3" '
                         f'fill="none" stroke="black"/>')
        parts.append(_text(center, baseline + 14, label))
    return _svg_close(parts)


# ----------------------------- Polar correlation -----------------------------

@dataclass
class PolarPair:
    i: int
    j: int
    required: float
    drawn: float
    invalid: bool


@dataclass
class PolarLayout:
    positions: np.ndarray
    pairs: List[PolarPair]

    @property
    def invalid_pairs(self) -> List[Tuple[int, int]]:
        return [(p.i, p.j) for p in self.pairs if p.invalid]


def polar_layout(report, tol: float = None) -> PolarLayout:
    """Place variable i at the cumulative angle of the chain 0-1-...-i and compare every pair's drawn separation."""
    angles = np.asarray(report.angles, dtype=np.float64)
    n = angles.shape[0]
    if n > MAX_POLAR_VARIABLES:
        raise TooManyVariables(f"Polar view supports at most {MAX_POLAR_VARIABLES} variables, got {n}")
    tol = report.tolerance if tol is None else tol

    steps = np.array([angles[i, i + 1] for i in range(n - 1)])
    positions = np.concatenate([[0.0], np.cumsum(steps)])
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            drawn = abs(positions[j] - positions[i]) % (2 * math.pi)
            if drawn > math.pi:
                drawn = 2 * math.pi - drawn
            required = float(angles[i, j])
            pairs.append(PolarPair(i, j, required, float(drawn), abs(drawn - required) > tol))
    return PolarLayout(positions=positions, pairs=pairs)


def render_polar_correlation(report, tol: float = None) -> str:
    """Unit-circle view of a correlation matrix: spokes per variable, chords per pair annotated with arccos(r)."""
    layout = polar_layout(report, tol)
    center = SVG_SIZE / 2.0
    radius = SVG_SIZE * 0.4

    def point(angle, r=radius):
        return center + r * math.cos(angle), center - r * math.sin(angle)

    parts = _svg_open(SVG_SIZE, SVG_SIZE)
    parts.append(f'<circle class="unit-circle" cx="{_fmt(center)}" cy="{_fmt(center)}" r="{_fmt(radius)}" '
                 f'fill="none" stroke="gray"/>')
    for pair in layout.pairs:
        (x1, y1), (x2, y2) = point(layout.positions[pair.i]), point(layout.positions[pair.j])
        style = ' stroke="red" stroke-dasharray="4 2"' if pair.invalid else ' stroke="black"'
        cls = "chord invalid" if pair.invalid else "chord"
        parts.append(_line(x1, y1, x2, y2, cls, style))
        parts.append(_text((x1 + x2) / 2, (y1 + y2) / 2, _fmt(pair.required), cls="angle"))
    for i, angle in enumerate(layout.positions):
        x, y = point(angle)
        parts.append(_line(center, center, x, y, "spoke", ' stroke="gray"'))
        lx, ly = point(angle, radius * 1.1)
        parts.append(_text(lx, ly + 3, i))
    if layout.invalid_pairs:
        logger.info(f"Polar view flags {len(layout.invalid_pairs)} pair(s) that cannot be drawn at their angle")
    return _svg_close(parts)
