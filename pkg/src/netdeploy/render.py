"""Figure output: deterministic standalone SVG deployment plots and a
matplotlib run report rendered alongside the CSV traces."""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np

from .network import Network
from .objective import DensityField
from .voronoi import NetworkCells, SensorSet

__all__ = ["emit_svg", "save_report_figure"]

_DENSITY_GRID = (200, 100)
_DENSITY_BANDS = 8
# Light-to-dark band fills; darker marks preferential areas.
_BAND_GRAYS = [232, 216, 199, 180, 158, 134, 108, 80]

SENSOR_FILL = "#3f74a3"
NETWORK_STROKE = "#555555"


def _fmt(x: float) -> str:
    return format(x, ".4f")


def _sensor_color(i: int) -> str:
    hue = (i * 0.61803398875) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.82)
    return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


class _Canvas:
    """World-to-pixel mapping with the y axis flipped for SVG."""

    def __init__(self, bbox: tuple[float, float, float, float], width: float = 1000.0):
        x0, y0, x1, y1 = bbox
        pad = 0.04 * max(x1 - x0, y1 - y0, 1.0)
        self.x0, self.y0 = x0 - pad, y0 - pad
        self.x1, self.y1 = x1 + pad, y1 + pad
        self.scale = width / (self.x1 - self.x0)
        self.width = width
        self.height = (self.y1 - self.y0) * self.scale

    def x(self, wx: float) -> float:
        return (wx - self.x0) * self.scale

    def y(self, wy: float) -> float:
        return (self.y1 - wy) * self.scale

    def d(self, w: float) -> float:
        return w * self.scale


def _band_polygons(xs, ys, values, level):
    """Filled marching squares for {value >= level} on one grid level.

    Yields ('rect', x0, y0, x1, y1) for runs of fully-covered cells and
    ('poly', points) for boundary cells clipped by linear interpolation.
    """
    above = values >= level
    nx = xs.size - 1
    ny = ys.size - 1
    full = above[:-1, :-1] & above[1:, :-1] & above[1:, 1:] & above[:-1, 1:]
    any_above = above[:-1, :-1] | above[1:, :-1] | above[1:, 1:] | above[:-1, 1:]
    for j in range(ny):
        i = 0
        while i < nx:
            if full[i, j]:
                i0 = i
                while i < nx and full[i, j]:
                    i += 1
                yield ("rect", xs[i0], ys[j], xs[i], ys[j + 1])
                continue
            if any_above[i, j]:
                corners = ((xs[i], ys[j], values[i, j]),
                           (xs[i + 1], ys[j], values[i + 1, j]),
                           (xs[i + 1], ys[j + 1], values[i + 1, j + 1]),
                           (xs[i], ys[j + 1], values[i, j + 1]))
                pts = []
                for a in range(4):
                    xa, ya, va = corners[a]
                    xb, yb, vb = corners[(a + 1) % 4]
                    if va >= level:
                        pts.append((xa, ya))
                    if (va >= level) != (vb >= level):
                        t = (level - va) / (vb - va)
                        pts.append((xa + t * (xb - xa), ya + t * (yb - ya)))
                if len(pts) >= 3:
                    yield ("poly", pts)
            i += 1


def _density_layer(canvas: _Canvas, density: DensityField) -> list[str]:
    nx, ny = _DENSITY_GRID
    xs = np.linspace(canvas.x0, canvas.x1, nx + 1)
    ys = np.linspace(canvas.y0, canvas.y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    values = density.eval_at(np.column_stack([gx.ravel(), gy.ravel()])).reshape(gx.shape)
    vmax = float(values.max())
    if vmax <= 0.0:
        return []
    parts = []
    for band in range(_DENSITY_BANDS):
        level = vmax * (band + 1) / (_DENSITY_BANDS + 1)
        g = _BAND_GRAYS[band]
        color = f"#{g:02x}{g:02x}{g:02x}"
        for shape in _band_polygons(xs, ys, values, level):
            if shape[0] == "rect":
                _, wx0, wy0, wx1, wy1 = shape
                px = canvas.x(wx0)
                py = canvas.y(wy1)
                parts.append(
                    f'<rect x="{_fmt(px)}" y="{_fmt(py)}" '
                    f'width="{_fmt(canvas.d(wx1 - wx0))}" '
                    f'height="{_fmt(canvas.d(wy1 - wy0))}" fill="{color}"/>')
            else:
                pts = " ".join(f"{_fmt(canvas.x(px))},{_fmt(canvas.y(py))}"
                               for px, py in shape[1])
                parts.append(f'<polygon points="{pts}" fill="{color}"/>')
    return parts


def emit_svg(network: Network, density: DensityField | None, sensors: SensorSet | None,
             path, *, sensing_radius: float, cells: NetworkCells | None = None,
             show_density: bool = False) -> None:
    """Standalone deterministic SVG: network polylines, optional density
    bands and per-sensor cell coloring, sensors as shaded circles of radius
    7/8 of the sensing radius."""
    canvas = _Canvas(network.bounding_box())
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(canvas.width)}" '
        f'height="{_fmt(canvas.height)}" '
        f'viewBox="0 0 {_fmt(canvas.width)} {_fmt(canvas.height)}">',
        f'<rect width="{_fmt(canvas.width)}" height="{_fmt(canvas.height)}" fill="#ffffff"/>',
    ]
    if show_density and density is not None:
        parts.extend(_density_layer(canvas, density))

    for k in range(network.segment_count):
        a = network.segment_starts[k]
        b = network.segment_ends[k]
        parts.append(
            f'<polyline points="{_fmt(canvas.x(a[0]))},{_fmt(canvas.y(a[1]))} '
            f'{_fmt(canvas.x(b[0]))},{_fmt(canvas.y(b[1]))}" '
            f'stroke="{NETWORK_STROKE}" stroke-width="1.5" fill="none"/>')

    if cells is not None:
        for i, intervals in enumerate(cells.cells):
            color = _sensor_color(i)
            for (k, t0, t1) in intervals:
                a = network.segment_starts[k] + t0 * network._u[k]
                b = network.segment_starts[k] + t1 * network._u[k]
                parts.append(
                    f'<polyline points="{_fmt(canvas.x(a[0]))},{_fmt(canvas.y(a[1]))} '
                    f'{_fmt(canvas.x(b[0]))},{_fmt(canvas.y(b[1]))}" '
                    f'stroke="{color}" stroke-width="3" fill="none"/>')

    if sensors is not None:
        r = canvas.d(0.875 * sensing_radius)
        for i in range(sensors.count):
            p = sensors.positions[i]
            parts.append(
                f'<circle cx="{_fmt(canvas.x(p[0]))}" cy="{_fmt(canvas.y(p[1]))}" '
                f'r="{_fmt(r)}" fill="{SENSOR_FILL}" fill-opacity="0.35" '
                f'stroke="{SENSOR_FILL}" stroke-width="1"/>')

    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def save_report_figure(step1_trace, step2_trace, network: Network,
                       sensors: SensorSet | None, path) -> None:
    """Two-panel run report: objective histories and the final deployment."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))

    if step1_trace is not None and step1_trace.rows:
        it1 = [r.iteration for r in step1_trace.rows]
        ax1.plot(it1, [r.h_value for r in step1_trace.rows],
                 color="tab:blue", label="step 1 (annealed R)")
        axr = ax1.twinx()
        axr.plot(it1, [r.radius for r in step1_trace.rows],
                 color="tab:gray", linestyle="--", linewidth=1, label="R")
        axr.set_ylabel("sensing radius R")
    if step2_trace is not None and step2_trace.rows:
        it2 = [r.iteration for r in step2_trace.rows]
        ax1.plot(it2, [r.h_value for r in step2_trace.rows],
                 color="tab:red", label="step 2 (on network)")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("objective H")
    ax1.legend(loc="best", fontsize=8)
    ax1.set_title("objective history")

    for k in range(network.segment_count):
        a = network.segment_starts[k]
        b = network.segment_ends[k]
        ax2.plot([a[0], b[0]], [a[1], b[1]], color="0.4", linewidth=1)
    if sensors is not None:
        ax2.scatter(sensors.positions[:, 0], sensors.positions[:, 1],
                    s=18, color="tab:red", zorder=3)
    ax2.set_aspect("equal")
    ax2.set_title("final deployment")

    fig.tight_layout()
    fig.savefig(path, dpi=130, metadata={"Software": None})
    plt.close(fig)
