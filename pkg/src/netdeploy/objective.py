"""Sensing profile, density field, and the multi-center objective H.

H is the density-weighted total of the best sensor's performance over the
environment: a weighted sum over barycenters for a collapsed network, a line
integral over the segments for the full network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgumentError, UndefinedDerivativeError
from .geometry import GEOM_EPS
from .network import CollapsedNetwork, Network
from .quadrature import integrate_intervals
from .voronoi import NetworkCells, SensorSet, clip_network_cells, sensor_distances

__all__ = [
    "Piece",
    "PerformanceFunction",
    "DensityField",
    "tanh_profile",
    "step_profile",
    "linear_profile_pieces",
    "eval_f",
    "eval_f_derivative",
    "eval_density",
    "h_collapsed",
    "h_collapsed_cells",
    "h_cell_collapsed",
    "h_cell_full",
    "h_full",
    "h_full_cells",
    "h_full_segment_sums",
    "integrate_interval_values",
    "split_cell_intervals",
]

_MONOTONE_SAMPLES = 33
_MONOTONE_SLACK = 1e-12


@dataclass(frozen=True)
class Piece:
    """One continuously differentiable non-increasing piece of the profile."""

    value: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    label: str = ""


class PerformanceFunction:
    """Piecewise sensing profile f on [0, inf), non-increasing, with optional
    downward jumps at breakpoints R_1 < ... < R_N.

    Pieces live on half-open intervals [R_{a-1}, R_a), so evaluation at a
    breakpoint returns the right piece.
    """

    def __init__(self, pieces: Sequence[Piece], breakpoints: Sequence[float] = ()) -> None:
        if len(pieces) != len(breakpoints) + 1:
            raise InvalidArgumentError(
                f"{len(breakpoints)} breakpoints require {len(breakpoints) + 1} pieces, "
                f"got {len(pieces)}")
        breaks = [float(r) for r in breakpoints]
        if any(r <= 0 for r in breaks) or any(b <= a for a, b in zip(breaks, breaks[1:])):
            raise InvalidArgumentError("breakpoints must be positive and strictly increasing")
        self._pieces = tuple(pieces)
        self._breaks = np.asarray(breaks)
        self._check_monotone()
        self._jumps = self._compute_jumps()
        self.continuous = bool(np.all(np.abs(self._jumps) <= 1e-12)) if breaks else True
        # Radii where the profile curves strongly; quadrature splits cell
        # intervals at the corresponding distance crossings to converge fast.
        self.quad_split_radii: tuple[float, ...] = ()

    @property
    def pieces(self) -> tuple[Piece, ...]:
        return self._pieces

    @property
    def breakpoints(self) -> np.ndarray:
        return self._breaks

    @property
    def jumps(self) -> np.ndarray:
        """Right minus left value at each breakpoint (non-positive)."""
        return self._jumps

    def _piece_domains(self) -> list[tuple[float, float]]:
        edges = [0.0, *self._breaks.tolist()]
        tail = edges[-1] + 4.0 * (edges[-1] + 1.0)
        edges.append(tail)
        return list(zip(edges[:-1], edges[1:]))

    def _check_monotone(self) -> None:
        for k, (lo, hi) in enumerate(self._piece_domains()):
            xs = np.linspace(lo, hi, _MONOTONE_SAMPLES)
            ys = np.asarray(self._pieces[k].value(xs), dtype=float)
            if np.any(np.diff(ys) > _MONOTONE_SLACK):
                raise InvalidArgumentError(f"piece {k} is increasing on [{lo}, {hi}]")

    def _compute_jumps(self) -> np.ndarray:
        jumps = np.zeros(self._breaks.size)
        for a, r in enumerate(self._breaks):
            left = float(np.asarray(self._pieces[a].value(np.asarray([r])))[0])
            right = float(np.asarray(self._pieces[a + 1].value(np.asarray([r])))[0])
            if right > left + 1e-12:
                raise InvalidArgumentError(f"upward jump at breakpoint {r}")
            jumps[a] = right - left
        return jumps

    def _piece_index(self, x: np.ndarray) -> np.ndarray:
        return np.searchsorted(self._breaks, x, side="right")

    def _apply(self, x, which: str):
        arr = np.asarray(x, dtype=float)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        if np.any(arr < 0):
            raise InvalidArgumentError("profile argument must be >= 0")
        if len(self._pieces) == 1:
            out = np.asarray(getattr(self._pieces[0], which)(arr), dtype=float)
        else:
            idx = self._piece_index(arr)
            out = np.empty_like(arr)
            for k, piece in enumerate(self._pieces):
                mask = idx == k
                if mask.any():
                    out[mask] = getattr(piece, which)(arr[mask])
        return float(out[0]) if scalar else out

    def value(self, x):
        return self._apply(x, "value")

    def value_unchecked(self, x: np.ndarray) -> np.ndarray:
        """Vectorized value for internal hot paths; x known to be >= 0."""
        if len(self._pieces) == 1:
            return self._pieces[0].value(x)
        idx = self._piece_index(x)
        out = np.empty_like(x)
        for k, piece in enumerate(self._pieces):
            mask = idx == k
            if mask.any():
                out[mask] = piece.value(x[mask])
        return out

    def derivative(self, x):
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        if self._breaks.size:
            jumpy = self._breaks[np.abs(self._jumps) > 1e-12]
            if jumpy.size and np.any(np.isin(arr, jumpy)):
                raise UndefinedDerivativeError(
                    "derivative requested at a discontinuity breakpoint")
        return self._apply(x, "deriv")


def eval_f(f: PerformanceFunction, x):
    return f.value(x)


def eval_f_derivative(f: PerformanceFunction, x):
    return f.derivative(x)


def tanh_profile(radius: float) -> PerformanceFunction:
    """Smooth profile 0.5 * (1 - tanh((x - R/2) / (R/6))): near 1 inside the
    sensing radius R, negligible beyond it."""
    if not radius > 0:
        raise InvalidArgumentError(f"sensing radius must be positive, got {radius}")
    half, sixth = radius / 2.0, radius / 6.0

    def value(x):
        return 0.5 * (1.0 - np.tanh((x - half) / sixth))

    def deriv(x):
        th = np.tanh((x - half) / sixth)
        return -(1.0 - th * th) / (2.0 * sixth)

    profile = PerformanceFunction([Piece(value, deriv, f"tanh(R={radius})")])
    profile.quad_split_radii = tuple(radius * k / 8.0 for k in range(1, 10))
    return profile


def _const_piece(level: float) -> Piece:
    return Piece(lambda x, v=level: np.full_like(np.asarray(x, dtype=float), v),
                 lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                 f"const {level}")


def step_profile(levels: Sequence[float], breakpoints: Sequence[float]) -> PerformanceFunction:
    """Piecewise-constant profile: levels[k] on [R_{k-1}, R_k)."""
    return PerformanceFunction([_const_piece(v) for v in levels], breakpoints)


def linear_profile_pieces(intercepts: Sequence[float], slopes: Sequence[float],
                          breakpoints: Sequence[float]) -> PerformanceFunction:
    """Profile with affine pieces intercepts[k] + slopes[k] * x."""
    pieces = [
        Piece(lambda x, a=a, b=b: a + b * np.asarray(x, dtype=float),
              lambda x, b=b: np.full_like(np.asarray(x, dtype=float), b),
              f"affine {a}+{b}x")
        for a, b in zip(intercepts, slopes)
    ]
    return PerformanceFunction(pieces, breakpoints)


@dataclass(frozen=True)
class DensityField:
    """Importance weight over the plane: a sum of axis-aligned Gaussians
    a * exp(-((x-cx)/sx)^2 - ((y-cy)/sy)^2)."""

    gaussians: np.ndarray  # rows (a, cx, cy, sx, sy)

    def __post_init__(self) -> None:
        g = np.asarray(self.gaussians, dtype=float).reshape(-1, 5)
        if g.size and (np.any(g[:, 0] < 0) or np.any(g[:, 3:] <= 0)):
            raise InvalidArgumentError("gaussian amplitudes must be >= 0 and widths > 0")
        object.__setattr__(self, "gaussians", g)
        g.setflags(write=False)

    def eval_at(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        pts = np.atleast_2d(pts)
        out = np.zeros(pts.shape[0])
        for a, cx, cy, sx, sy in self.gaussians:
            out += a * np.exp(-((pts[:, 0] - cx) / sx) ** 2 - ((pts[:, 1] - cy) / sy) ** 2)
        return float(out[0]) if scalar else out

    @staticmethod
    def from_dicts(items: Sequence[dict]) -> "DensityField":
        rows = []
        for k, item in enumerate(items):
            if set(item) != {"a", "cx", "cy", "sx", "sy"}:
                raise InvalidArgumentError(
                    f"gaussian {k} must have exactly the keys a, cx, cy, sx, sy")
            rows.append([item["a"], item["cx"], item["cy"], item["sx"], item["sy"]])
        return DensityField(np.asarray(rows, dtype=float).reshape(-1, 5))

    def to_dicts(self) -> list[dict]:
        return [{"a": a, "cx": cx, "cy": cy, "sx": sx, "sy": sy}
                for a, cx, cy, sx, sy in self.gaussians.tolist()]


def eval_density(d: DensityField, q) -> float:
    return d.eval_at(np.asarray([q.x, q.y]) if hasattr(q, "x") else np.asarray(q))


# -- collapsed objective -----------------------------------------------------

def h_collapsed(c: CollapsedNetwork, f: PerformanceFunction, sensors: SensorSet) -> float:
    """Sum over barycenters of f(distance to nearest sensor) * weight."""
    dmin = sensor_distances(c.positions, sensors).min(axis=1)
    return float(f.value(dmin) @ c.weights)


def h_collapsed_cells(c: CollapsedNetwork, f: PerformanceFunction,
                      sensors: SensorSet) -> np.ndarray:
    """Per-sensor cell contributions under the lexicographic allocation."""
    dist = sensor_distances(c.positions, sensors)
    owner = np.argmin(dist, axis=1)
    out = np.empty(sensors.count)
    for i in range(sensors.count):
        mask = owner == i
        out[i] = float(np.sum(f.value(dist[mask, i]) * c.weights[mask])) if mask.any() else 0.0
    return out


# -- full-network objective ---------------------------------------------------

def _interval_arrays(cells: NetworkCells, sensor_count: int):
    seg, t0, t1, own = [], [], [], []
    for i in range(sensor_count):
        for (k, a, b) in cells.cells[i]:
            seg.append(k)
            t0.append(a)
            t1.append(b)
            own.append(i)
    return (np.asarray(seg, dtype=int), np.asarray(t0), np.asarray(t1),
            np.asarray(own, dtype=int))


def _radius_roots(A: np.ndarray, U: np.ndarray, p: np.ndarray, radius: float) -> list[float]:
    """Roots of |A + tU - p| = radius in t (unclipped)."""
    d = A - p
    aa = float(U @ U)
    bb = 2.0 * float(U @ d)
    cc = float(d @ d) - radius * radius
    disc = bb * bb - 4.0 * aa * cc
    if disc < 0.0:
        return []
    sq = math.sqrt(disc)
    r1 = (-bb - sq) / (2.0 * aa)
    r2 = (-bb + sq) / (2.0 * aa)
    return [r1] if r1 == r2 else [r1, r2]


def split_cell_intervals(n: Network, f: PerformanceFunction, positions: np.ndarray,
                         seg: np.ndarray, t0: np.ndarray, t1: np.ndarray,
                         own: np.ndarray):
    """Subdivide cell intervals at integrand kinks: the owning sensor's foot
    on the segment line and every crossing of a profile breakpoint or split
    hint radius.

    Returns (lo, hi, parent) flat panel arrays in full-segment parameter.
    """
    A, U, UU = n.segment_starts[seg], n._u[seg], n._uu[seg]
    p = positions[own]
    rows = seg.size

    d = A - p
    t_foot = -np.einsum("ij,ij->i", U, d) / UU
    foot = A + t_foot[:, None] * U
    off_line = np.hypot(foot[:, 0] - p[:, 0], foot[:, 1] - p[:, 1])
    foot_ok = (off_line < GEOM_EPS) & (t_foot > t0 + 1e-12) & (t_foot < t1 - 1e-12)

    radii = np.asarray([*f.breakpoints, *f.quad_split_radii])
    roots = np.full((rows, 2 * radii.size), np.nan)
    if radii.size:
        bb = 2.0 * np.einsum("ij,ij->i", U, d)
        dd = np.einsum("ij,ij->i", d, d)
        disc = bb[:, None] ** 2 - 4.0 * UU[:, None] * (dd[:, None] - radii[None, :] ** 2)
        with np.errstate(invalid="ignore"):
            sq = np.sqrt(np.where(disc >= 0.0, disc, np.nan))
        roots[:, 0::2] = (-bb[:, None] - sq) / (2.0 * UU[:, None])
        roots[:, 1::2] = (-bb[:, None] + sq) / (2.0 * UU[:, None])
        bad = ~((roots > t0[:, None] + 1e-12) & (roots < t1[:, None] - 1e-12))
        roots[bad] = np.nan

    lo_out, hi_out, parent = [], [], []
    for idx in range(rows):
        cuts = {float(t0[idx]), float(t1[idx])}
        if foot_ok[idx]:
            cuts.add(float(t_foot[idx]))
        row = roots[idx]
        for t in row[~np.isnan(row)]:
            cuts.add(float(t))
        ordered = sorted(cuts)
        for a, b in zip(ordered[:-1], ordered[1:]):
            lo_out.append(a)
            hi_out.append(b)
            parent.append(idx)
    return np.asarray(lo_out), np.asarray(hi_out), np.asarray(parent, dtype=int)


def integrate_interval_values(n: Network, f: PerformanceFunction, density,
                              positions: np.ndarray, seg: np.ndarray,
                              t0: np.ndarray, t1: np.ndarray, own: np.ndarray,
                              tol: float) -> np.ndarray:
    """Integral of f(|gamma - p_owner|) * density over each cell interval."""
    if seg.size == 0:
        return np.zeros(0)
    lo, hi, parent = split_cell_intervals(n, f, positions, seg, t0, t1, own)
    A, U, lengths = n.segment_starts, n._u, n.segment_lengths

    def integrand(t: np.ndarray, pid: np.ndarray) -> np.ndarray:
        rows = parent[pid]
        ks = seg[rows]
        pts = A[ks] + t[:, None] * U[ks]
        d = pts - positions[own[rows]]
        dist = np.sqrt((d ** 2).sum(-1))
        dens = density.eval_at(pts) if density is not None else 1.0
        return f.value_unchecked(dist) * dens * lengths[ks]

    panel_vals = integrate_intervals(integrand, lo, hi, tol=tol,
                                     context=lambda i: int(seg[parent[i]]))
    out = np.zeros(seg.size)
    np.add.at(out, parent, panel_vals)
    return out


def _walk_intervals(walk, seg_rows: np.ndarray):
    seg, t0, t1, own = [], [], [], []
    for r, (cuts, owners) in zip(seg_rows, walk):
        for i, o in enumerate(owners):
            seg.append(r)
            t0.append(cuts[i])
            t1.append(cuts[i + 1])
            own.append(o)
    return (np.asarray(seg, dtype=int), np.asarray(t0), np.asarray(t1),
            np.asarray(own, dtype=int))


def h_full_segment_sums(n: Network, f: PerformanceFunction, density,
                        positions: np.ndarray, seg_rows: np.ndarray,
                        tol: float = 1e-8, walk=None) -> np.ndarray:
    """Per-segment objective contributions for a subset of segments."""
    from .voronoi import envelope_walk
    if not f.continuous:
        raise InvalidArgumentError("the full-network objective requires a continuous profile")
    seg_rows = np.asarray(seg_rows, dtype=int)
    if walk is None:
        walk = envelope_walk(n.segment_starts[seg_rows], n._u[seg_rows], positions)
    seg, t0, t1, own = _walk_intervals(walk, seg_rows)
    vals = integrate_interval_values(n, f, density, positions, seg, t0, t1, own, tol)
    out = np.zeros(seg_rows.size)
    np.add.at(out, np.searchsorted(seg_rows, seg), vals)
    return out


def h_full_cells(n: Network, f: PerformanceFunction, density, sensors: SensorSet,
                 tol: float = 1e-8, cells: NetworkCells | None = None) -> np.ndarray:
    """Per-sensor cell integrals of f(distance) * density over the network."""
    if not f.continuous:
        raise InvalidArgumentError("the full-network objective requires a continuous profile")
    if cells is None:
        cells = clip_network_cells(n, sensors)
    seg, t0, t1, own = _interval_arrays(cells, sensors.count)
    vals = integrate_interval_values(n, f, density, sensors.positions,
                                     seg, t0, t1, own, tol)
    out = np.zeros(sensors.count)
    np.add.at(out, own, vals)
    return out


def h_full(n: Network, f: PerformanceFunction, density, sensors: SensorSet,
           tol: float = 1e-8, cells: NetworkCells | None = None) -> float:
    """Objective over the full network, integrated cell by cell."""
    return float(h_full_cells(n, f, density, sensors, tol=tol, cells=cells).sum())


def h_cell_collapsed(c: CollapsedNetwork, f: PerformanceFunction,
                     sensors: SensorSet, i: int) -> float:
    """Sensor i's cell contribution to the collapsed objective."""
    return float(h_collapsed_cells(c, f, sensors)[i])


def h_cell_full(n: Network, f: PerformanceFunction, density, sensors: SensorSet,
                i: int, tol: float = 1e-8,
                cells: NetworkCells | None = None) -> float:
    """Sensor i's cell contribution to the full-network objective."""
    return float(h_full_cells(n, f, density, sensors, tol=tol, cells=cells)[i])
