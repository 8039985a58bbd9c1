"""Derivative kernels: the lexicographic gradient over barycenters, constrained
directional derivatives on the network, the full-network cell derivative with
jump terms, and the generic segment-integral derivative.

All returned vectors follow the ascent convention: moving a sensor along its
own derivative increases the objective to first order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (AssumptionViolatedError, InvalidArgumentError, OffNetworkError,
                     SingularConfigurationError)
from .geometry import GEOM_EPS, Point2, Segment, as_point
from .network import CollapsedNetwork, Network, project_to_network
from .objective import PerformanceFunction, split_cell_intervals
from .quadrature import integrate_intervals
from .voronoi import NetworkCells, SensorSet, clip_network_cells, sensor_distances

__all__ = [
    "SensorDerivative",
    "FeasibleDirections",
    "grad_collapsed_lex",
    "dir_deriv_on_network",
    "feasible_directions",
    "cell_derivative_full",
    "full_network_gradient",
    "radius_crossings",
    "segment_integral_derivative",
    "DistanceMap",
    "KernelPiece",
    "PiecewiseKernel",
    "central_gradient",
    "central_difference",
]

# A sensor this close to a barycenter makes the distance gradient singular.
SINGULAR_EPS = 1e-12

# Probe length used to test whether a direction stays on the network.
FEASIBILITY_DELTA = 1e-7

# Positions farther than this from the network are rejected outright.
OFF_NETWORK_EPS = 1e-6


@dataclass(frozen=True)
class SensorDerivative:
    """Per-sensor derivative: a planar ascent vector, plus host-edge data when
    the sensor is constrained to the network."""

    vector: np.ndarray
    magnitude: float
    segment: int | None = None
    direction: np.ndarray | None = None
    scalar: float = 0.0
    at_vertex: bool = False

    @staticmethod
    def unconstrained(vector: np.ndarray) -> "SensorDerivative":
        v = np.asarray(vector, dtype=float)
        return SensorDerivative(vector=v, magnitude=float(np.hypot(*v)))

    @staticmethod
    def zero(at_vertex: bool = False) -> "SensorDerivative":
        return SensorDerivative(vector=np.zeros(2), magnitude=0.0, at_vertex=at_vertex)


@dataclass(frozen=True)
class FeasibleDirections:
    """Feasible motion directions out of a vertex with their derivative values."""

    vertex: int
    options: tuple[tuple[int, np.ndarray, float], ...]


def grad_collapsed_lex(c: CollapsedNetwork, f: PerformanceFunction,
                       sensors: SensorSet) -> np.ndarray:
    """Lexicographic gradient of the collapsed objective, one row per sensor.

    Component h sums f'(|b - p_h|) * (p_h - b)/|b - p_h| * weight over the
    barycenters owned by h, so it depends on nothing outside h's own cell.
    """
    dist = sensor_distances(c.positions, sensors)
    owner = np.argmin(dist, axis=1)
    p = sensors.positions
    out = np.zeros((sensors.count, 2))
    for h in range(sensors.count):
        mask = owner == h
        if not mask.any():
            continue
        d = dist[mask, h]
        if d.min() < SINGULAR_EPS:
            raise SingularConfigurationError(
                f"sensor {h} sits exactly on a barycenter of its cell")
        coef = f.derivative(d) * c.weights[mask] / d
        out[h] = (coef[:, None] * (p[h] - c.positions[mask])).sum(axis=0)
    return out


# -- network-constrained directional derivative --------------------------------


def _locate_on_network(n: Network, position: np.ndarray):
    """Snap a position to the network; returns (point, segment, t, vertex or None)."""
    foot, seg, t = project_to_network(n, Point2(float(position[0]), float(position[1])))
    if math.hypot(foot.x - position[0], foot.y - position[1]) > OFF_NETWORK_EPS:
        raise OffNetworkError(
            f"position ({position[0]:.6g}, {position[1]:.6g}) is off the network")
    v = n.vertex_array
    dv = np.hypot(v[:, 0] - foot.x, v[:, 1] - foot.y)
    vi = int(np.argmin(dv))
    vertex = vi if dv[vi] <= GEOM_EPS else None
    return foot, seg, t, vertex


def feasible_directions(n: Network, vertex: int, g: np.ndarray) -> FeasibleDirections:
    """Directions along incident edges whose induced motion stays on the network.

    The motion along an edge is the projection (g . u) u with u pointing from
    the vertex into the edge; it stays on the network exactly when g . u >= 0.
    The listed value is the one-sided derivative g . u.
    """
    v = n.vertex_array[vertex]
    options: list[tuple[int, np.ndarray, float]] = []
    for k in n.segments_at_vertex(vertex):
        i, j = n.segment_indices[k]
        other = j if i == vertex else i
        u = n.vertex_array[other] - v
        u = u / np.hypot(*u)
        value = float(g @ u)
        if value < 0.0:
            continue
        probe = v + FEASIBILITY_DELTA * u
        _, dist = _probe_distance(n, probe)
        if dist <= GEOM_EPS:
            options.append((k, u, value))
    return FeasibleDirections(vertex=vertex, options=tuple(options))


def _probe_distance(n: Network, q: np.ndarray):
    t = np.clip(np.einsum("ij,ij->i", q[None, :] - n.segment_starts, n._u) / n._uu, 0.0, 1.0)
    foot = n.segment_starts + t[:, None] * n._u
    dist = np.hypot(foot[:, 0] - q[0], foot[:, 1] - q[1])
    k = int(np.argmin(dist))
    return k, float(dist[k])


def dir_deriv_on_network(deriv_source, sensors: SensorSet, n: Network,
                         h: int) -> SensorDerivative:
    """Constrained derivative of sensor h on the network.

    Interior of an edge: the projection of the unconstrained cell derivative
    onto the edge direction. At a vertex: the feasible incident direction of
    maximum positive one-sided derivative, or zero when every feasible
    derivative is non-positive.
    """
    g = np.asarray(deriv_source, dtype=float)
    if g.ndim == 2:
        g = g[h]
    position = sensors.positions[h]
    foot, seg, t, vertex = _locate_on_network(n, position)

    if vertex is None:
        u = n._u[seg] / n.segment_lengths[seg]
        s = float(g @ u)
        return SensorDerivative(vector=s * u, magnitude=abs(s), segment=seg,
                                direction=u, scalar=s, at_vertex=False)

    feas = feasible_directions(n, vertex, g)
    best = None
    for k, u, value in feas.options:
        if value > 0.0 and (best is None or value > best[2]):
            best = (k, u, value)
    if best is None:
        return SensorDerivative.zero(at_vertex=True)
    k, u, value = best
    return SensorDerivative(vector=value * u, magnitude=value, segment=k,
                            direction=u, scalar=value, at_vertex=True)


# -- full-network cell derivative ----------------------------------------------


def radius_crossings(s: Segment, p, radius: float) -> list[float]:
    """Parameters t in [0, 1] where |gamma(t) - p| equals the radius."""
    if not radius > 0:
        raise InvalidArgumentError(f"radius must be positive, got {radius}")
    p = as_point(p)
    a = s.a.as_array()
    u = s.b.as_array() - a
    d = a - p.as_array()
    aa = float(u @ u)
    bb = 2.0 * float(u @ d)
    cc = float(d @ d) - radius * radius
    disc = bb * bb - 4.0 * aa * cc
    if disc < 0.0:
        return []
    sq = math.sqrt(disc)
    roots = [(-bb - sq) / (2.0 * aa)]
    r2 = (-bb + sq) / (2.0 * aa)
    if r2 != roots[0]:
        roots.append(r2)
    return sorted(t for t in roots if 0.0 <= t <= 1.0)


def _jump_terms(n: Network, f: PerformanceFunction, density, p: np.ndarray,
                seg: int, t0: float, t1: float) -> np.ndarray:
    """Discontinuity contributions of one cell interval.

    Each crossing of a jump radius R contributes
        jump * (p - gamma(t)) / nu * phi(gamma(t)) * L / |d nu / d t|,
    the last factor being the delta-composition Jacobian (d nu/d t =
    U . (gamma - p) / nu, nonzero by the transversality assumption).
    """
    out = np.zeros(2)
    A = n.segment_starts[seg]
    U = n._u[seg]
    L = float(n.segment_lengths[seg])
    for alpha, radius in enumerate(f.breakpoints):
        jump = float(f.jumps[alpha])
        if abs(jump) <= 1e-12:
            continue
        d = A - p
        aa = float(U @ U)
        bb = 2.0 * float(U @ d)
        cc = float(d @ d) - radius * radius
        disc = bb * bb - 4.0 * aa * cc
        if disc < 0.0:
            continue
        sq = math.sqrt(disc)
        for t in {(-bb - sq) / (2.0 * aa), (-bb + sq) / (2.0 * aa)}:
            if t < t0 - 1e-9 or t > t1 + 1e-9:
                continue
            if abs(t - t0) <= 1e-9 or abs(t - t1) <= 1e-9:
                raise AssumptionViolatedError(
                    f"radius crossing at interval endpoint (segment {seg}, t={t:.9f})")
            gamma = A + t * U
            rel = p - gamma
            nu = float(np.hypot(*rel))
            dnu_dt = float(U @ (gamma - p)) / nu
            if abs(dnu_dt) <= 1e-9:
                raise AssumptionViolatedError(
                    f"tangential radius crossing (segment {seg}, t={t:.9f})")
            dens = float(density.eval_at(gamma)) if density is not None else 1.0
            out += jump * (rel / nu) * dens * L / abs(dnu_dt)
    return out


def _cell_rows(cells: NetworkCells, which: Sequence[int]):
    seg, t0, t1, own = [], [], [], []
    for i in which:
        for (k, a, b) in cells.cells[i]:
            seg.append(k)
            t0.append(a)
            t1.append(b)
            own.append(i)
    return (np.asarray(seg, dtype=int), np.asarray(t0), np.asarray(t1),
            np.asarray(own, dtype=int))


def full_network_gradient(n: Network, f: PerformanceFunction, density,
                          sensors: SensorSet, cells: NetworkCells | None = None,
                          tol: float = 1e-8,
                          which: Sequence[int] | None = None) -> np.ndarray:
    """Cell derivative of every sensor (rows) over the full network."""
    if cells is None:
        cells = clip_network_cells(n, sensors)
    idx = range(sensors.count) if which is None else which
    seg, t0, t1, own = _cell_rows(cells, idx)
    out = np.zeros((sensors.count, 2))
    if seg.size == 0:
        return out
    lo, hi, parent = split_cell_intervals(n, f, sensors.positions, seg, t0, t1, own)

    A, U, lengths = n.segment_starts, n._u, n.segment_lengths
    p = sensors.positions

    def integrand(t: np.ndarray, pid: np.ndarray) -> np.ndarray:
        ks = seg[parent[pid]]
        pts = A[ks] + t[:, None] * U[ks]
        rel = p[own[parent[pid]]] - pts
        dist = np.sqrt((rel ** 2).sum(-1))
        if dist.min() < SINGULAR_EPS:
            raise SingularConfigurationError(
                "sensor coincides with an interior integration point")
        dens = density.eval_at(pts) if density is not None else 1.0
        coef = f.derivative(dist) / dist * dens * lengths[ks]
        return coef[:, None] * rel

    vals = integrate_intervals(integrand, lo, hi, tol=tol, components=2,
                               context=lambda i: int(seg[parent[i]]))
    np.add.at(out, own[parent], vals)

    if not f.continuous:
        for r in range(seg.size):
            out[own[r]] += _jump_terms(n, f, density, p[own[r]],
                                       int(seg[r]), float(t0[r]), float(t1[r]))
    return out


def cell_derivative_full(n: Network, f: PerformanceFunction, density,
                         sensors: SensorSet, h: int,
                         cells: NetworkCells | None = None,
                         tol: float = 1e-8) -> np.ndarray:
    """Derivative of the full-network objective with respect to sensor h."""
    if cells is None:
        cells = clip_network_cells(n, sensors)
    return full_network_gradient(n, f, density, sensors, cells=cells, tol=tol,
                                 which=[h])[h]


# -- generic segment-integral derivative ----------------------------------------


@dataclass(frozen=True)
class KernelPiece:
    """One piece of a piecewise kernel phi(nu, q): value and d/d nu."""

    value: callable
    dnu: callable


class PiecewiseKernel:
    """phi(nu, q): smooth in q, piecewise differentiable in nu with bounded
    jumps at breakpoints R_1 < ... < R_N."""

    def __init__(self, pieces: Sequence[KernelPiece], breakpoints: Sequence[float] = ()) -> None:
        if len(pieces) != len(breakpoints) + 1:
            raise InvalidArgumentError("piece count must be breakpoint count + 1")
        self.pieces = tuple(pieces)
        self.breakpoints = np.asarray([float(r) for r in breakpoints])
        if np.any(np.diff(self.breakpoints) <= 0):
            raise InvalidArgumentError("breakpoints must be strictly increasing")

    def piece_index(self, nu: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.breakpoints, nu, side="right")

    def dnu(self, nu: np.ndarray, q: np.ndarray) -> np.ndarray:
        idx = self.piece_index(nu)
        out = np.empty_like(nu)
        for k, piece in enumerate(self.pieces):
            mask = idx == k
            if mask.any():
                out[mask] = piece.dnu(nu[mask], q[mask])
        return out

    def jump(self, i: int, q: np.ndarray) -> float:
        """phi(R_i^+, q) - phi(R_i^-, q)."""
        r = np.asarray([self.breakpoints[i]])
        qq = q.reshape(1, 2)
        right = float(np.asarray(self.pieces[i + 1].value(r, qq))[0])
        left = float(np.asarray(self.pieces[i].value(r, qq))[0])
        return right - left


@dataclass(frozen=True)
class DistanceMap:
    """nu(x, q) = |q - x|, the Euclidean specialization of the kernel."""

    def value(self, x: np.ndarray, q: np.ndarray) -> np.ndarray:
        return np.hypot(q[..., 0] - x[0], q[..., 1] - x[1])

    def grad_x(self, x: np.ndarray, q: np.ndarray) -> np.ndarray:
        rel = x[None, :] - np.atleast_2d(q)
        return rel / np.hypot(rel[:, 0], rel[:, 1])[:, None]

    def grad_q(self, x: np.ndarray, q: np.ndarray) -> np.ndarray:
        rel = np.atleast_2d(q) - x[None, :]
        return rel / np.hypot(rel[:, 0], rel[:, 1])[:, None]

    def crossings(self, x: np.ndarray, a: np.ndarray, b: np.ndarray,
                  radius: float) -> list[float]:
        return radius_crossings(Segment(Point2(*a), Point2(*b)),
                                Point2(*x), radius)


def _grid_crossings(nu, x: np.ndarray, a: np.ndarray, b: np.ndarray,
                    radius: float, samples: int = 512) -> list[float]:
    """Sign changes of nu(x, gamma(t)) - radius on a fine grid, bisected."""
    ts = np.linspace(0.0, 1.0, samples + 1)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    vals = np.asarray(nu.value(x, pts)) - radius
    roots = []
    for i in range(samples):
        v0, v1 = vals[i], vals[i + 1]
        if v0 == 0.0:
            roots.append(float(ts[i]))
            continue
        if v0 * v1 < 0.0:
            lo, hi = float(ts[i]), float(ts[i + 1])
            flo = v0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                fm = float(nu.value(x, a + mid * (b - a))) - radius
                if flo * fm <= 0.0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            roots.append(0.5 * (lo + hi))
    if vals[-1] == 0.0:
        roots.append(1.0)
    return roots


def segment_integral_derivative(phi: PiecewiseKernel, nu, s: Segment, x) -> np.ndarray:
    """d/dx of the line integral of phi(nu(x, q), q) over s, at x.

    The smooth part integrates d phi/d nu * d nu/d x between breakpoint
    crossings; each crossing adds (phi(R+) - phi(R-)) * d nu/d x * L divided
    by |d nu(x, gamma(t))/d t|, the delta-composition Jacobian.
    """
    x = as_point(x).as_array()
    a = s.a.as_array()
    b = s.b.as_array()
    L = float(np.hypot(*(b - a)))

    ends = np.vstack([a, b])
    nu_ends = np.asarray(nu.value(x, ends), dtype=float)
    for r in phi.breakpoints:
        if np.any(np.abs(nu_ends - r) <= 1e-9):
            raise AssumptionViolatedError(
                f"nu at a segment endpoint equals breakpoint {r}")

    crossings: list[float] = []
    for i, r in enumerate(phi.breakpoints):
        if hasattr(nu, "crossings"):
            ts = nu.crossings(x, a, b, float(r))
        else:
            ts = _grid_crossings(nu, x, a, b, float(r))
        for t in ts:
            if not 0.0 < t < 1.0:
                continue
            crossings.append(float(t))

    cuts = sorted({0.0, 1.0, *crossings})
    lo = np.asarray(cuts[:-1])
    hi = np.asarray(cuts[1:])

    def integrand(t: np.ndarray, pid: np.ndarray) -> np.ndarray:
        pts = a[None, :] + t[:, None] * (b - a)[None, :]
        nv = np.asarray(nu.value(x, pts), dtype=float)
        gx = np.asarray(nu.grad_x(x, pts), dtype=float)
        return (phi.dnu(nv, pts) * L)[:, None] * gx

    smooth = integrate_intervals(integrand, lo, hi, tol=1e-10, components=2).sum(axis=0)

    jump_part = np.zeros(2)
    for i, r in enumerate(phi.breakpoints):
        ts = nu.crossings(x, a, b, float(r)) if hasattr(nu, "crossings") \
            else _grid_crossings(nu, x, a, b, float(r))
        for t in ts:
            if not 0.0 < t < 1.0:
                continue
            q = a + t * (b - a)
            gq = np.asarray(nu.grad_q(x, q.reshape(1, 2)), dtype=float)[0]
            dnu_dt = float(gq @ (b - a))
            if abs(dnu_dt) <= 1e-9:
                raise AssumptionViolatedError(
                    f"tangential breakpoint crossing at t={t:.9f}")
            gx = np.asarray(nu.grad_x(x, q.reshape(1, 2)), dtype=float)[0]
            jump_part += phi.jump(i, q) * gx * L / abs(dnu_dt)
    return smooth + jump_part


# -- finite differences -----------------------------------------------------------


def central_difference(fn, x: float, step: float = 1e-6) -> float:
    return (fn(x + step) - fn(x - step)) / (2.0 * step)


def central_gradient(fn, p: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a planar point."""
    out = np.zeros(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        out[k] = (fn(p + e) - fn(p - e)) / (2.0 * step)
    return out
