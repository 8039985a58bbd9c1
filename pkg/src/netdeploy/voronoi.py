"""Lexicographic Voronoi allocation over barycenters and network segments.

Ties are always resolved toward the lowest sensor index, which turns the
Voronoi covering into a genuine partition and makes every allocation
single-valued.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfigurationError, InvalidArgumentError
from .geometry import GEOM_EPS, Point2
from .network import CollapsedNetwork, Network

__all__ = [
    "SensorSet",
    "CollapsedAllocation",
    "NetworkCells",
    "NeighborGraph",
    "allocate_barycenters_lex",
    "clip_network_cells",
    "envelope_walk",
    "delaunay_neighbors",
]

# Sensor pairs closer than this are treated as coincident (degenerate).
COINCIDENT_EPS = 1e-12

# Allocation breakpoints closer than this merge, so no sliver intervals arise.
BREAKPOINT_MERGE_EPS = 1e-12


class SensorSet:
    """An ordered set of sensor positions; the order is the lexicographic index."""

    def __init__(self, positions) -> None:
        arr = np.asarray(
            [[p.x, p.y] if isinstance(p, Point2) else [float(p[0]), float(p[1])]
             for p in positions],
            dtype=float,
        ).reshape(-1, 2)
        if arr.shape[0] < 1:
            raise InvalidArgumentError("sensor set needs at least one sensor")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("non-finite sensor coordinates")
        self._positions = arr
        self._positions.setflags(write=False)

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    @property
    def count(self) -> int:
        return self._positions.shape[0]

    def point(self, i: int) -> Point2:
        return Point2(*self._positions[i])

    def moved(self, i: int, new_position) -> "SensorSet":
        arr = self._positions.copy()
        arr[i] = [new_position[0], new_position[1]] \
            if not isinstance(new_position, Point2) else [new_position.x, new_position.y]
        return SensorSet(arr)


def _check_not_coincident(positions: np.ndarray) -> None:
    m = positions.shape[0]
    if m < 2:
        return
    d = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((d ** 2).sum(-1))
    dist[np.diag_indices(m)] = np.inf
    if dist.min() < COINCIDENT_EPS:
        i, j = np.unravel_index(int(np.argmin(dist)), dist.shape)
        raise DegenerateConfigurationError(f"sensors {i} and {j} coincide")


@dataclass(frozen=True)
class CollapsedAllocation:
    """Barycenter index -> owning sensor index (a total function)."""

    owner: np.ndarray

    def __post_init__(self) -> None:
        self.owner.setflags(write=False)

    def cell(self, i: int) -> np.ndarray:
        """Indices of the barycenters owned by sensor i, ascending."""
        return np.nonzero(self.owner == i)[0]

    def cell_sizes(self, sensor_count: int) -> np.ndarray:
        return np.bincount(self.owner, minlength=sensor_count)


def sensor_distances(points: np.ndarray, sensors) -> np.ndarray:
    """Distance matrix (#points, #sensors); sensors may be a SensorSet or array."""
    p = sensors.positions if isinstance(sensors, SensorSet) else np.asarray(sensors, float)
    d = points[:, None, :] - p[None, :, :]
    return np.sqrt((d ** 2).sum(-1))


def allocate_barycenters_lex(c: CollapsedNetwork, sensors: SensorSet) -> CollapsedAllocation:
    """Assign each barycenter to its nearest sensor, ties to the lowest index."""
    _check_not_coincident(sensors.positions)
    dist = sensor_distances(c.positions, sensors)
    # np.argmin returns the first minimum, which is exactly the lexicographic rule.
    return CollapsedAllocation(owner=np.argmin(dist, axis=1))


@dataclass(frozen=True)
class NetworkCells:
    """Partition of every network segment into sensor-owned parameter intervals.

    cells[i] lists (segment index, t0, t1) for sensor i; breakpoints[k] holds
    the sorted interior allocation-change parameters of segment k.
    """

    cells: tuple[tuple[tuple[int, float, float], ...], ...]
    breakpoints: tuple[tuple[float, ...], ...]
    segment_owners: tuple[tuple[int, ...], ...]

    def segment_intervals(self, k: int) -> list[tuple[float, float, int]]:
        """(t0, t1, owner) tiles of segment k, in order."""
        cuts = (0.0, *self.breakpoints[k], 1.0)
        return [(cuts[i], cuts[i + 1], self.segment_owners[k][i])
                for i in range(len(self.segment_owners[k]))]


def _lex_owner(values: np.ndarray, slopes: np.ndarray) -> np.ndarray:
    """Per row: index minimizing (value, slope, index); the owner just after t.

    Minimal slope among minimal values wins because it stays minimal for an
    interval of positive length; remaining ties go to the lowest index.
    """
    vmin = values.min(axis=1, keepdims=True)
    on_min = values <= vmin + 1e-12 * (1.0 + np.abs(vmin))
    smin = np.where(on_min, slopes, np.inf).min(axis=1, keepdims=True)
    return np.argmax(on_min & (slopes == smin), axis=1)


def envelope_walk(a: np.ndarray, u: np.ndarray,
                  positions: np.ndarray) -> list[tuple[list[float], list[int]]]:
    """Lower-envelope ownership along each row segment a[k] + t * u[k].

    Squared sensor distances along a segment differ by affine functions of t,
    so ownership is the lower envelope of one line per sensor, walked
    breakpoint by breakpoint with all rows in lock-step. Returns per row the
    cut parameters (0 = t0 < ... < 1) and the owner of each interval.
    """
    m = positions.shape[0]
    rows_n = a.shape[0]

    # Line per (row, sensor): value(t) = const + slope * t  (+ common t^2 term).
    diff = a[:, None, :] - positions[None, :, :]
    const = (diff ** 2).sum(-1)
    slope = 2.0 * np.einsum("sj,snj->sn", u, diff)

    t_cur = np.zeros(rows_n)
    owner = _lex_owner(const, slope)
    cuts: list[list[float]] = [[0.0] for _ in range(rows_n)]
    owners: list[list[int]] = [[int(o)] for o in owner]

    active = np.arange(rows_n)
    for _ in range(m):
        if active.size == 0:
            break
        rows = active
        c_own = const[rows, owner[rows]][:, None]
        s_own = slope[rows, owner[rows]][:, None]
        ds = slope[rows] - s_own
        with np.errstate(divide="ignore", invalid="ignore"):
            t_x = (c_own - const[rows]) / ds
        # A competitor undercuts the owner only with strictly smaller slope;
        # crossings at the far endpoint would only create sliver intervals.
        valid = (ds < 0) & (t_x > t_cur[rows, None] + BREAKPOINT_MERGE_EPS) \
            & (t_x < 1.0 - BREAKPOINT_MERGE_EPS)
        t_x = np.where(valid, t_x, np.inf)
        t_next = t_x.min(axis=1)
        hit = np.isfinite(t_next)
        if hit.any():
            hrows = rows[hit]
            th = t_next[hit]
            vals = const[hrows] + slope[hrows] * th[:, None]
            new_owners = _lex_owner(vals, slope[hrows])
            t_cur[hrows] = th
            owner[hrows] = new_owners
            for s, t, o in zip(hrows, th, new_owners):
                cuts[s].append(float(t))
                owners[s].append(int(o))
        active = rows[hit]

    for c in cuts:
        c.append(1.0)
    return [(cuts[k], owners[k]) for k in range(rows_n)]


def clip_network_cells(n: Network, sensors: SensorSet) -> NetworkCells:
    """Clip every segment into per-sensor intervals of the lexicographic partition."""
    _check_not_coincident(sensors.positions)
    walk = envelope_walk(n.segment_starts, n._u, sensors.positions)
    m = sensors.count
    cells: list[list[tuple[int, float, float]]] = [[] for _ in range(m)]
    seg_breaks: list[tuple[float, ...]] = []
    seg_owners: list[tuple[int, ...]] = []
    for k, (cuts, owners) in enumerate(walk):
        seg_breaks.append(tuple(cuts[1:-1]))
        seg_owners.append(tuple(owners))
        for i, o in enumerate(owners):
            cells[o].append((k, cuts[i], cuts[i + 1]))
    return NetworkCells(
        cells=tuple(tuple(c) for c in cells),
        breakpoints=tuple(seg_breaks),
        segment_owners=tuple(seg_owners),
    )


@dataclass(frozen=True)
class NeighborGraph:
    """Symmetric, irreflexive sensor adjacency."""

    adjacency: tuple[frozenset[int], ...]

    def neighbors(self, i: int) -> frozenset[int]:
        return self.adjacency[i]


def _clip_half_plane(poly, tags, point, normal, tag):
    """Sutherland-Hodgman clip keeping (q - point) . normal <= 0.

    tags[i] labels the edge from poly[i] to poly[i+1] with the bisector that
    produced it (None for box edges); new edges along the cut get `tag`.
    """
    if not poly:
        return [], []
    side = [float(np.dot(q - point, normal)) for q in poly]
    out_poly: list[np.ndarray] = []
    out_tags: list = []
    k = len(poly)
    for i in range(k):
        j = (i + 1) % k
        qi, qj = poly[i], poly[j]
        ini, inj = side[i] <= 0.0, side[j] <= 0.0
        if ini:
            out_poly.append(qi)
            out_tags.append(tags[i])
        if ini != inj:
            t = side[i] / (side[i] - side[j])
            out_poly.append(qi + t * (qj - qi))
            # The polygon is convex, so the cut contributes one edge running
            # from the exit crossing to the entry crossing; an entry crossing
            # continues the original edge instead.
            out_tags.append(tag if ini else tags[i])
    return out_poly, out_tags


def delaunay_neighbors(sensors: SensorSet) -> NeighborGraph:
    """Sensors adjacent iff their planar Voronoi cells share a boundary of
    positive length (> GEOM_EPS); point contacts are excluded.

    Cells are built by half-plane clipping inside a box large enough to
    contain every boundary piece near the sensor cloud.
    """
    _check_not_coincident(sensors.positions)
    p = sensors.positions
    m = p.shape[0]
    if m == 1:
        return NeighborGraph(adjacency=(frozenset(),))
    if m == 2:
        return NeighborGraph(adjacency=(frozenset({1}), frozenset({0})))

    lo = p.min(axis=0)
    hi = p.max(axis=0)
    pad = float(np.hypot(*(hi - lo))) * 2.0 + 1.0
    x0, y0 = lo - pad
    x1, y1 = hi + pad

    adjacency: list[set[int]] = [set() for _ in range(m)]
    box = [np.array([x0, y0]), np.array([x1, y0]), np.array([x1, y1]), np.array([x0, y1])]
    for i in range(m):
        poly = list(box)
        tags: list = [None] * 4
        order = np.argsort(((p - p[i]) ** 2).sum(-1))
        for j in order:
            if j == i:
                continue
            mid = 0.5 * (p[i] + p[j])
            normal = p[j] - p[i]
            normal = normal / np.hypot(*normal)
            poly, tags = _clip_half_plane(poly, tags, mid, normal, int(j))
            if not poly:
                break
        shared: dict[int, float] = {}
        k = len(poly)
        for e in range(k):
            if tags[e] is None:
                continue
            length = float(np.hypot(*(poly[(e + 1) % k] - poly[e])))
            shared[tags[e]] = shared.get(tags[e], 0.0) + length
        for j, length in shared.items():
            if length > GEOM_EPS:
                adjacency[i].add(j)

    # Enforce symmetry: keep a pair only when both cells expose the boundary.
    for i in range(m):
        adjacency[i] = {j for j in adjacency[i] if i in adjacency[j]}
    return NeighborGraph(adjacency=tuple(frozenset(s) for s in adjacency))
