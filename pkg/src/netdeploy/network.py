"""Segment networks embedded in the plane and their collapsed reduction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .geometry import GEOM_EPS, Point2, Segment, as_point

__all__ = [
    "Network",
    "CollapsedNetwork",
    "Violation",
    "validate_network",
    "build_collapsed",
    "project_to_network",
    "network_diameter",
    "network_from_dict",
    "network_to_dict",
    "load_network",
    "save_network",
]


class Network:
    """An embedded network N = (V, S): vertex positions plus vertex-index pairs.

    Construction checks only structural sanity (index ranges, i != j);
    the geometric invariants are reported by validate_network so that
    invalid data can be inspected rather than rejected outright.
    """

    def __init__(self, vertices, segments) -> None:
        varray = np.asarray(
            [[p.x, p.y] if isinstance(p, Point2) else [float(p[0]), float(p[1])]
             for p in vertices],
            dtype=float,
        ).reshape(-1, 2)
        if varray.shape[0] == 0:
            raise InvalidArgumentError("network needs at least one vertex")
        if not np.all(np.isfinite(varray)):
            raise InvalidArgumentError("non-finite vertex coordinates")
        n = varray.shape[0]
        seglist: list[tuple[int, int]] = []
        for k, (i, j) in enumerate(segments):
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidArgumentError(f"segment {k} references vertex out of range: ({i}, {j})")
            if i == j:
                raise InvalidArgumentError(f"segment {k} joins vertex {i} to itself")
            seglist.append((i, j))
        if not seglist:
            raise InvalidArgumentError("network needs at least one segment")

        self._vertices = varray
        self._vertices.setflags(write=False)
        self._segments = tuple(seglist)
        idx = np.asarray(seglist, dtype=int)
        self._a = varray[idx[:, 0]]
        self._b = varray[idx[:, 1]]
        self._u = self._b - self._a
        self._uu = np.einsum("ij,ij->i", self._u, self._u)
        self._lengths = np.sqrt(self._uu)
        for arr in (self._a, self._b, self._u, self._uu, self._lengths):
            arr.setflags(write=False)

    # -- read-only views -----------------------------------------------------
    @property
    def vertex_array(self) -> np.ndarray:
        return self._vertices

    @property
    def segment_indices(self) -> tuple[tuple[int, int], ...]:
        return self._segments

    @property
    def segment_starts(self) -> np.ndarray:
        return self._a

    @property
    def segment_ends(self) -> np.ndarray:
        return self._b

    @property
    def segment_lengths(self) -> np.ndarray:
        return self._lengths

    @property
    def vertex_count(self) -> int:
        return self._vertices.shape[0]

    @property
    def segment_count(self) -> int:
        return len(self._segments)

    def vertex(self, i: int) -> Point2:
        return Point2(*self._vertices[i])

    def segment(self, k: int) -> Segment:
        i, j = self._segments[k]
        return Segment(self.vertex(i), self.vertex(j))

    def segments_at_vertex(self, i: int) -> list[int]:
        return [k for k, (a, b) in enumerate(self._segments) if a == i or b == i]

    def total_length(self) -> float:
        return float(self._lengths.sum())

    def bounding_box(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) over the vertex set."""
        v = self._vertices
        return (float(v[:, 0].min()), float(v[:, 1].min()),
                float(v[:, 0].max()), float(v[:, 1].max()))


@dataclass(frozen=True)
class Violation:
    """One violated network invariant, with the offending indices."""

    kind: str
    indices: tuple[int, ...]
    message: str

    def __str__(self) -> str:
        return self.message


def _interior_overlap(a1, b1, a2, b2, eps: float = GEOM_EPS) -> bool:
    """True when the open interiors of [a1,b1] and [a2,b2] intersect.

    Endpoint contact (T-junctions, shared vertices) is allowed; proper
    crossings and collinear overlaps of positive length are not.
    """
    r = b1 - a1
    s = b2 - a2
    len1 = math.hypot(*r)
    len2 = math.hypot(*s)
    denom = r[0] * s[1] - r[1] * s[0]
    qp = a2 - a1
    if abs(denom) <= eps * len1 * len2:
        # Parallel: overlap only possible when collinear.
        off = abs(qp[0] * r[1] - qp[1] * r[0]) / len1
        if off > eps:
            return False
        t2a = (qp @ r) / (len1 * len1)
        t2b = ((b2 - a1) @ r) / (len1 * len1)
        lo = max(0.0, min(t2a, t2b))
        hi = min(1.0, max(t2a, t2b))
        return (hi - lo) * len1 > eps
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = (qp[0] * r[1] - qp[1] * r[0]) / denom
    # Strict interior crossing, with endpoint contact excused within eps.
    et1 = eps / len1
    et2 = eps / len2
    return (et1 < t < 1.0 - et1) and (et2 < u < 1.0 - et2)


def validate_network(n: Network) -> list[Violation]:
    """Report every violated invariant; an empty list means the network is valid."""
    out: list[Violation] = []
    v = n.vertex_array

    for i in range(n.vertex_count):
        for j in range(i + 1, n.vertex_count):
            if math.hypot(v[i, 0] - v[j, 0], v[i, 1] - v[j, 1]) <= GEOM_EPS:
                out.append(Violation("duplicate-vertex", (i, j),
                                     f"vertices {i} and {j} coincide"))

    used = set()
    for (i, j) in n.segment_indices:
        used.add(i)
        used.add(j)
    for i in range(n.vertex_count):
        if i not in used:
            out.append(Violation("isolated-vertex", (i,), f"vertex {i} is isolated"))

    seen: dict[frozenset, int] = {}
    for k, (i, j) in enumerate(n.segment_indices):
        key = frozenset((i, j))
        if key in seen:
            out.append(Violation("duplicate-segment", (seen[key], k),
                                 f"segments {seen[key]} and {k} join the same vertices"))
        else:
            seen[key] = k

    a, b = n.segment_starts, n.segment_ends
    for k1 in range(n.segment_count):
        for k2 in range(k1 + 1, n.segment_count):
            if _interior_overlap(a[k1], b[k1], a[k2], b[k2]):
                out.append(Violation("segment-intersection", (k1, k2),
                                     f"segments {k1} and {k2} have intersecting interiors"))
    return out


@dataclass(frozen=True)
class CollapsedNetwork:
    """Weighted barycenter set obtained by collapsing sub-segments of length <= r.

    Arrays are aligned: positions[k] carries weight weights[k], comes from
    sub-segment sources[k] = (segment index, sub index) of length sub_lengths[k].
    """

    positions: np.ndarray
    weights: np.ndarray
    sub_lengths: np.ndarray
    sources: np.ndarray
    resolution: float

    def __post_init__(self) -> None:
        for arr in (self.positions, self.weights, self.sub_lengths, self.sources):
            arr.setflags(write=False)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def total_weight(self) -> float:
        return float(self.weights.sum())


def _density_values(density, points: np.ndarray) -> np.ndarray:
    if density is None:
        return np.ones(points.shape[0])
    if hasattr(density, "eval_at"):
        return np.asarray(density.eval_at(points), dtype=float)
    return np.asarray(density(points), dtype=float)


def build_collapsed(n: Network, r: float, density=None) -> CollapsedNetwork:
    """Collapse every segment into ceil(len/r) sub-segment barycenters.

    Each barycenter carries the midpoint-rule mass of its sub-segment:
    weight = phi(barycenter) * sub-segment length.
    """
    if not r > 0:
        raise InvalidArgumentError(f"collapse resolution must be positive, got {r}")
    pos: list[np.ndarray] = []
    lens: list[float] = []
    srcs: list[tuple[int, int]] = []
    a, u, seg_len = n.segment_starts, n._u, n.segment_lengths
    for k in range(n.segment_count):
        ks = int(math.ceil(seg_len[k] / r))
        t = (np.arange(ks) + 0.5) / ks
        pos.append(a[k] + t[:, None] * u[k])
        lens.extend([seg_len[k] / ks] * ks)
        srcs.extend((k, i) for i in range(ks))
    positions = np.concatenate(pos, axis=0)
    sub_lengths = np.asarray(lens)
    weights = _density_values(density, positions) * sub_lengths
    return CollapsedNetwork(positions=positions, weights=weights,
                            sub_lengths=sub_lengths,
                            sources=np.asarray(srcs, dtype=int), resolution=float(r))


def _project_all(n: Network, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamped projection parameter and distance of q onto every segment."""
    t = np.clip(np.einsum("ij,ij->i", q[None, :] - n.segment_starts, n._u) / n._uu, 0.0, 1.0)
    foot = n.segment_starts + t[:, None] * n._u
    dist = np.hypot(foot[:, 0] - q[0], foot[:, 1] - q[1])
    return t, dist


def project_to_network(n: Network, q) -> tuple[Point2, int, float]:
    """Globally closest network point to q; ties go to the lowest segment index."""
    qa = as_point(q).as_array()
    t, dist = _project_all(n, qa)
    k = int(np.argmin(dist))
    foot = n.segment_starts[k] + t[k] * n._u[k]
    return Point2(float(foot[0]), float(foot[1])), k, float(t[k])


def distance_to_network(n: Network, q) -> float:
    qa = as_point(q).as_array()
    _, dist = _project_all(n, qa)
    return float(dist.min())


def network_diameter(n: Network) -> float:
    """Max distance between any two network points (attained at vertices)."""
    v = n.vertex_array
    d = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


def network_from_dict(data: dict) -> Network:
    if not isinstance(data, dict) or set(data) != {"vertices", "segments"}:
        raise InvalidArgumentError(
            "network object must have exactly the keys 'vertices' and 'segments'")
    return Network(data["vertices"], data["segments"])


def network_to_dict(n: Network) -> dict:
    return {
        "vertices": [[float(x), float(y)] for x, y in n.vertex_array],
        "segments": [[i, j] for i, j in n.segment_indices],
    }


def load_network(path) -> Network:
    """Load and fully validate a network JSON file; refuse invalid input."""
    with open(path) as fh:
        data = json.load(fh)
    net = network_from_dict(data)
    violations = validate_network(net)
    if violations:
        detail = "; ".join(str(v) for v in violations)
        raise InvalidArgumentError(f"invalid network in {path}: {detail}")
    return net


def save_network(n: Network, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(n), indent=2) + "\n")
