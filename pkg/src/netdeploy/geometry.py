"""Planar points and straight segments: the primitives everything reduces to.

All arithmetic is 64-bit floating point; geometric equality tests use the
absolute tolerance GEOM_EPS (scenario length units).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

# Absolute geometric tolerance, far below any feature size of the scenarios.
GEOM_EPS = 1e-9


@dataclass(frozen=True)
class Point2:
    """An immutable point of the plane with finite coordinates."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidArgumentError(f"non-finite coordinates ({self.x}, {self.y})")

    def __add__(self, other: "Point2") -> "Point2":
        return Point2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Point2") -> "Point2":
        return Point2(self.x - other.x, self.y - other.y)

    def __mul__(self, scalar: float) -> "Point2":
        return Point2(self.x * scalar, self.y * scalar)

    __rmul__ = __mul__

    def __iter__(self):
        yield self.x
        yield self.y

    def dot(self, other: "Point2") -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: "Point2") -> float:
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def distance_to(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


def as_point(p) -> Point2:
    """Coerce a Point2, a pair, or a length-2 array to Point2."""
    if isinstance(p, Point2):
        return p
    x, y = p
    return Point2(float(x), float(y))


@dataclass(frozen=True)
class Segment:
    """A closed straight segment [a, b] with a != b."""

    a: Point2
    b: Point2

    def __post_init__(self) -> None:
        if self.a.distance_to(self.b) == 0.0:
            raise InvalidArgumentError(f"degenerate segment at {self.a}")

    def direction(self) -> Point2:
        """Unit vector from a to b."""
        d = self.b - self.a
        n = d.norm()
        return Point2(d.x / n, d.y / n)


def segment(a, b) -> Segment:
    return Segment(as_point(a), as_point(b))


def segment_length(s: Segment) -> float:
    return s.a.distance_to(s.b)


def barycenter(s: Segment) -> Point2:
    return Point2(0.5 * (s.a.x + s.b.x), 0.5 * (s.a.y + s.b.y))


def partition_segment(s: Segment, k: int) -> list[Segment]:
    """Split s into k equal sub-segments sharing consecutive endpoints."""
    if k < 1:
        raise InvalidArgumentError(f"partition count must be >= 1, got {k}")
    d = s.b - s.a
    cuts = [Point2(s.a.x + d.x * i / k, s.a.y + d.y * i / k) for i in range(k + 1)]
    # Pin the extreme cuts so the union is exactly s despite rounding.
    cuts[0] = s.a
    cuts[-1] = s.b
    return [Segment(cuts[i], cuts[i + 1]) for i in range(k)]


def point_at(s: Segment, t: float) -> Point2:
    """Affine interpolation (1 - t) * a + t * b for t in [0, 1].

    The blended form makes point_at(s, 0.5) equal barycenter(s) exactly and
    the endpoints exact at t = 0 and t = 1.
    """
    if not 0.0 <= t <= 1.0:
        raise InvalidArgumentError(f"parameter {t} outside [0, 1]")
    w = 1.0 - t
    return Point2(w * s.a.x + t * s.b.x, w * s.a.y + t * s.b.y)


def project_point_to_segment(q, s: Segment) -> tuple[Point2, float, float]:
    """Closest point of the closed segment to q.

    Returns (foot, t, dist) with t clamped to [0, 1] and dist minimal over s.
    """
    q = as_point(q)
    d = s.b - s.a
    t = (q - s.a).dot(d) / d.dot(d)
    t = min(1.0, max(0.0, t))
    foot = point_at(s, t)
    return foot, t, q.distance_to(foot)
