"""Planar geometry: PED/PSED, epsilon regions, tangent wedges and candidate regions.

Scalar functions take ``Point2``/``Segment2`` tuples and are used in the
compressor's inner loop. The ``*_many`` / array functions are numpy
vectorised over many points or many segments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegenerateGeometryError, MalformedInputError, PreconditionError

TWO_PI = 2.0 * math.pi
EARTH_RADIUS_METERS = 6371008.8


class Point2(NamedTuple):
    x: float
    y: float


class Segment2(NamedTuple):
    start: Point2
    end: Point2

    @property
    def length(self) -> float:
        return math.hypot(self.end.x - self.start.x, self.end.y - self.start.y)

    @property
    def is_degenerate(self) -> bool:
        return self.start.x == self.end.x and self.start.y == self.end.y


class EpsilonRegion(NamedTuple):
    center: Point2
    radius: float


class Rect(NamedTuple):
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    @classmethod
    def from_center(cls, cx: float, cy: float, width: float, height: float) -> 'Rect':
        return cls(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)

    @classmethod
    def bounding(cls, xs, ys) -> 'Rect':
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        return cls(float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()))

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    @property
    def area(self) -> float:
        return self.width * self.height

    def validated(self) -> 'Rect':
        if not all(math.isfinite(v) for v in self):
            raise MalformedInputError(f'rectangle has non-finite bounds: {tuple(self)}')
        if self.min_x > self.max_x or self.min_y > self.max_y:
            raise MalformedInputError(f'rectangle bounds are inverted: {tuple(self)}')
        return self

    def contains(self, p: Point2) -> bool:
        return self.min_x <= p.x <= self.max_x and self.min_y <= p.y <= self.max_y

    def overlaps(self, other: 'Rect') -> bool:
        # closed rectangles: touching edges overlap
        return (self.min_x <= other.max_x and other.min_x <= self.max_x
                and self.min_y <= other.max_y and other.min_y <= self.max_y)

    def contains_rect(self, other: 'Rect') -> bool:
        return (self.min_x <= other.min_x and other.max_x <= self.max_x
                and self.min_y <= other.min_y and other.max_y <= self.max_y)

    def expand(self, d: float) -> 'Rect':
        return Rect(self.min_x - d, self.min_y - d, self.max_x + d, self.max_y + d)

    def union(self, other: 'Rect') -> 'Rect':
        return Rect(min(self.min_x, other.min_x), min(self.min_y, other.min_y),
                    max(self.max_x, other.max_x), max(self.max_y, other.max_y))


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


class Wedge(NamedTuple):
    """Angular interval around ``center`` of half-width ``half``.

    ``half >= pi`` is the full circle.
    """
    center: float
    half: float

    @property
    def lo(self) -> float:
        return self.center - self.half

    @property
    def hi(self) -> float:
        return self.center + self.half

    @property
    def width(self) -> float:
        return min(2.0 * self.half, TWO_PI)

    @property
    def is_full(self) -> bool:
        return self.half >= math.pi

    def contains_direction(self, theta: float) -> bool:
        if self.is_full:
            return True
        return abs(wrap_angle(theta - self.center)) <= self.half


FULL_CIRCLE = Wedge(0.0, math.pi)


def intersect_wedges(a: Wedge, b: Wedge) -> Optional[Wedge]:
    """Intersection on the circle, or None when the arcs are disjoint.

    Assumes at most one of the arcs is wider than a half-plane, so the
    intersection is a single arc.
    """
    if a.is_full:
        return b
    if b.is_full:
        return a
    d = wrap_angle(b.center - a.center)
    best = None
    for shift in (d, d - TWO_PI, d + TWO_PI):
        lo = max(-a.half, shift - b.half)
        hi = min(a.half, shift + b.half)
        if lo <= hi and (best is None or hi - lo > best[1] - best[0]):
            best = (lo, hi)
    if best is None:
        return None
    lo, hi = best
    return Wedge(wrap_angle(a.center + (lo + hi) / 2.0), (hi - lo) / 2.0)


def distance(a: Point2, b: Point2) -> float:
    return math.hypot(b.x - a.x, b.y - a.y)


def ped(m: Point2, seg: Segment2) -> float:
    s, e = seg
    dx = e.x - s.x
    dy = e.y - s.y
    if dx == 0.0 and dy == 0.0:
        raise DegenerateGeometryError(f'PED undefined for zero-length segment at {tuple(s)}')
    cross = (m.x - s.x) * dy - (m.y - s.y) * dx
    return abs(cross) / math.hypot(dx, dy)


def psed(m: Point2, seg: Segment2) -> float:
    s, e = seg
    dx = e.x - s.x
    dy = e.y - s.y
    ax = m.x - s.x
    ay = m.y - s.y
    if dx == 0.0 and dy == 0.0:
        return math.hypot(ax, ay)
    bx = e.x - m.x
    by = e.y - m.y
    if ax * dx + ay * dy >= 0.0 and bx * dx + by * dy >= 0.0:
        return abs(ax * dy - ay * dx) / math.hypot(dx, dy)
    return min(math.hypot(ax, ay), math.hypot(bx, by))


def _psed_kernel(mx, my, x0, y0, x1, y1) -> np.ndarray:
    """PSED broadcast over any mix of point and segment arrays."""
    dx = x1 - x0
    dy = y1 - y0
    ax = mx - x0
    ay = my - y0
    bx = x1 - mx
    by = y1 - my
    d_start = np.hypot(ax, ay)
    d_end = np.hypot(bx, by)
    length = np.hypot(dx, dy)
    on_foot = (ax * dx + ay * dy >= 0.0) & (bx * dx + by * dy >= 0.0) & (length > 0.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        perp = np.abs(ax * dy - ay * dx) / length
    return np.where(on_foot, perp, np.minimum(d_start, d_end))


def psed_many(xy, seg: Segment2) -> np.ndarray:
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    (sx, sy), (ex, ey) = seg
    return _psed_kernel(xy[:, 0], xy[:, 1], sx, sy, ex, ey)


def ped_many(xy, seg: Segment2) -> np.ndarray:
    if seg.is_degenerate:
        raise DegenerateGeometryError(f'PED undefined for zero-length segment at {tuple(seg.start)}')
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    (sx, sy), (ex, ey) = seg
    dx = ex - sx
    dy = ey - sy
    return np.abs((xy[:, 0] - sx) * dy - (xy[:, 1] - sy) * dx) / math.hypot(dx, dy)


def segment_intersects_disc(seg: Segment2, region: EpsilonRegion) -> bool:
    return psed(region.center, seg) <= region.radius


def _point_rect_distance(px, py, r: Rect) -> np.ndarray:
    dx = np.maximum(np.maximum(r.min_x - px, 0.0), px - r.max_x)
    dy = np.maximum(np.maximum(r.min_y - py, 0.0), py - r.max_y)
    return np.hypot(dx, dy)


def segment_rect_distance(x0, y0, x1, y1, r: Rect) -> np.ndarray:
    """Minimum distance from each segment to the closed rectangle ``r``."""
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    y1 = np.asarray(y1, dtype=float)

    # separating-axis test: box axes, then the segment's normal
    bbox_hit = ((np.minimum(x0, x1) <= r.max_x) & (np.maximum(x0, x1) >= r.min_x)
                & (np.minimum(y0, y1) <= r.max_y) & (np.maximum(y0, y1) >= r.min_y))
    dx = x1 - x0
    dy = y1 - y0
    corners = ((r.min_x, r.min_y), (r.max_x, r.min_y), (r.max_x, r.max_y), (r.min_x, r.max_y))
    sides = [(cx - x0) * dy - (cy - y0) * dx for cx, cy in corners]
    all_pos = (sides[0] > 0) & (sides[1] > 0) & (sides[2] > 0) & (sides[3] > 0)
    all_neg = (sides[0] < 0) & (sides[1] < 0) & (sides[2] < 0) & (sides[3] < 0)
    touching = bbox_hit & ~all_pos & ~all_neg

    # disjoint: the closest pair always involves an endpoint of one of the two shapes
    d = np.minimum(_point_rect_distance(x0, y0, r), _point_rect_distance(x1, y1, r))
    for cx, cy in corners:
        d = np.minimum(d, _psed_kernel(cx, cy, x0, y0, x1, y1))
    return np.where(touching, 0.0, d)


def rect_contains(r: Rect, p: Point2) -> bool:
    return r.contains(p)


def wedge_of(anchor: Point2, target: Point2, epsilon: float) -> Wedge:
    """Directions from ``anchor`` whose rays meet the epsilon disc around ``target``."""
    dx = target.x - anchor.x
    dy = target.y - anchor.y
    d = math.hypot(dx, dy)
    if d <= epsilon:
        raise PreconditionError(
            f'anchor {tuple(anchor)} lies inside the {epsilon} region of {tuple(target)}')
    return Wedge(math.atan2(dy, dx), math.asin(epsilon / d))


@dataclass(frozen=True, slots=True)
class CandidateRegion:
    """Wedge of admissible directions from ``anchor`` minus the disc of ``min_radius``."""
    anchor: Point2
    wedge: Wedge = FULL_CIRCLE
    min_radius: float = 0.0
    empty: bool = False

    @property
    def is_fresh(self) -> bool:
        return self.min_radius == 0.0 and self.wedge.is_full

    def contains(self, p: Point2) -> bool:
        if self.empty:
            return False
        if self.is_fresh:
            return True
        dx = p.x - self.anchor.x
        dy = p.y - self.anchor.y
        if math.hypot(dx, dy) <= self.min_radius:
            return False
        return self.wedge.contains_direction(math.atan2(dy, dx))

    def update(self, p: Point2, epsilon: float) -> 'CandidateRegion':
        if self.empty:
            raise PreconditionError('cannot update an empty candidate region')
        w = wedge_of(self.anchor, p, epsilon)
        radius = max(self.min_radius, distance(self.anchor, p))
        merged = intersect_wedges(self.wedge, w)
        if merged is None:
            return CandidateRegion(self.anchor, Wedge(self.wedge.center, 0.0), radius, True)
        return CandidateRegion(self.anchor, merged, radius, False)


def candidate_init(anchor: Point2) -> CandidateRegion:
    return CandidateRegion(anchor)


def candidate_update(region: CandidateRegion, new_point: Point2, epsilon: float) -> CandidateRegion:
    return region.update(new_point, epsilon)


def candidate_contains(region: CandidateRegion, p: Point2) -> bool:
    return region.contains(p)


def project_equirectangular(lon, lat, ref_lat: Optional[float] = None):
    """Degrees to planar metres, scaled at ``ref_lat`` (mean latitude by default)."""
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    if ref_lat is None:
        ref_lat = float(lat.mean()) if lat.size else 0.0
    x = EARTH_RADIUS_METERS * np.radians(lon) * math.cos(math.radians(ref_lat))
    y = EARTH_RADIUS_METERS * np.radians(lat)
    return x, y
