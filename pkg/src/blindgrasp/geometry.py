"""Planar geometry primitives: points, rays, rectangles, polygons and swept-probe queries.

Points and vectors are plain ``(x, y)`` float tuples in the table plane, with the
robot base at the origin. Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple, Optional, Sequence

Point2 = tuple[float, float]
Vec2 = tuple[float, float]

PARALLEL_EPS = 1e-9
UNIT_TOL = 1e-9
_EPS = 1e-12


class ParallelRaysError(ValueError):
    """Raised when two rays are (near) parallel and have no unique crossing."""


class GeometryError(ValueError):
    """Invalid geometric input, e.g. a degenerate or self-intersecting footprint."""


def add(a: Point2, b: Vec2) -> Point2:
    return (a[0] + b[0], a[1] + b[1])


def sub(a: Point2, b: Point2) -> Vec2:
    return (a[0] - b[0], a[1] - b[1])


def scale(a: Vec2, k: float) -> Vec2:
    return (a[0] * k, a[1] * k)


def dot(a: Vec2, b: Vec2) -> float:
    return a[0] * b[0] + a[1] * b[1]


def cross(a: Vec2, b: Vec2) -> float:
    return a[0] * b[1] - a[1] * b[0]


def norm(a: Vec2) -> float:
    return math.hypot(a[0], a[1])


def normalize(a: Vec2) -> Vec2:
    n = norm(a)
    if n == 0.0:
        raise GeometryError("cannot normalize a zero vector")
    return (a[0] / n, a[1] / n)


def perp(a: Vec2) -> Vec2:
    """Rotate by +90 degrees."""
    return (-a[1], a[0])


def rotate(a: Vec2, angle: float) -> Vec2:
    c, s = math.cos(angle), math.sin(angle)
    return (c * a[0] - s * a[1], s * a[0] + c * a[1])


def rotate_polygon(poly: Sequence[Point2], angle: float, pivot: Point2) -> list[Point2]:
    return [add(pivot, rotate(sub(p, pivot), angle)) for p in poly]


def heading(angle: float) -> Vec2:
    return (math.cos(angle), math.sin(angle))


def is_unit(a: Vec2, tol: float = UNIT_TOL) -> bool:
    return abs(norm(a) - 1.0) <= tol


class Ray2(NamedTuple):
    origin: Point2
    dir: Vec2


class Pose2(NamedTuple):
    x: float
    y: float
    yaw: float = 0.0

    def apply(self, p: Point2) -> Point2:
        """Map a point from the local frame into the world frame."""
        q = rotate(p, self.yaw)
        return (q[0] + self.x, q[1] + self.y)

    def translated(self, d: Vec2) -> "Pose2":
        return Pose2(self.x + d[0], self.y + d[1], self.yaw)


class Rect2(NamedTuple):
    center: Point2
    half_extents: tuple[float, float]
    yaw: float = 0.0

    @property
    def axes(self) -> tuple[Vec2, Vec2]:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return (c, s), (-s, c)

    @property
    def area(self) -> float:
        return 4.0 * self.half_extents[0] * self.half_extents[1]

    def to_world(self, local: Point2) -> Point2:
        ex, ey = self.axes
        return (
            self.center[0] + local[0] * ex[0] + local[1] * ey[0],
            self.center[1] + local[0] * ex[1] + local[1] * ey[1],
        )

    def to_local(self, p: Point2) -> Point2:
        ex, ey = self.axes
        d = sub(p, self.center)
        return (dot(d, ex), dot(d, ey))

    def corners(self) -> list[Point2]:
        """Counterclockwise corners, starting at local (-hx, -hy)."""
        hx, hy = self.half_extents
        return [self.to_world(c) for c in ((-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy))]

    def contains(self, p: Point2, tol: float = 1e-9) -> bool:
        lx, ly = self.to_local(p)
        return abs(lx) <= self.half_extents[0] + tol and abs(ly) <= self.half_extents[1] + tol


def ray_intersect(r1: Ray2, r2: Ray2) -> Point2:
    """Crossing point of the two rays, treated as infinite lines.

    Raises ParallelRaysError when ``|cross(r1.dir, r2.dir)| < 1e-9``.
    """
    if not (is_unit(r1.dir) and is_unit(r2.dir)):
        raise GeometryError("ray directions must be unit vectors")
    den = cross(r1.dir, r2.dir)
    if abs(den) < PARALLEL_EPS:
        raise ParallelRaysError(f"rays are parallel (cross={den:.3g})")
    s1 = cross(sub(r2.origin, r1.origin), r2.dir) / den
    return add(r1.origin, scale(r1.dir, s1))


def inflate_rect(r: Rect2, margin: float) -> Rect2:
    if margin < 0:
        raise GeometryError("margin must be non-negative")
    hx, hy = r.half_extents
    return Rect2(r.center, (hx + margin, hy + margin), r.yaw)


# -- polygons -----------------------------------------------------------------


def signed_area(poly: Sequence[Point2]) -> float:
    s = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def centroid(poly: Sequence[Point2]) -> Point2:
    a = signed_area(poly)
    cx = cy = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        k = x1 * y2 - x2 * y1
        cx += (x1 + x2) * k
        cy += (y1 + y2) * k
    return (cx / (6.0 * a), cy / (6.0 * a))


def _orient(a: Point2, b: Point2, c: Point2) -> float:
    return cross(sub(b, a), sub(c, a))


def _on_segment(p: Point2, a: Point2, b: Point2, tol: float) -> bool:
    ab = sub(b, a)
    L = norm(ab)
    if L < _EPS:
        return norm(sub(p, a)) <= tol
    if abs(cross(ab, sub(p, a))) / L > tol:
        return False
    s = dot(sub(p, a), ab) / (L * L)
    return -tol / L <= s <= 1.0 + tol / L


def segments_intersect(a1: Point2, a2: Point2, b1: Point2, b2: Point2, tol: float = 1e-12) -> bool:
    """Closed-segment intersection test (touching counts)."""
    d1 = _orient(b1, b2, a1)
    d2 = _orient(b1, b2, a2)
    d3 = _orient(a1, a2, b1)
    d4 = _orient(a1, a2, b2)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and (
        (d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)
    ):
        return True
    return (
        _on_segment(a1, b1, b2, 1e-12)
        or _on_segment(a2, b1, b2, 1e-12)
        or _on_segment(b1, a1, a2, 1e-12)
        or _on_segment(b2, a1, a2, 1e-12)
    )


def point_in_polygon(p: Point2, poly: Sequence[Point2], tol: float = 1e-12) -> bool:
    """Closed point-in-polygon test; points on the boundary count as inside."""
    n = len(poly)
    inside = False
    x, y = p
    for i in range(n):
        a = poly[i]
        b = poly[(i + 1) % n]
        if _on_segment(p, a, b, tol):
            return True
        if (a[1] > y) != (b[1] > y):
            xc = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            if xc > x:
                inside = not inside
    return inside


def polygons_overlap(a: Sequence[Point2], b: Sequence[Point2]) -> bool:
    """True when two simple polygons share at least one point (closed sets)."""
    if not _bbox_overlap(a, b):
        return False
    na, nb = len(a), len(b)
    for i in range(na):
        a1, a2 = a[i], a[(i + 1) % na]
        for j in range(nb):
            if segments_intersect(a1, a2, b[j], b[(j + 1) % nb]):
                return True
    return point_in_polygon(a[0], b) or point_in_polygon(b[0], a)


def _bbox_overlap(a: Sequence[Point2], b: Sequence[Point2]) -> bool:
    ax = [p[0] for p in a]
    ay = [p[1] for p in a]
    bx = [p[0] for p in b]
    by = [p[1] for p in b]
    return not (max(ax) < min(bx) or max(bx) < min(ax) or max(ay) < min(by) or max(by) < min(ay))


def is_simple(poly: Sequence[Point2]) -> bool:
    n = len(poly)
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if segments_intersect(a1, a2, poly[j], poly[(j + 1) % n]):
                return False
    return True


def regular_polygon(radius: float, segments: int = 32, rx: Optional[float] = None) -> list[Point2]:
    """CCW n-gon inscribed in a circle (or ellipse when ``rx`` is given, ``radius`` then is ry)."""
    ax = radius if rx is None else rx
    return [
        (ax * math.cos(2 * math.pi * k / segments), radius * math.sin(2 * math.pi * k / segments))
        for k in range(segments)
    ]


class Footprint:
    """Simple CCW polygon in the object's local frame."""

    __slots__ = ("vertices",)

    def __init__(self, vertices: Iterable[Sequence[float]]):
        verts = tuple((float(v[0]), float(v[1])) for v in vertices)
        if len(verts) < 3:
            raise GeometryError("footprint needs at least 3 vertices")
        if not all(math.isfinite(c) for v in verts for c in v):
            raise GeometryError("footprint coordinates must be finite")
        if signed_area(verts) <= 0:
            raise GeometryError("footprint must be counterclockwise with positive area")
        if not is_simple(verts):
            raise GeometryError("footprint is self-intersecting")
        self.vertices = verts

    def __repr__(self) -> str:
        return f"Footprint({len(self.vertices)} vertices)"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Footprint) and self.vertices == other.vertices

    def __hash__(self) -> int:
        return hash(self.vertices)

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    def placed(self, pose: Pose2) -> list[Point2]:
        return [pose.apply(v) for v in self.vertices]


def extent_along(f: Footprint, pose: Pose2, direction: Vec2) -> float:
    """Width of the posed footprint measured along ``direction``."""
    proj = [dot(p, direction) for p in f.placed(pose)]
    return max(proj) - min(proj)


# -- swept probe --------------------------------------------------------------


class Contact(NamedTuple):
    t: float
    point: Point2  # probe-centre position at contact
    object_id: object
    touch: Point2  # centre of the touching region on the probe edge


def _probe_hits_at_zero(ab: Sequence[Point2], hw: float) -> Optional[float]:
    """Lateral offset of the contact at a=0, or None if the probe at a=0 is free.

    ``ab`` is the polygon in probe coordinates (a along motion, b lateral).
    """
    crossings: list[float] = []
    n = len(ab)
    for i in range(n):
        (a1, b1), (a2, b2) = ab[i], ab[(i + 1) % n]
        if a1 == 0.0 and a2 == 0.0:
            crossings.extend((b1, b2))
        elif (a1 <= 0.0 <= a2) or (a2 <= 0.0 <= a1):
            s = a1 / (a1 - a2)
            crossings.append(b1 + s * (b2 - b1))
    pts = sorted({-hw, hw, *[c for c in crossings if -hw <= c <= hw]})
    intervals: list[tuple[float, float]] = []
    for c in pts:
        if point_in_polygon((0.0, c), ab, 1e-12):
            intervals.append((c, c))
    for lo, hi in zip(pts, pts[1:]):
        if point_in_polygon((0.0, 0.5 * (lo + hi)), ab, 1e-12):
            intervals.append((lo, hi))
    if not intervals:
        return None
    return _nearest_interval_mid(intervals)


def _nearest_interval_mid(intervals: list[tuple[float, float]]) -> float:
    merged: list[list[float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1] + 1e-12:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])

    def gap(iv: list[float]) -> float:
        return 0.0 if iv[0] <= 0.0 <= iv[1] else min(abs(iv[0]), abs(iv[1]))

    best = min(merged, key=gap)
    return 0.5 * (best[0] + best[1])


def _first_contact_polygon(
    start: Point2, d: Vec2, n: Vec2, length: float, hw: float, poly: Sequence[Point2]
) -> Optional[tuple[float, float]]:
    """Return (a*, b_touch) for one polygon, or None."""
    ab = [(dot(sub(p, start), d), dot(sub(p, start), n)) for p in poly]
    if max(a for a, _ in ab) < 0.0 or min(a for a, _ in ab) > length:
        return None
    if max(b for _, b in ab) < -hw or min(b for _, b in ab) > hw:
        return None

    b0 = _probe_hits_at_zero(ab, hw)
    if b0 is not None:
        return 0.0, b0

    # boundary pieces inside the lateral band, as (a_at_lo, b_at_lo, a_at_hi, b_at_hi)
    pieces = []
    m = len(ab)
    for i in range(m):
        (a1, b1), (a2, b2) = ab[i], ab[(i + 1) % m]
        db = b2 - b1
        if db == 0.0:
            if abs(b1) > hw:
                continue
            lo, hi = 0.0, 1.0
        else:
            s1 = (-hw - b1) / db
            s2 = (hw - b1) / db
            lo, hi = max(0.0, min(s1, s2)), min(1.0, max(s1, s2))
            if lo > hi:
                continue
        pa = (a1 + lo * (a2 - a1), b1 + lo * db)
        pb = (a1 + hi * (a2 - a1), b1 + hi * db)
        pieces.append((pa, pb))
    best = math.inf
    for pa, pb in pieces:
        amin = min(pa[0], pb[0])
        if amin >= 0.0 and amin < best:
            best = amin
    if best > length:
        return None

    tol = 1e-12 * max(1.0, best)
    touching: list[tuple[float, float]] = []
    for pa, pb in pieces:
        lo_a = min(pa[0], pb[0])
        if lo_a > best + tol:
            continue
        if abs(pa[0] - pb[0]) <= tol:
            touching.append((min(pa[1], pb[1]), max(pa[1], pb[1])))
        else:
            b = pa[1] if pa[0] < pb[0] else pb[1]
            touching.append((b, b))
    return best, _nearest_interval_mid(touching)


def sweep_first_contact(
    start: Point2,
    end: Point2,
    probe_half_width: float,
    obstacles: Iterable[tuple[object, Sequence[Point2]]],
) -> Optional[Contact]:
    """Earliest contact of a straight probe edge swept from ``start`` to ``end``.

    The probe is a segment of length ``2 * probe_half_width`` centred on the path and
    perpendicular to it. ``obstacles`` yields ``(object_id, world_polygon)`` pairs.
    Returns None when the whole sweep is free.
    """
    delta = sub(end, start)
    length = norm(delta)
    if length == 0.0:
        raise GeometryError("sweep start and end coincide")
    if probe_half_width < 0:
        raise GeometryError("probe half width must be non-negative")
    d = (delta[0] / length, delta[1] / length)
    n = perp(d)
    best: Optional[tuple[float, float, object]] = None
    for oid, poly in obstacles:
        hit = _first_contact_polygon(start, d, n, length, probe_half_width, poly)
        if hit is not None and (best is None or hit[0] < best[0]):
            best = (hit[0], hit[1], oid)
    if best is None:
        return None
    a, b, oid = best
    center = add(start, scale(d, a))
    return Contact(a / length, center, oid, add(center, scale(n, b)))
