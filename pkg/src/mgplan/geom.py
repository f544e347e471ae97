"""2D geometric primitives: points, polygons, rigid placement and the
collision / goal-containment predicates used by the planner.

Boundary contact counts as overlap and as containment.
"""
import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ValidationError

TWO_PI = 2.0 * math.pi


class Point2(NamedTuple):
    x: float
    y: float


class Pose(NamedTuple):
    position: Point2
    heading: float


def normalize_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    return a - math.pi


class Polygon:
    """Simple polygon with counter-clockwise vertices and a cached bounding box."""

    __slots__ = ("vertices", "bbox")

    def __init__(self, vertices: Sequence[Sequence[float]]):
        self.vertices = tuple(Point2(float(x), float(y)) for x, y in vertices)
        xs = [v.x for v in self.vertices]
        ys = [v.y for v in self.vertices]
        self.bbox = (min(xs), min(ys), max(xs), max(ys)) if xs else (0.0, 0.0, 0.0, 0.0)

    def __eq__(self, other):
        return isinstance(other, Polygon) and self.vertices == other.vertices

    def __hash__(self):
        return hash(self.vertices)

    def __repr__(self):
        return f"Polygon({[tuple(v) for v in self.vertices]!r})"

    def __len__(self):
        return len(self.vertices)

    @classmethod
    def rectangle(cls, xmin, ymin, xmax, ymax) -> "Polygon":
        return cls([(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)])

    def area(self) -> float:
        return signed_area(self.vertices)

    def centroid(self) -> Point2:
        a = 0.0
        cx = cy = 0.0
        vs = self.vertices
        for i in range(len(vs)):
            x0, y0 = vs[i]
            x1, y1 = vs[(i + 1) % len(vs)]
            c = x0 * y1 - x1 * y0
            a += c
            cx += (x0 + x1) * c
            cy += (y0 + y1) * c
        a *= 0.5
        return Point2(cx / (6.0 * a), cy / (6.0 * a))

    def is_convex(self) -> bool:
        vs = self.vertices
        n = len(vs)
        for i in range(n):
            if _cross(vs[i], vs[(i + 1) % n], vs[(i + 2) % n]) < 0.0:
                return False
        return True

    def validate(self) -> "Polygon":
        """Raise ValidationError unless the polygon is simple, CCW, with positive area."""
        vs = self.vertices
        n = len(vs)
        if n < 3:
            raise ValidationError(f"polygon needs at least 3 vertices, got {n}")
        for v in vs:
            if not (math.isfinite(v.x) and math.isfinite(v.y)):
                raise ValidationError("polygon has non-finite coordinates")
        if signed_area(vs) <= 0.0:
            raise ValidationError("polygon must be counter-clockwise with positive area")
        for i in range(n):
            a0, a1 = vs[i], vs[(i + 1) % n]
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or j == (i + 1) % n:
                    continue
                if segments_intersect(a0, a1, vs[j], vs[(j + 1) % n]):
                    raise ValidationError("polygon is self-intersecting")
        return self


def signed_area(vs) -> float:
    s = 0.0
    n = len(vs)
    for i in range(n):
        x0, y0 = vs[i]
        x1, y1 = vs[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _on_segment(p, a, b) -> bool:
    # assumes p collinear with a-b
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection test; touching endpoints count."""
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and \
            ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(p1, q1, q2):
        return True
    if d2 == 0 and _on_segment(p2, q1, q2):
        return True
    if d3 == 0 and _on_segment(q1, p1, p2):
        return True
    if d4 == 0 and _on_segment(q2, p1, p2):
        return True
    return False


def point_in_polygon(p, poly: Polygon) -> bool:
    """True iff p lies inside poly or on its boundary."""
    px, py = p
    xmin, ymin, xmax, ymax = poly.bbox
    if px < xmin or px > xmax or py < ymin or py > ymax:
        return False
    vs = poly.vertices
    n = len(vs)
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = vs[i]
        xj, yj = vs[j]
        if _cross(vs[j], vs[i], p) == 0.0 and _on_segment(p, vs[j], vs[i]):
            return True
        if (yi > py) != (yj > py):
            xc = xj + (py - yj) * (xi - xj) / (yi - yj)
            if px < xc:
                inside = not inside
        j = i
    return inside


def _bbox_overlap(a, b) -> bool:
    return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])


def polygons_overlap(a: Polygon, b: Polygon) -> bool:
    """True iff the polygons share any point (interior overlap or boundary contact)."""
    if not _bbox_overlap(a.bbox, b.bbox):
        return False
    av, bv = a.vertices, b.vertices
    na, nb = len(av), len(bv)
    for i in range(na):
        p1, p2 = av[i], av[(i + 1) % na]
        for j in range(nb):
            if segments_intersect(p1, p2, bv[j], bv[(j + 1) % nb]):
                return True
    # no edge crossings: either disjoint or one contains the other
    return point_in_polygon(av[0], b) or point_in_polygon(bv[0], a)


def place(shape: Polygon, pose) -> Polygon:
    """Rotate body-frame vertices by the heading, then translate by the position."""
    (tx, ty), heading = pose
    c = math.cos(heading)
    s = math.sin(heading)
    return Polygon([(c * x - s * y + tx, s * x + c * y + ty) for x, y in shape.vertices])


def state_in_collision(s, robot_shape: Polygon, scene) -> bool:
    """Place the robot at the state's pose and test it against obstacles and world bounds."""
    body = place(robot_shape, ((s.x, s.y), s.theta))
    xmin, ymin, xmax, ymax = scene.bounds
    bx0, by0, bx1, by1 = body.bbox
    if bx0 < xmin or by0 < ymin or bx1 > xmax or by1 > ymax:
        return True
    for obs in scene.obstacles:
        if polygons_overlap(body, obs):
            return True
    return False


def point_in_obstacles(p, obstacles) -> bool:
    for obs in obstacles:
        if point_in_polygon(p, obs):
            return True
    return False


def goal_reached(s, g) -> bool:
    """Only the position of ``s`` matters; heading, steering and speed are ignored."""
    cx, cy = g.center
    h = g.half_side
    return abs(s.x - cx) <= h and abs(s.y - cy) <= h


def point_segment_distance(p, a, b) -> float:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    ll = dx * dx + dy * dy
    t = 0.0 if ll == 0.0 else max(0.0, min(1.0, ((p[0] - ax) * dx + (p[1] - ay) * dy) / ll))
    return math.hypot(p[0] - ax - t * dx, p[1] - ay - t * dy)


def polygon_distance(a: Polygon, b: Polygon) -> float:
    """Euclidean gap between two polygons; 0 when they overlap or touch."""
    if polygons_overlap(a, b):
        return 0.0
    best = math.inf
    for src, dst in ((a.vertices, b.vertices), (b.vertices, a.vertices)):
        n = len(dst)
        for p in src:
            for j in range(n):
                d = point_segment_distance(p, dst[j], dst[(j + 1) % n])
                if d < best:
                    best = d
    return best


def points_in_polygon(xs, ys, poly: Polygon):
    """Vectorized crossing-number containment test for arrays of points.

    Boundary points are not treated specially; callers only use this for
    randomly drawn points where exact boundary hits have measure zero.
    """
    xmin, ymin, xmax, ymax = poly.bbox
    inside = np.zeros(xs.shape, dtype=bool)
    cand = (xs >= xmin) & (xs <= xmax) & (ys >= ymin) & (ys <= ymax)
    if not cand.any():
        return inside
    px = xs[cand]
    py = ys[cand]
    acc = np.zeros(px.shape, dtype=bool)
    vs = poly.vertices
    n = len(vs)
    for i in range(n):
        xi, yi = vs[i]
        xj, yj = vs[i - 1]
        if yi == yj:
            continue
        straddle = (yi > py) != (yj > py)
        xc = xj + (py - yj) * (xi - xj) / (yi - yj)
        acc ^= straddle & (px < xc)
    inside[cand] = acc
    return inside


def robot_rectangle(length: float, width: float) -> Polygon:
    """Body-frame rectangle with the reference point at the rear-axle center."""
    hw = 0.5 * width
    return Polygon([(0.0, -hw), (length, -hw), (length, hw), (0.0, hw)])
