"""Plate geometry and the obstacle-avoiding travel-time model.

Wave propagation is modelled as the shortest geometric path between two
points at a single constant speed, where circular holes are perfect
barriers.  Shortest paths amid disjoint circular obstacles consist of
straight tangent segments and arcs along hole boundaries, so the exact
length is found with Dijkstra on a visibility graph whose nodes are the
query points plus all point-to-circle and circle-to-circle tangent
points.

The plate itself never constrains a path: both endpoints and all holes
lie inside the (convex) rectangle, hence so does every shortest path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from heapq import heappop, heappush

import numpy as np

from .errors import InvalidLocationError

# Clearance tolerance (mm) for strict-interior tests: tangent segments and
# arcs touch their own circles at exactly radius distance.
_EPS = 1e-9
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PlateGeometry:
    """Rectangular plate with circular holes and one wave speed.

    Dimensions in mm, wave speed in mm/s.  Holes are (centre_x,
    centre_y, radius) triples that must lie fully inside the plate.
    """

    width: float = 200.0
    height: float = 370.0
    holes: tuple = ()
    wave_speed: float = 5.4e6

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0 and self.wave_speed > 0):
            raise ValueError("width, height and wave_speed must be positive")
        holes = tuple((float(x), float(y), float(r)) for x, y, r in self.holes)
        for x, y, r in holes:
            if r <= 0:
                raise ValueError("hole radii must be positive")
            if x - r < 0 or x + r > self.width or y - r < 0 or y + r > self.height:
                raise ValueError(f"hole ({x}, {y}, {r}) extends outside the plate")
        object.__setattr__(self, "holes", holes)
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "height", float(self.height))
        object.__setattr__(self, "wave_speed", float(self.wave_speed))


@dataclass(frozen=True)
class SensorLayout:
    """Ordered sensor positions; sensor ids are 1-based row indices."""

    positions: tuple

    def __post_init__(self):
        pos = tuple((float(x), float(y)) for x, y in self.positions)
        if len(pos) < 3:
            raise ValueError("at least three sensors are needed for a unique fix")
        object.__setattr__(self, "positions", pos)

    @property
    def count(self) -> int:
        return len(self.positions)

    @property
    def sensor_ids(self) -> tuple:
        return tuple(range(1, self.count + 1))

    def position_of(self, sensor_id: int) -> tuple:
        return self.positions[sensor_id - 1]


def is_valid_point(geom: PlateGeometry, point) -> bool:
    """True when the point is on the plate and not strictly inside a hole."""
    x, y = float(point[0]), float(point[1])
    if not (0.0 <= x <= geom.width and 0.0 <= y <= geom.height):
        return False
    for hx, hy, hr in geom.holes:
        if (x - hx) ** 2 + (y - hy) ** 2 < hr * hr * (1.0 - 1e-12):
            return False
    return True


def require_valid_point(geom: PlateGeometry, point, what="point"):
    if not is_valid_point(geom, point):
        raise InvalidLocationError(
            f"{what} ({point[0]:g}, {point[1]:g}) is outside the plate or "
            "inside a hole"
        )


def validate_layout(geom: PlateGeometry, layout: SensorLayout):
    for i, p in enumerate(layout.positions, start=1):
        require_valid_point(geom, p, what=f"sensor {i}")


# ---------------------------------------------------------------------------
# Segment/circle primitives
# ---------------------------------------------------------------------------


def _segment_blocked_by(p, q, hx, hy, hr) -> bool:
    """True when segment pq passes strictly inside the circle."""
    px, py = p
    dx, dy = q[0] - px, q[1] - py
    cx, cy = hx - px, hy - py
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        d2 = cx * cx + cy * cy
    else:
        t = (cx * dx + cy * dy) / seg2
        t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
        ex, ey = cx - t * dx, cy - t * dy
        d2 = ex * ex + ey * ey
    lim = hr - _EPS
    return d2 < lim * lim


def _segment_clear(p, q, holes, skip=()) -> bool:
    for i, (hx, hy, hr) in enumerate(holes):
        if i in skip:
            continue
        if _segment_blocked_by(p, q, hx, hy, hr):
            return False
    return True


def _point_tangents(u, hx, hy, hr):
    """Tangent-point angles on the circle as seen from an external point."""
    d = math.hypot(u[0] - hx, u[1] - hy)
    if d <= hr + _EPS:
        return None                      # on (or inside) the circle
    base = math.atan2(u[1] - hy, u[0] - hx)
    alpha = math.acos(min(1.0, hr / d))
    return (base - alpha, base + alpha)


def _circle_circle_tangents(h1, h2):
    """Tangent segments between two circles as (angle_on_1, angle_on_2).

    External tangents touch both circles at a common angle theta +/- phi_e
    with cos(phi_e) = (r1 - r2)/d; internal tangents (only for disjoint
    circles) touch at theta +/- phi_i and theta + pi +/- phi_i with
    cos(phi_i) = (r1 + r2)/d.
    """
    (x1, y1, r1), (x2, y2, r2) = h1, h2
    d = math.hypot(x2 - x1, y2 - y1)
    out = []
    if d <= _EPS:
        return out
    theta = math.atan2(y2 - y1, x2 - x1)
    ce = (r1 - r2) / d
    if abs(ce) <= 1.0:
        phi = math.acos(ce)
        out.append((theta + phi, theta + phi))
        out.append((theta - phi, theta - phi))
    ci = (r1 + r2) / d
    if ci <= 1.0:
        phi = math.acos(ci)
        out.append((theta + phi, theta + phi - math.pi))
        out.append((theta - phi, theta - phi + math.pi))
    return out


def _on_circle(angle, hx, hy, hr):
    return (hx + hr * math.cos(angle), hy + hr * math.sin(angle))


@lru_cache(maxsize=32)
def _static_tangent_segments(geom: PlateGeometry):
    """Validated circle-to-circle tangent segments, cached per geometry."""
    holes = geom.holes
    segments = []
    for i in range(len(holes)):
        for j in range(i + 1, len(holes)):
            for ang_i, ang_j in _circle_circle_tangents(holes[i], holes[j]):
                a = _on_circle(ang_i, *holes[i])
                b = _on_circle(ang_j, *holes[j])
                if _segment_clear(a, b, holes, skip=(i, j)):
                    segments.append((i, ang_i, j, ang_j))
    overlapping = False
    for i in range(len(holes)):
        for j in range(i + 1, len(holes)):
            d = math.hypot(holes[i][0] - holes[j][0], holes[i][1] - holes[j][1])
            if d < holes[i][2] + holes[j][2]:
                overlapping = True
    return tuple(segments), overlapping


def _arc_clear(hole_idx, a0, a1, holes) -> bool:
    """Sampled strict-interior check of the arc against the other circles."""
    hx, hy, hr = holes[hole_idx]
    span = (a1 - a0) % _TWO_PI
    steps = max(2, int(span / 0.05) + 1)
    for s in range(steps + 1):
        p = _on_circle(a0 + span * s / steps, hx, hy, hr)
        for k, (ox, oy, orr) in enumerate(holes):
            if k == hole_idx:
                continue
            lim = orr - _EPS
            if (p[0] - ox) ** 2 + (p[1] - oy) ** 2 < lim * lim:
                return False
    return True


def shortest_path_length(geom: PlateGeometry, p, q) -> float:
    """Length (mm) of the shortest hole-avoiding path between two points."""
    p = (float(p[0]), float(p[1]))
    q = (float(q[0]), float(q[1]))
    require_valid_point(geom, p, what="path start")
    require_valid_point(geom, q, what="path end")
    direct = math.hypot(q[0] - p[0], q[1] - p[1])
    if _segment_clear(p, q, geom.holes):
        return direct

    holes = geom.holes
    static_segments, overlapping = _static_tangent_segments(geom)

    nodes = [p, q]
    ring = {h: [] for h in range(len(holes))}   # hole -> [(angle, node)]
    edges = {0: [], 1: []}

    def add_node(pos, hole_idx, angle):
        nodes.append(pos)
        idx = len(nodes) - 1
        edges[idx] = []
        ring[hole_idx].append((angle % _TWO_PI, idx))
        return idx

    def add_edge(i, j, w):
        edges[i].append((j, w))
        edges[j].append((i, w))

    # Tangents from the endpoints to every circle.
    for e, u in enumerate((p, q)):
        for h, (hx, hy, hr) in enumerate(holes):
            tangents = _point_tangents(u, hx, hy, hr)
            if tangents is None:
                # Endpoint sits on this circle: it joins the ring directly.
                ring[h].append((math.atan2(u[1] - hy, u[0] - hx) % _TWO_PI, e))
                continue
            for ang in tangents:
                t = _on_circle(ang, hx, hy, hr)
                if _segment_clear(u, t, holes, skip=(h,)):
                    idx = add_node(t, h, ang)
                    add_edge(e, idx, math.hypot(t[0] - u[0], t[1] - u[1]))

    # Circle-to-circle tangent segments (pre-validated per geometry).
    for i, ang_i, j, ang_j in static_segments:
        a = _on_circle(ang_i, *holes[i])
        b = _on_circle(ang_j, *holes[j])
        ia = add_node(a, i, ang_i)
        ib = add_node(b, j, ang_j)
        add_edge(ia, ib, math.hypot(b[0] - a[0], b[1] - a[1]))

    # Arcs between angularly adjacent nodes on each circle.
    for h, members in ring.items():
        if len(members) < 2:
            continue
        members.sort()
        hr = holes[h][2]
        for k in range(len(members)):
            a0, i0 = members[k]
            a1, i1 = members[(k + 1) % len(members)]
            if i0 == i1:
                continue
            span = (a1 - a0) % _TWO_PI
            if overlapping and not _arc_clear(h, a0, a1, holes):
                continue
            add_edge(i0, i1, hr * span)

    # Dijkstra from p (node 0) to q (node 1).
    dist = {0: 0.0}
    heap = [(0.0, 0)]
    while heap:
        d, i = heappop(heap)
        if i == 1:
            return d
        if d > dist.get(i, math.inf):
            continue
        for j, w in edges[i]:
            nd = d + w
            if nd < dist.get(j, math.inf):
                dist[j] = nd
                heappush(heap, (nd, j))
    raise InvalidLocationError(
        "no unobstructed path between the points (enclosed pocket)"
    )


def travel_time(geom: PlateGeometry, frm, to) -> float:
    """Shortest-path distance divided by the wave speed, in seconds."""
    return shortest_path_length(geom, frm, to) / geom.wave_speed
