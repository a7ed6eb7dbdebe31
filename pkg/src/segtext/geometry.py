"""Convex polygon primitives: shoelace area, clipping, intersection.

Vertices are (x, y) pairs. Signed area follows the shoelace convention, so
"counter-clockwise" means positive signed area in a y-up frame; polygons
read from y-down image annotations are reoriented on construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def shoelace_area(vertices) -> float:
    """Signed area; positive for counter-clockwise vertex order."""
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class ConvexPoly:
    """Convex polygon stored counter-clockwise with positive area."""

    vertices: tuple

    def __init__(self, vertices):
        verts = [(float(x), float(y)) for x, y in vertices]
        if len(verts) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        area = shoelace_area(verts)
        if area < 0:
            verts = verts[::-1]
            area = -area
        if area <= 1e-12:
            raise ValueError("degenerate polygon (area ~ 0)")
        n = len(verts)
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            cx, cy = verts[(i + 2) % n]
            cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if cross < -1e-9 * max(1.0, area):
                raise ValueError("polygon is not convex")
        object.__setattr__(self, "vertices", tuple(verts))

    @property
    def area(self) -> float:
        return shoelace_area(self.vertices)


def clip_convex(subject, clip):
    """Sutherland-Hodgman clip of `subject` by convex `clip` (CCW).

    Points exactly on a clip edge count as inside. Returns vertex list,
    possibly empty, possibly with collinear points (harmless for area).
    """
    output = [(float(x), float(y)) for x, y in subject]
    cl = [(float(x), float(y)) for x, y in clip]
    n = len(cl)
    for i in range(n):
        if not output:
            return []
        ex, ey = cl[i]
        fx, fy = cl[(i + 1) % n]

        def side(p):
            return (fx - ex) * (p[1] - ey) - (fy - ey) * (p[0] - ex)

        inputs = output
        output = []
        prev = inputs[-1]
        prev_side = side(prev)
        for cur in inputs:
            cur_side = side(cur)
            if cur_side >= 0:
                if prev_side < 0:
                    output.append(_edge_cross(prev, cur, prev_side, cur_side))
                output.append(cur)
            elif prev_side >= 0:
                output.append(_edge_cross(prev, cur, prev_side, cur_side))
            prev, prev_side = cur, cur_side
    return output


def _edge_cross(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _as_ccw_vertices(poly):
    if isinstance(poly, ConvexPoly):
        return list(poly.vertices)
    verts = [(float(x), float(y)) for x, y in poly]
    if shoelace_area(verts) < 0:
        verts = verts[::-1]
    return verts


def poly_intersection_area(a, b) -> float:
    """Exact intersection area of two convex polygons."""
    va = _as_ccw_vertices(a)
    vb = _as_ccw_vertices(b)
    clipped = clip_convex(va, vb)
    if len(clipped) < 3:
        return 0.0
    return abs(shoelace_area(clipped))


def poly_iou(a, b) -> float:
    inter = poly_intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    area_a = abs(shoelace_area(_as_ccw_vertices(a)))
    area_b = abs(shoelace_area(_as_ccw_vertices(b)))
    return inter / (area_a + area_b - inter)


def rect_corners(cx, cy, w, h, theta):
    """Corners of an oriented rectangle, counter-clockwise in a y-up frame."""
    u = (np.cos(theta) * w / 2.0, np.sin(theta) * w / 2.0)
    v = (-np.sin(theta) * h / 2.0, np.cos(theta) * h / 2.0)
    return (
        (cx - u[0] - v[0], cy - u[1] - v[1]),
        (cx + u[0] - v[0], cy + u[1] - v[1]),
        (cx + u[0] + v[0], cy + u[1] + v[1]),
        (cx - u[0] + v[0], cy - u[1] + v[1]),
    )
