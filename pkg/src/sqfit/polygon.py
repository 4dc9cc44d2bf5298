"""Convex polygon machinery: hulls, Sutherland-Hodgman clipping, area, IOU, sampling.

Polygons are counter-clockwise in the (x, y) coordinates they are given in.
For image pixels (y down) "counter-clockwise" refers to the math orientation
of the raw coordinates, i.e. positive signed area.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .errors import DegenerateInput


@dataclass(eq=False)
class ConvexPolygon:
    vertices: np.ndarray  # (k, 2), counter-clockwise

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 2)

    def __len__(self):
        return len(self.vertices)

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    def contains(self, pts, tol: float = 1e-9) -> np.ndarray:
        return points_in_convex(self.vertices, pts, tol)

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def signed_area(v: np.ndarray) -> float:
    return float(_k.signed_area(np.ascontiguousarray(v, dtype=float)))


def convex_hull(points) -> ConvexPolygon:
    """Counter-clockwise convex hull (Andrew's monotone chain) with collinear pruning."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise DegenerateInput("need at least 3 points")
    span = pts.max(axis=0) - pts.min(axis=0)
    diag2 = float(span @ span)
    if diag2 == 0.0:
        raise DegenerateInput("all points coincide")
    tol = 1e-12 * diag2
    pts = np.ascontiguousarray(pts)
    if len(pts) > 256:
        pts = _k.prefilter(pts, 16)
    v = _k.monotone_chain(pts, tol)
    if len(v) < 3 or signed_area(v) <= tol:
        raise DegenerateInput("points are collinear")
    return ConvexPolygon(v)


def points_in_convex(vertices: np.ndarray, pts, tol: float = 1e-9) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    e0 = vertices
    edge = np.roll(vertices, -1, axis=0) - e0
    rel_x = pts[:, 0:1] - e0[:, 0]
    rel_y = pts[:, 1:2] - e0[:, 1]
    cross = edge[:, 0] * rel_y - edge[:, 1] * rel_x
    lens = np.hypot(edge[:, 0], edge[:, 1])
    return np.all(cross >= -tol * np.maximum(lens, 1.0), axis=1)


def intersect(a: ConvexPolygon, b: ConvexPolygon) -> ConvexPolygon | None:
    """Intersection of two convex polygons, or ``None`` when it has no area."""
    subj, clip = (a.vertices, b.vertices) if len(a) >= len(b) else (b.vertices, a.vertices)
    v = _k.clip_convex(subj, clip)
    if len(v) < 3 or signed_area(v) <= 0.0:
        return None
    return ConvexPolygon(v)


def iou(a: ConvexPolygon, b: ConvexPolygon) -> float:
    if a is b:
        return 1.0
    return float(_k.convex_iou(a.vertices, b.vertices))


def sample_interior(poly: ConvexPolygon, n: int, seed=None) -> np.ndarray:
    """``n`` points uniform over the polygon interior by bounding-box rejection."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lo, hi = poly.bounds()
    box_area = float(np.prod(hi - lo))
    accept = max(poly.area / box_area, 1e-3) if box_area > 0 else 1.0
    out = []
    have = 0
    while have < n:
        batch = int(1.2 * (n - have) / accept) + 8
        pts = lo + rng.random((batch, 2)) * (hi - lo)
        pts = pts[poly.contains(pts, tol=0.0)]
        out.append(pts)
        have += len(pts)
    return np.concatenate(out)[:n]


def centroid(poly: ConvexPolygon) -> np.ndarray:
    """Area centroid."""
    v = poly.vertices
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    A = 0.5 * cr.sum()
    return np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6.0 * A)
