"""Convex support polygons as half-plane lists ``A r <= b``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull


@dataclass(frozen=True)
class Polygon:
    A: np.ndarray  # (m, 2) outward unit normals
    b: np.ndarray  # (m,)

    def contains(self, r, tol: float = 1e-6) -> bool:
        return bool(np.all(self.A @ np.asarray(r, dtype=float) <= self.b + tol))

    def violation(self, r) -> float:
        """Largest half-plane violation (negative inside)."""
        return float(np.max(self.A @ np.asarray(r, dtype=float) - self.b))

    @property
    def vertices(self) -> np.ndarray:
        """Vertices in counter-clockwise order, from consecutive half-plane intersections."""
        ang = np.arctan2(self.A[:, 1], self.A[:, 0])
        order = np.argsort(ang)
        A, b = self.A[order], self.b[order]
        out = []
        for i in range(len(b)):
            j = (i + 1) % len(b)
            out.append(np.linalg.solve(A[[i, j]], b[[i, j]]))
        return np.array(out)

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def is_nonempty(self) -> bool:
        """True when a strictly interior point exists."""
        return self.violation(self.centroid()) < 0

    def project(self, r) -> np.ndarray:
        """Closest point of the polygon to ``r``."""
        r = np.asarray(r, dtype=float)
        if self.contains(r, 0.0):
            return r.copy()
        best, dist = None, np.inf
        V = self.vertices
        for i in range(len(V)):
            a, c = V[i], V[(i + 1) % len(V)]
            d = c - a
            s = np.clip((r - a) @ d / (d @ d), 0.0, 1.0)
            p = a + s * d
            dd = np.linalg.norm(r - p)
            if dd < dist:
                best, dist = p, dd
        return best


def from_points(points) -> Polygon:
    """Convex hull of a point set."""
    hull = ConvexHull(np.asarray(points, dtype=float))
    eq = hull.equations  # n . x + c <= 0 inside
    return Polygon(eq[:, :2].copy(), -eq[:, 2].copy())


def foot_corners(x: float, y: float, yaw: float, length: float, width: float, margin: float = 0.0) -> np.ndarray:
    hl, hw = length / 2 - margin, width / 2 - margin
    if hl <= 0 or hw <= 0:
        raise ValueError("polygon margin leaves an empty foot rectangle")
    c, s = np.cos(yaw), np.sin(yaw)
    R = np.array([[c, -s], [s, c]])
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    return local @ R.T + [x, y]


def support_polygon(feet, length: float, width: float, margin: float = 0.0) -> Polygon:
    """Hull of the foot rectangles in contact; ``feet`` is a list of (x, y, yaw)."""
    pts = np.vstack([foot_corners(*f, length, width, margin) for f in feet])
    return from_points(pts)
