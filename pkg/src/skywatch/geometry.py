"""Planar projective geometry: homographies, polygons, polylines.

Everything here is a pure function of immutable values. Angles are radians
in (-pi, pi], CCW positive, 0 along +x; distances are meters on the ground
plane and pixels on the image plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

TAU = 2.0 * math.pi


class TooFewPoints(ValueError):
    """Fewer point correspondences than a homography needs (4)."""


class DegenerateConfiguration(ValueError):
    """Correspondences do not determine a unique homography."""


class AtInfinity(ValueError):
    """Projective map sent the point to the line at infinity."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(theta, TAU)
    if wrapped <= -math.pi:
        wrapped += TAU
    return wrapped


@dataclass(frozen=True)
class Homography:
    """3x3 projective map between the ground plane and the image plane.

    Normalized so m[2][2] == 1; construction rejects singular matrices.
    """

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        if abs(m[2, 2]) < 1e-12:
            raise DegenerateConfiguration("m[2][2] is zero; cannot normalize")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-12:
            raise DegenerateConfiguration("homography matrix is singular")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))


class HomographyFit(NamedTuple):
    h: Homography
    rms_px: float


def _normalize_for_dlt(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hartley isotropic normalization: centroid to origin, mean norm sqrt(2).

    Returns (normalized Nx2 points, 3x3 similarity T with normalized = T @ pt).
    """
    centroid = pts.mean(axis=0)
    shifted = pts - centroid
    mean_dist = np.sqrt((shifted**2).sum(axis=1)).mean()
    scale = math.sqrt(2.0) / mean_dist if mean_dist > 1e-12 else 1.0
    t = np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )
    return shifted * scale, t


def homography_from_points(
    pairs: Sequence[tuple[Sequence[float], Sequence[float]]],
) -> HomographyFit:
    """Estimate the ground->image homography from point correspondences.

    Direct linear transform on Hartley-normalized points; the solution is
    the smallest right singular vector of the design matrix. Returns the
    fitted homography together with the reprojection RMS in pixels.

    Raises:
        TooFewPoints: fewer than 4 correspondences.
        DegenerateConfiguration: correspondences are rank-deficient
            (e.g. collinear ground points).
    """
    if len(pairs) < 4:
        raise TooFewPoints(f"need at least 4 correspondences, got {len(pairs)}")
    ground = np.asarray([p[0] for p in pairs], dtype=float)
    image = np.asarray([p[1] for p in pairs], dtype=float)
    gn, tg = _normalize_for_dlt(ground)
    im, ti = _normalize_for_dlt(image)

    n = len(pairs)
    a = np.zeros((2 * n, 9))
    for i in range(n):
        x, y = gn[i]
        u, v = im[i]
        a[2 * i] = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]
        a[2 * i + 1] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]

    _, s, vt = np.linalg.svd(a)
    # The smallest singular value is the solution direction (zero for exact
    # data); rank-deficiency shows up in the second-smallest.
    if s[7] / s[0] < 1e-10:
        raise DegenerateConfiguration(
            "design matrix rank-deficient: correspondences do not determine H"
        )
    h_norm = vt[-1].reshape(3, 3)
    h_mat = np.linalg.inv(ti) @ h_norm @ tg
    h = Homography(h_mat)

    reproj = project_points(h, ground)
    rms = float(np.sqrt(((reproj - image) ** 2).sum(axis=1).mean()))
    return HomographyFit(h, rms)


def project(h: Homography, ground_pt: Sequence[float]) -> tuple[float, float]:
    """Map a ground point to the image plane.

    Raises AtInfinity if the point maps to the line at infinity.
    """
    x, y = float(ground_pt[0]), float(ground_pt[1])
    v = h.m @ (x, y, 1.0)
    if abs(v[2]) < 1e-12:
        raise AtInfinity(f"point ({x}, {y}) maps to infinity")
    return float(v[0] / v[2]), float(v[1] / v[2])


def unproject(h: Homography, image_pt: Sequence[float]) -> tuple[float, float]:
    """Map an image point back to the ground plane (inverse of project)."""
    return project(h.inverse(), image_pt)


def project_points(h: Homography, pts: np.ndarray) -> np.ndarray:
    """Vectorized project for an (N, 2) array; infinite points become NaN."""
    pts = np.asarray(pts, dtype=float)
    homo = np.column_stack([pts, np.ones(len(pts))])
    out = homo @ h.m.T
    w = out[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        result = out[:, :2] / w[:, None]
    result[np.abs(w) < 1e-12] = np.nan
    return result


def unproject_points(h: Homography, pts: np.ndarray) -> np.ndarray:
    return project_points(h.inverse(), pts)


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment_colinear(a, b, p) -> bool:
    return (
        min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
    )


def _segments_touch(p1, p2, q1, q2) -> bool:
    """True when closed segments share any point (cross, touch, or overlap)."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    if d1 == 0 and _on_segment_colinear(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment_colinear(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment_colinear(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment_colinear(p1, p2, q2):
        return True
    return False


@dataclass(frozen=True)
class Polygon:
    """Simple polygon on the ground plane, vertices in meters."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("polygon needs >= 3 (x, y) vertices")
        n = len(v)
        for i in range(n):
            for j in range(i + 1, n):
                if (j + 1) % n == i or (i + 1) % n == j:
                    continue  # adjacent edges share a vertex
                if _segments_touch(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise ValueError("polygon is self-intersecting")
        area2 = 0.0
        for i in range(n):
            j = (i + 1) % n
            area2 += v[i, 0] * v[j, 1] - v[j, 0] * v[i, 1]
        if abs(area2) <= 2e-9:
            raise ValueError("polygon area is zero")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def signed_area(self) -> float:
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def centroid(self) -> tuple[float, float]:
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        cross = x * np.roll(y, -1) - np.roll(x, -1) * y
        a = cross.sum() / 2.0
        cx = float(((x + np.roll(x, -1)) * cross).sum() / (6.0 * a))
        cy = float(((y + np.roll(y, -1)) * cross).sum() / (6.0 * a))
        return cx, cy

    def is_convex(self) -> bool:
        v = self.vertices
        n = len(v)
        sign = 0.0
        for i in range(n):
            a, b, c = v[i], v[(i + 1) % n], v[(i + 2) % n]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if abs(cross) < 1e-12:
                continue
            if sign == 0.0:
                sign = math.copysign(1.0, cross)
            elif math.copysign(1.0, cross) != sign:
                return False
        return True

    def edges(self):
        v = self.vertices
        for i in range(len(v)):
            yield v[i], v[(i + 1) % len(v)]


def _point_on_segment(pt, a, b, tol=1e-12) -> bool:
    cross = (b[0] - a[0]) * (pt[1] - a[1]) - (b[1] - a[1]) * (pt[0] - a[0])
    seg_len = math.hypot(b[0] - a[0], b[1] - a[1])
    if abs(cross) > tol * max(seg_len, 1.0):
        return False
    dot = (pt[0] - a[0]) * (b[0] - a[0]) + (pt[1] - a[1]) * (b[1] - a[1])
    return -tol <= dot <= seg_len * seg_len + tol


def point_in_polygon(poly: Polygon, pt: Sequence[float]) -> bool:
    """Non-zero winding test; points exactly on an edge count as inside."""
    x, y = float(pt[0]), float(pt[1])
    for a, b in poly.edges():
        if _point_on_segment((x, y), a, b):
            return True
    winding = 0
    for a, b in poly.edges():
        if a[1] <= y:
            if b[1] > y:
                if (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]) > 0:
                    winding += 1
        elif b[1] <= y:
            if (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]) < 0:
                winding -= 1
    return winding != 0


def _point_segment_distance(pt, a, b) -> tuple[float, float]:
    """Distance from pt to segment ab and the clamped parameter t in [0, 1]."""
    ax, ay = a
    dx, dy = b[0] - a[0], b[1] - a[1]
    seg2 = dx * dx + dy * dy
    t = ((pt[0] - ax) * dx + (pt[1] - ay) * dy) / seg2
    t = min(1.0, max(0.0, t))
    cx, cy = ax + t * dx, ay + t * dy
    return math.hypot(pt[0] - cx, pt[1] - cy), t


def distance_to_boundary(poly: Polygon, pt: Sequence[float]) -> float:
    """Euclidean distance from a point to the polygon's boundary."""
    p = (float(pt[0]), float(pt[1]))
    return min(_point_segment_distance(p, a, b)[0] for a, b in poly.edges())


def reflect_heading(theta: float, phi: float) -> float:
    """Specular reflection of heading theta about an edge of direction phi."""
    return wrap_angle(2.0 * phi - theta)


@dataclass(frozen=True)
class Polyline:
    """Open polyline with cumulative arc lengths, points in meters."""

    points: np.ndarray
    cumlen: np.ndarray = field(init=False)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2 or len(p) < 2:
            raise ValueError("polyline needs >= 2 (x, y) points")
        seg = np.sqrt(((p[1:] - p[:-1]) ** 2).sum(axis=1))
        if np.any(seg <= 1e-9):
            raise ValueError("polyline has coincident consecutive points")
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        p.setflags(write=False)
        cum.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "cumlen", cum)

    @property
    def total_length(self) -> float:
        return float(self.cumlen[-1])

    def point_at(self, s: float) -> tuple[float, float]:
        """Point at arc length s, clamped to the ends."""
        s = min(max(s, 0.0), self.total_length)
        i = int(np.searchsorted(self.cumlen, s, side="right")) - 1
        i = min(i, len(self.points) - 2)
        seg_len = self.cumlen[i + 1] - self.cumlen[i]
        t = (s - self.cumlen[i]) / seg_len
        a, b = self.points[i], self.points[i + 1]
        return float(a[0] + t * (b[0] - a[0])), float(a[1] + t * (b[1] - a[1]))


def project_onto_polyline(
    path: Polyline, pt: Sequence[float]
) -> tuple[float, float]:
    """Arc length of the closest path point and the signed lateral offset.

    The offset's magnitude is the Euclidean distance to the path; its sign
    is positive when pt lies left of the local path direction. Ties between
    segments go to the smaller arc length.
    """
    p = (float(pt[0]), float(pt[1]))
    best = None  # (distance, s, segment index)
    pts = path.points
    for i in range(len(pts) - 1):
        dist, t = _point_segment_distance(p, pts[i], pts[i + 1])
        if best is None or dist < best[0] - 1e-15:
            seg_len = path.cumlen[i + 1] - path.cumlen[i]
            best = (dist, float(path.cumlen[i] + t * seg_len), i)
    dist, s, i = best
    a, b = pts[i], pts[i + 1]
    seg = (b[0] - a[0], b[1] - a[1])
    close = path.point_at(s)
    cross = seg[0] * (p[1] - close[1]) - seg[1] * (p[0] - close[0])
    sign = 1.0 if cross >= 0.0 else -1.0
    return s, sign * dist
