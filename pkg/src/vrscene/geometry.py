"""Geometry kernel: quaternions, AABBs, transforms, frusta, coverage.

Conventions used throughout the package: right-handed, meters, +Z up,
+X east.  Quaternions are stored (w, x, y, z).  The camera looks along
its local -Z axis; local +Y is up on screen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

UNIT_TOL = 1e-6


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


# ---------------------------------------------------------------------------
# quaternions

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate one vector or an (N, 3) array of vectors by q."""
    return np.asarray(v, dtype=float) @ quat_to_matrix(q).T


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return QUAT_IDENTITY.copy()
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis / n))


def matrix_to_quat(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s,
             (m[1, 0] - m[0, 1]) / s]
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(1e-12, 1.0 + m[i, i] - m[j, j] - m[k, k])) * 2.0
        q = [0.0] * 4
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    return quat_normalize(q)


def look_rotation(forward, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera orientation looking along `forward` with `up` on screen.

    Remember the camera convention: local -Z is the view direction and
    local +Y points up on screen.
    """
    f = np.asarray(forward, dtype=float)
    f = f / np.linalg.norm(f)
    u = np.asarray(up, dtype=float)
    r = np.cross(f, u)
    n = np.linalg.norm(r)
    if n < 1e-12:
        raise ValueError("forward and up are colinear")
    r /= n
    u = np.cross(r, f)
    m = np.column_stack([r, u, -f])  # camera axes as world columns
    return matrix_to_quat(m)


def quat_slerp(a, b, u: float) -> np.ndarray:
    a = quat_normalize(a)
    b = quat_normalize(b)
    dot = float(np.dot(a, b))
    if dot < 0.0:  # shortest arc
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(a + u * (b - a))
    theta = math.acos(min(dot, 1.0))
    s = math.sin(theta)
    return (math.sin((1.0 - u) * theta) / s) * a + (math.sin(u * theta) / s) * b


# ---------------------------------------------------------------------------
# boxes and transforms


@dataclass(frozen=True)
class AABB:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise ValueError("AABB bounds must be finite")
        if np.any(self.lo > self.hi):
            raise ValueError("AABB min must not exceed max")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_extents(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def corners(self) -> np.ndarray:
        """All 8 corners, shape (8, 3)."""
        lo, hi = self.lo, self.hi
        return np.array([[x, y, z] for x in (lo[0], hi[0])
                         for y in (lo[1], hi[1])
                         for z in (lo[2], hi[2])])

    def contains_point(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def intersects(self, other: "AABB") -> bool:
        # closed-set test: boundary contact counts
        return bool(np.all(self.lo <= other.hi) and np.all(other.lo <= self.hi))

    def union(self, other: "AABB") -> "AABB":
        return AABB(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def inflated(self, margin: float) -> "AABB":
        return AABB(self.lo - margin, self.hi + margin)


def aabb_from_points(points) -> AABB:
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        raise ValueError("cannot bound an empty point set")
    return AABB(points.min(axis=0), points.max(axis=0))


@dataclass(frozen=True)
class Transform:
    translation: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float))

    @staticmethod
    def identity() -> "Transform":
        return Transform(np.zeros(3), QUAT_IDENTITY.copy(), np.ones(3))

    @staticmethod
    def from_translation(t) -> "Transform":
        return Transform(np.asarray(t, dtype=float), QUAT_IDENTITY.copy(), np.ones(3))

    def apply_points(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return quat_rotate(self.rotation, points * self.scale) + self.translation


def transform_aabb(box: AABB, t: Transform) -> AABB:
    """Exact bound of the 8 transformed corners (Arvo's method)."""
    m = quat_to_matrix(t.rotation) * t.scale  # column-scaled rotation
    center = m @ box.center + t.translation
    extent = np.abs(m) @ box.half_extents
    return AABB(center - extent, center + extent)


# ---------------------------------------------------------------------------
# planes and frusta


@dataclass(frozen=True)
class Plane:
    """Plane {p : normal . p + d = 0}; normal points into the kept half-space."""
    normal: np.ndarray
    d: float

    def __post_init__(self):
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float))

    def signed_distance(self, p) -> float:
        return float(np.dot(self.normal, p) + self.d)


@dataclass(frozen=True)
class Frustum:
    """Six planes in order: left, right, bottom, top, near, far."""
    planes: tuple

    def __post_init__(self):
        if len(self.planes) != 6:
            raise ValueError("frustum needs exactly 6 planes")

    def contains_point(self, p) -> bool:
        return all(pl.signed_distance(p) >= 0.0 for pl in self.planes)


@dataclass(frozen=True)
class CameraIntrinsics:
    vertical_fov: float  # radians
    aspect: float
    near: float
    far: float
    viewport_height: float = 1080.0

    def __post_init__(self):
        if not 0.0 < self.vertical_fov < math.pi:
            raise ValueError("vertical_fov out of range")
        if self.aspect <= 0.0 or self.near <= 0.0 or self.far <= self.near:
            raise ValueError("bad camera intrinsics")
        if self.viewport_height <= 0.0:
            raise ValueError("viewport_height must be positive")


@dataclass(frozen=True)
class CameraPose:
    position: np.ndarray
    orientation: np.ndarray  # unit quaternion, camera looks along local -Z

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=float))

    def forward(self) -> np.ndarray:
        return quat_rotate(self.orientation, vec3(0.0, 0.0, -1.0))


def view_matrix(pose: CameraPose) -> np.ndarray:
    r = quat_to_matrix(pose.orientation)
    m = np.eye(4)
    m[:3, :3] = r.T
    m[:3, 3] = -r.T @ pose.position
    return m


def projection_matrix(intr: CameraIntrinsics) -> np.ndarray:
    f = 1.0 / math.tan(0.5 * intr.vertical_fov)
    n, fa = intr.near, intr.far
    m = np.zeros((4, 4))
    m[0, 0] = f / intr.aspect
    m[1, 1] = f
    m[2, 2] = (fa + n) / (n - fa)
    m[2, 3] = 2.0 * fa * n / (n - fa)
    m[3, 2] = -1.0
    return m


def frustum_from_camera(pose: CameraPose, intr: CameraIntrinsics) -> Frustum:
    """Extract the 6 world-space planes from the clip matrix.

    Each plane comes from the sum/difference of the fourth row of
    P @ V with one of rows 1-3, then is normalized so the kept
    half-space is normal . p + d >= 0.
    """
    m = projection_matrix(intr) @ view_matrix(pose)
    rows = [
        m[3] + m[0],  # left
        m[3] - m[0],  # right
        m[3] + m[1],  # bottom
        m[3] - m[1],  # top
        m[3] + m[2],  # near
        m[3] - m[2],  # far
    ]
    planes = []
    for row in rows:
        n = np.linalg.norm(row[:3])
        planes.append(Plane(row[:3] / n, float(row[3] / n)))
    return Frustum(tuple(planes))


class Classification(Enum):
    OUTSIDE = "outside"
    INTERSECT = "intersect"
    INSIDE = "inside"


def classify_aabb_frustum(box: AABB, f: Frustum) -> Classification:
    """p-vertex / n-vertex plane test.

    Conservative: a box reported INTERSECT may actually lie outside the
    true frustum volume, but a box overlapping the volume is never
    reported OUTSIDE.
    """
    inside = True
    for plane in f.planes:
        pos = np.where(plane.normal > 0.0, box.hi, box.lo)
        if plane.signed_distance(pos) < 0.0:
            return Classification.OUTSIDE
        neg = np.where(plane.normal > 0.0, box.lo, box.hi)
        if plane.signed_distance(neg) < 0.0:
            inside = False
    return Classification.INSIDE if inside else Classification.INTERSECT


def classify_aabbs_frustum(los: np.ndarray, his: np.ndarray, f: Frustum) -> np.ndarray:
    """Vectorized form over N boxes; returns an array of Classification."""
    los = np.asarray(los, dtype=float).reshape(-1, 3)
    his = np.asarray(his, dtype=float).reshape(-1, 3)
    outside = np.zeros(len(los), dtype=bool)
    inside = np.ones(len(los), dtype=bool)
    for plane in f.planes:
        pick = plane.normal > 0.0
        pos = np.where(pick, his, los)
        neg = np.where(pick, los, his)
        dp = pos @ plane.normal + plane.d
        dn = neg @ plane.normal + plane.d
        outside |= dp < 0.0
        inside &= dn >= 0.0
    out = np.full(len(los), Classification.INTERSECT, dtype=object)
    out[inside] = Classification.INSIDE
    out[outside] = Classification.OUTSIDE  # outside wins over inside (empty overlap)
    return out


def segment_intersects_aabb(p, q, box: AABB) -> bool:
    """Closed-set slab test for the segment [p, q] against the box.

    Boundary touching counts; a degenerate segment (p == q) is a point
    membership test.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = q - p
    t0, t1 = 0.0, 1.0
    for axis in range(3):
        if d[axis] == 0.0:
            if p[axis] < box.lo[axis] or p[axis] > box.hi[axis]:
                return False
        else:
            ta = (box.lo[axis] - p[axis]) / d[axis]
            tb = (box.hi[axis] - p[axis]) / d[axis]
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
            if t0 > t1:
                return False
    return True


def segments_intersect_aabb(p: np.ndarray, q: np.ndarray, box: AABB) -> np.ndarray:
    """Vectorized slab test for N segments, shapes (N, 3) -> (N,) bool."""
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    q = np.asarray(q, dtype=float).reshape(-1, 3)
    d = q - p
    t0 = np.zeros(len(p))
    t1 = np.ones(len(p))
    ok = np.ones(len(p), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis in range(3):
            par = d[:, axis] == 0.0
            ok &= ~(par & ((p[:, axis] < box.lo[axis]) | (p[:, axis] > box.hi[axis])))
            ta = (box.lo[axis] - p[:, axis]) / d[:, axis]
            tb = (box.hi[axis] - p[:, axis]) / d[:, axis]
            lo = np.minimum(ta, tb)
            hi = np.maximum(ta, tb)
            t0 = np.where(par, t0, np.maximum(t0, lo))
            t1 = np.where(par, t1, np.minimum(t1, hi))
    return ok & (t0 <= t1)


def screen_coverage(world_radius: float, dist: float, intr: CameraIntrinsics) -> float:
    """Projected radius as a fraction of the half viewport height, in [0, 1]."""
    if world_radius < 0.0:
        raise ValueError("world_radius must be >= 0")
    denom = max(dist, intr.near) * math.tan(0.5 * intr.vertical_fov)
    return min(1.0, world_radius / denom)
