"""Reference frames, boxes, pinhole cameras and the box-comparison primitives.

Conventions:
    * Boxes carry a single yaw about +z (no roll or pitch).
    * ``RigidTransform`` maps points from ``source`` into ``target``:
      ``p_target = R @ p_source + t``.  Rotations are stored as unit
      quaternions ``(w, x, y, z)`` so serialized scenes round-trip bit for bit.
    * Camera extrinsics map ego coordinates into the camera frame (OpenCV
      axes: +x right, +y down, +z forward).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import BehindCamera, FrameMismatch, GeometryError

GLOBAL = "global"
EGO = "ego"

VIEW_NAMES = ("FRONT LEFT", "FRONT", "FRONT RIGHT", "BACK LEFT", "BACK", "BACK RIGHT")

QUAT_TOL = 1e-6
ORTHO_TOL = 1e-9


def camera_frame(j: int) -> str:
    return f"camera_{j}"


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    y = math.remainder(float(yaw), 2.0 * math.pi)
    if y <= -math.pi:
        y += 2.0 * math.pi
    return y


def quat_to_matrix(q: Sequence[float]) -> np.ndarray:
    w, x, y, z = (float(v) for v in q)
    n = math.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> tuple[float, float, float, float]:
    """Shepperd's method; returns a unit quaternion with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        w, x, y, z = 0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        w, x, y, z = (R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        w, x, y, z = (R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        w, x, y, z = (R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s
    if w < 0:
        w, x, y, z = -w, -x, -y, -z
    n = math.sqrt(w * w + x * x + y * y + z * z)
    return (w / n, x / n, y / n, z / n)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation from ``source`` frame to ``target`` frame."""

    quat: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    source: str = EGO
    target: str = GLOBAL
    rotation: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        q = tuple(float(v) for v in self.quat)
        t = tuple(float(v) for v in self.translation)
        if len(q) != 4 or len(t) != 3:
            raise GeometryError("quaternion needs 4 entries and translation 3")
        if not all(math.isfinite(v) for v in q + t):
            raise GeometryError("non-finite transform")
        norm = math.sqrt(sum(v * v for v in q))
        if abs(norm - 1.0) > QUAT_TOL:
            raise GeometryError(f"quaternion not unit (norm {norm!r})")
        object.__setattr__(self, "quat", q)
        object.__setattr__(self, "translation", t)
        R = quat_to_matrix(q)
        R.setflags(write=False)
        object.__setattr__(self, "rotation", R)

    @classmethod
    def from_matrix(cls, R, t, source: str = EGO, target: str = GLOBAL) -> "RigidTransform":
        R = np.asarray(R, dtype=float)
        if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=ORTHO_TOL, rtol=0):
            raise GeometryError("rotation matrix is not orthonormal")
        if np.linalg.det(R) < 0:
            raise GeometryError("rotation matrix is a reflection")
        return cls(matrix_to_quat(R), tuple(np.asarray(t, dtype=float)), source, target)

    @classmethod
    def from_yaw(cls, yaw: float, t=(0.0, 0.0, 0.0), source: str = EGO, target: str = GLOBAL) -> "RigidTransform":
        h = 0.5 * yaw
        return cls((math.cos(h), 0.0, 0.0, math.sin(h)), tuple(t), source, target)

    @classmethod
    def identity(cls, source: str = EGO, target: str = GLOBAL) -> "RigidTransform":
        return cls(source=source, target=target)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.translation)

    @property
    def matrix(self) -> np.ndarray:
        """4x4 homogeneous form."""
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, points) -> np.ndarray:
        """Map points of shape (3,) or (N, 3) from source into target."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.t

    def apply_vector(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.rotation.T

    def inverse(self) -> "RigidTransform":
        w, x, y, z = self.quat
        q_inv = (w, -x, -y, -z)
        t_inv = -(self.rotation.T @ self.t)
        return RigidTransform(q_inv, tuple(t_inv), self.target, self.source)

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """``self ∘ inner``: apply ``inner`` first, then ``self``."""
        if inner.target != self.source:
            raise FrameMismatch(f"cannot compose {inner.target} -> {self.source}")
        R = self.rotation @ inner.rotation
        t = self.rotation @ inner.t + self.t
        return RigidTransform.from_matrix(R, t, inner.source, self.target)


@dataclass(frozen=True)
class Box3D:
    """Yaw-only 3D box: center, full extents, heading about +z.

    Extents are not rejected at construction so malformed annotations can be
    loaded and reported by ``validate_sample``; use ``is_valid`` to check.
    """

    cx: float
    cy: float
    cz: float
    lx: float
    ly: float
    lz: float
    yaw: float = 0.0
    velocity: Optional[tuple[float, float]] = None
    attribute: Optional[str] = None
    frame: str = GLOBAL

    def __post_init__(self):
        for name in ("cx", "cy", "cz", "lx", "ly", "lz", "yaw"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))
        if self.velocity is not None:
            vx, vy = self.velocity
            object.__setattr__(self, "velocity", (float(vx), float(vy)))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz])

    @property
    def extents(self) -> np.ndarray:
        return np.array([self.lx, self.ly, self.lz])

    @property
    def volume(self) -> float:
        return self.lx * self.ly * self.lz

    def is_valid(self) -> bool:
        vals = (self.cx, self.cy, self.cz, self.lx, self.ly, self.lz, self.yaw)
        return all(math.isfinite(v) for v in vals) and min(self.lx, self.ly, self.lz) > 0

    def as_vector(self) -> np.ndarray:
        """(cx, cy, cz, lx, ly, lz, yaw)."""
        return np.array([self.cx, self.cy, self.cz, self.lx, self.ly, self.lz, self.yaw])

    def replace(self, **changes) -> "Box3D":
        return replace(self, **changes)


@dataclass(frozen=True)
class CameraView:
    """One pinhole camera of the 6-camera rig.

    Args:
        j: view index, 0..5 in ``VIEW_NAMES`` order.
        intrinsics: 3x3 pixel matrix.
        extrinsics: camera <- ego transform.
        width, height: image size in pixels.
    """

    j: int
    intrinsics: np.ndarray
    extrinsics: RigidTransform
    width: int
    height: int

    def __post_init__(self):
        K = np.array(self.intrinsics, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(K)):
            raise GeometryError("intrinsics contain non-finite values")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (K[2, 0] == 0 and K[2, 1] == 0 and K[2, 2] == 1 and K[1, 0] == 0):
            raise GeometryError("intrinsics must be upper triangular with K[2, 2] = 1")
        R = self.extrinsics.rotation
        if not np.allclose(R.T @ R, np.eye(3), atol=ORTHO_TOL, rtol=0):
            raise GeometryError("extrinsic rotation is not orthonormal")
        if not 0 <= int(self.j) < len(VIEW_NAMES):
            raise GeometryError(f"view index {self.j} outside 0..5")
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise GeometryError("image size must be positive")
        K.setflags(write=False)
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "j", int(self.j))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def name(self) -> str:
        return VIEW_NAMES[self.j]

    def __eq__(self, other):
        if not isinstance(other, CameraView):
            return NotImplemented
        return (
            self.j == other.j
            and np.array_equal(self.intrinsics, other.intrinsics)
            and self.extrinsics == other.extrinsics
            and self.width == other.width
            and self.height == other.height
        )

    __hash__ = None


@dataclass(frozen=True)
class SpaceRange:
    """Axis-aligned detection volume in meters."""

    x_min: float = -51.2
    x_max: float = 51.2
    y_min: float = -51.2
    y_max: float = 51.2
    z_min: float = -5.0
    z_max: float = 5.0

    def __post_init__(self):
        for lo, hi in self.bounds():
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise GeometryError(f"invalid range [{lo}, {hi}]")

    def bounds(self) -> tuple[tuple[float, float], ...]:
        return ((self.x_min, self.x_max), (self.y_min, self.y_max), (self.z_min, self.z_max))

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.z_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.z_max])

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))


def project_point(p, view: CameraView) -> tuple[float, float, float]:
    """Project a camera-frame point to ``(u, v, depth)``."""
    p = np.asarray(p, dtype=float)
    if not p[2] > 0:
        raise BehindCamera(f"point depth {p[2]} is not in front of the camera")
    uvw = view.intrinsics @ p
    return float(uvw[0] / uvw[2]), float(uvw[1] / uvw[2]), float(p[2])


def unproject_point(u: float, v: float, depth: float, view: CameraView) -> np.ndarray:
    """Inverse of ``project_point``."""
    if not depth > 0:
        raise BehindCamera(f"depth {depth} is not in front of the camera")
    ray = np.linalg.solve(view.intrinsics, np.array([u, v, 1.0]))
    return ray * (depth / ray[2])


def transform_box(b: Box3D, T: RigidTransform) -> Box3D:
    """Move a box into ``T.target``; extents are unchanged.

    The new yaw is the heading of the rotated forward vector projected onto
    the ground plane, which is exact for rotations about z.
    """
    if b.frame != T.source:
        raise FrameMismatch(f"box is in {b.frame!r}, transform expects {T.source!r}")
    c = T.apply(b.center)
    heading = T.rotation @ np.array([math.cos(b.yaw), math.sin(b.yaw), 0.0])
    yaw = math.atan2(heading[1], heading[0])
    vel = b.velocity
    if vel is not None:
        v = T.rotation @ np.array([vel[0], vel[1], 0.0])
        vel = (float(v[0]), float(v[1]))
    return replace(b, cx=c[0], cy=c[1], cz=c[2], yaw=yaw, velocity=vel, frame=T.target)


def _same_frame(a: Box3D, b: Box3D) -> None:
    if a.frame != b.frame:
        raise FrameMismatch(f"{a.frame!r} vs {b.frame!r}")


def center_distance(a: Box3D, b: Box3D) -> float:
    """Ground-plane (x, y) distance between box centers."""
    _same_frame(a, b)
    return math.hypot(a.cx - b.cx, a.cy - b.cy)


def aligned_iou3d(a: Box3D, b: Box3D) -> float:
    """3D IoU after moving both boxes to a common center and heading."""
    inter = min(a.lx, b.lx) * min(a.ly, b.ly) * min(a.lz, b.lz)
    union = a.volume + b.volume - inter
    return inter / union


def yaw_diff(a: float, b: float) -> float:
    """Smallest absolute angle between two headings, in [0, pi]."""
    d = math.fmod(abs(float(a) - float(b)), 2.0 * math.pi)
    return min(d, 2.0 * math.pi - d)
