"""Frames, rigid transforms, pinhole projection and grid indexing.

Single-point helpers (``transform_point``, ``project_point``, ``world_to_cell``)
mirror the vectorised versions used on whole point clouds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation, Slerp


class FrameMismatchError(ValueError):
    """A transform was applied to a point expressed in the wrong frame."""


class ExtrapolationError(ValueError):
    """A pose was requested outside the time span covered by the samples."""


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float
    frame: str = "world"

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite point {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class PixelCoord:
    x: float
    y: float


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Maps points from ``source`` frame coordinates into ``target`` frame."""

    rotation: np.ndarray
    translation: np.ndarray
    source: str = "lidar"
    target: str = "world"

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9) or abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls, source: str = "lidar", target: str = "world") -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3), source, target)

    @classmethod
    def from_quaternion(cls, q_wxyz: Sequence[float], translation: Sequence[float],
                        source: str = "lidar", target: str = "world") -> "RigidTransform":
        qw, qx, qy, qz = q_wxyz
        norm = math.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"quaternion is not unit length (|q| = {norm})")
        rot = Rotation.from_quat([qx, qy, qz, qw]).as_matrix()
        return cls(_orthonormalize(rot), np.asarray(translation, float), source, target)

    @classmethod
    def from_yaw(cls, yaw: float, translation: Sequence[float],
                 source: str = "lidar", target: str = "world") -> "RigidTransform":
        c, s = math.cos(yaw), math.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(rot, np.asarray(translation, float), source, target)

    def quaternion(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z) with non-negative w."""
        x, y, z, w = Rotation.from_matrix(self.rotation).as_quat()
        q = np.array([w, x, y, z])
        return -q if q[0] < 0 else q

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation, self.target, self.source)

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """``self ∘ inner``: first apply ``inner``, then ``self``."""
        if inner.target != self.source:
            raise FrameMismatchError(f"cannot compose {inner.source}->{inner.target} with {self.source}->{self.target}")
        return RigidTransform(self.rotation @ inner.rotation,
                              self.rotation @ inner.translation + self.translation,
                              inner.source, self.target)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array of points (no frame check)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return pts @ self.rotation.T + self.translation

    def as_matrix(self) -> np.ndarray:
        h = np.eye(4)
        h[:3, :3] = self.rotation
        h[:3, 3] = self.translation
        return h


def _orthonormalize(rot: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(rot)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class GridSpec:
    """Regular 2D grid; cell (col, row) spans [origin + i*cell, origin + (i+1)*cell)."""

    origin_x: float
    origin_y: float
    cell_size: float
    n_cols: int
    n_rows: int

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.n_cols < 1 or self.n_rows < 1:
            raise ValueError("grid needs at least one row and one column")

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape used for per-cell rasters: (n_rows, n_cols)."""
        return (self.n_rows, self.n_cols)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World x and y of every cell center, each shaped (n_rows, n_cols)."""
        xs = self.origin_x + (np.arange(self.n_cols) + 0.5) * self.cell_size
        ys = self.origin_y + (np.arange(self.n_rows) + 0.5) * self.cell_size
        return np.meshgrid(xs, ys)

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        return (self.origin_x + (col + 0.5) * self.cell_size,
                self.origin_y + (row + 0.5) * self.cell_size)

    def to_dict(self) -> dict:
        return {"origin": [self.origin_x, self.origin_y], "cell_size": self.cell_size,
                "n_cols": self.n_cols, "n_rows": self.n_rows}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        ox, oy = d["origin"]
        return cls(float(ox), float(oy), float(d["cell_size"]), int(d["n_cols"]), int(d["n_rows"]))


def transform_point(p: Point3, t: RigidTransform) -> Point3:
    if p.frame != t.source:
        raise FrameMismatchError(f"point is in frame {p.frame!r}, transform expects {t.source!r}")
    x, y, z = t.rotation @ p.as_array() + t.translation
    return Point3(float(x), float(y), float(z), t.target)


def project_point(p_cam: Point3, k: CameraIntrinsics) -> tuple[PixelCoord, float] | None:
    """Pinhole projection; ``None`` when the point is not in front of the camera."""
    if p_cam.z <= 0:
        return None
    return PixelCoord(k.fx * p_cam.x / p_cam.z + k.cx, k.fy * p_cam.y / p_cam.z + k.cy), p_cam.z


def project_points(points_cam: np.ndarray, k: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised projection of (N, 3) camera-frame points.

    Returns pixel coordinates (N, 2), depths (N,) and a mask of points with
    positive depth. Pixels of points behind the camera are NaN.
    """
    pts = np.asarray(points_cam, dtype=float).reshape(-1, 3)
    depth = pts[:, 2]
    front = depth > 0
    uv = np.full((len(pts), 2), np.nan)
    z = depth[front]
    uv[front, 0] = k.fx * pts[front, 0] / z + k.cx
    uv[front, 1] = k.fy * pts[front, 1] / z + k.cy
    return uv, depth, front


def back_project(px: PixelCoord, depth: float, k: CameraIntrinsics) -> Point3:
    return Point3((px.x - k.cx) * depth / k.fx, (px.y - k.cy) * depth / k.fy, depth, "camera")


def in_image(px: PixelCoord, k: CameraIntrinsics) -> bool:
    return 0 <= px.x < k.width and 0 <= px.y < k.height


def in_image_mask(uv: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    u, v = uv[:, 0], uv[:, 1]
    with np.errstate(invalid="ignore"):
        return (u >= 0) & (u < k.width) & (v >= 0) & (v < k.height)


def pixel_index(uv: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Round in-image pixel coordinates to the nearest integer pixel (N, 2) int array."""
    idx = np.floor(uv + 0.5).astype(np.int64)
    idx[:, 0] = np.clip(idx[:, 0], 0, k.width - 1)
    idx[:, 1] = np.clip(idx[:, 1], 0, k.height - 1)
    return idx


def world_to_cell(p_world: Point3, g: GridSpec) -> tuple[int, int] | None:
    """(col, row) of the cell containing the point's horizontal position, or None."""
    col = math.floor((p_world.x - g.origin_x) / g.cell_size)
    row = math.floor((p_world.y - g.origin_y) / g.cell_size)
    if 0 <= col < g.n_cols and 0 <= row < g.n_rows:
        return col, row
    return None


def world_to_cells(xy: np.ndarray, g: GridSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised ``world_to_cell`` on (N, >=2) arrays: cols, rows, inside-grid mask."""
    xy = np.asarray(xy, dtype=float)
    cols = np.floor((xy[:, 0] - g.origin_x) / g.cell_size).astype(np.int64)
    rows = np.floor((xy[:, 1] - g.origin_y) / g.cell_size).astype(np.int64)
    inside = (cols >= 0) & (cols < g.n_cols) & (rows >= 0) & (rows < g.n_rows)
    return cols, rows, inside


@dataclass(frozen=True)
class PoseSample:
    timestamp_us: int
    transform: RigidTransform


@dataclass
class PoseSequence:
    """Time-ordered world-from-LiDAR poses with interpolation between samples."""

    samples: list[PoseSample] = field(default_factory=list)

    def __post_init__(self):
        ts = [s.timestamp_us for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("pose timestamps must be strictly increasing")
        self._times = np.array(ts, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.samples)

    def at(self, timestamp_us: int) -> RigidTransform:
        return interpolate_pose(self, timestamp_us)


def interpolate_pose(poses: PoseSequence, timestamp_us: int) -> RigidTransform:
    """Linear translation and slerp rotation between the bracketing samples."""
    if not poses.samples:
        raise ExtrapolationError("no pose samples")
    times = poses._times
    if timestamp_us < times[0] or timestamp_us > times[-1]:
        raise ExtrapolationError(f"t={timestamp_us} outside [{times[0]}, {times[-1]}]")
    i = int(np.searchsorted(times, timestamp_us))
    if times[i] == timestamp_us:
        return poses.samples[i].transform
    a, b = poses.samples[i - 1], poses.samples[i]
    frac = (timestamp_us - a.timestamp_us) / (b.timestamp_us - a.timestamp_us)
    trans = (1.0 - frac) * a.transform.translation + frac * b.transform.translation
    rots = Rotation.from_matrix(np.stack([a.transform.rotation, b.transform.rotation]))
    rot = Slerp([0.0, 1.0], rots)([frac]).as_matrix()[0]
    return RigidTransform(_orthonormalize(rot), trans, a.transform.source, a.transform.target)
