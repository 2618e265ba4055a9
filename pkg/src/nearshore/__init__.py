"""Harbour mapping and tracking: camera-masked LiDAR static maps, map-filtered clustering, VIPDA tracking."""

__version__ = "0.1.0"

from .geometry import CameraIntrinsics, GridSpec, Point3, RigidTransform  # noqa: E402
from .maps import BinaryMap  # noqa: E402

__all__ = ["BinaryMap", "CameraIntrinsics", "GridSpec", "Point3", "RigidTransform", "__version__"]
