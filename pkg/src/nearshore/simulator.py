"""Synthetic harbour scenarios with exact ground truth.

The LiDAR is a single horizontal scan line: each azimuth returns the nearest
polygon edge it crosses (with Gaussian range noise), lifted to 3D at the hit
object's return height. Water returns nothing except Poisson clutter. Oracle
masks mark the pixels of the emitted points whose ray hit a vessel.
"""
from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import (CameraIntrinsics, GridSpec, PoseSample, PoseSequence, RigidTransform, in_image_mask,
                       pixel_index, project_points, world_to_cells)
from .ingest import (CameraModel, EncPolygonSet, LidarFrame, MaskFrame, Polygon, SequenceBundle, points_in_rings,
                     quantize, rasterize_enc, spans_from_pixels)
from .maps import BinaryMap

T0_US = 1_700_000_000_000_000


@dataclass
class Structure:
    name: str
    polygon: list[list[float]]  # world (x, y) vertices, open ring
    vessel: bool = False  # docked boats: static geometry but vessel class
    return_height: float = 1.0


@dataclass
class TargetScript:
    target_id: int
    name: str
    shape: list[list[float]]  # vertices relative to the reference point
    waypoints: list[list[float]]  # [t_s, x, y], piecewise linear
    vessel: bool = True
    return_height: float = 1.0
    align_heading: bool = False  # rotate the shape (bow along +x) to the direction of travel

    def position(self, t: float) -> np.ndarray | None:
        wp = np.asarray(self.waypoints, dtype=float)
        if t < wp[0, 0] - 1e-9 or t > wp[-1, 0] + 1e-9:
            return None
        return np.array([np.interp(t, wp[:, 0], wp[:, 1]), np.interp(t, wp[:, 0], wp[:, 2])])

    def heading(self, t: float) -> float:
        """Direction of the active segment; while stopped, of the nearest moving segment (earlier first)."""
        wp = np.asarray(self.waypoints, dtype=float)
        if len(wp) < 2:
            return 0.0
        d = np.diff(wp[:, 1:], axis=0)
        moving = np.hypot(d[:, 0], d[:, 1]) > 1e-9
        if not moving.any():
            return 0.0
        seg = int(np.clip(np.searchsorted(wp[:, 0], t, side="right") - 1, 0, len(d) - 1))
        if not moving[seg]:
            before = np.flatnonzero(moving[:seg])
            seg = int(before[-1]) if len(before) else int(np.flatnonzero(moving)[0])
        return math.atan2(d[seg, 1], d[seg, 0])

    def polygon_at(self, t: float) -> np.ndarray | None:
        pos = self.position(t)
        if pos is None:
            return None
        shape = np.asarray(self.shape, dtype=float)
        if self.align_heading:
            c, s = math.cos(self.heading(t)), math.sin(self.heading(t))
            shape = shape @ np.array([[c, s], [-s, c]])
        return shape + pos


@dataclass
class CameraSpec:
    name: str
    yaw_deg: float  # optical axis azimuth in the LiDAR frame (x forward, y left)
    hfov_deg: float = 90.0
    width: int = 640
    height: int = 480
    offset: list[float] = field(default_factory=lambda: [0.0, 0.0, -0.2])  # camera centre in the LiDAR frame

    def model(self) -> CameraModel:
        fx = (self.width / 2.0) / math.tan(math.radians(self.hfov_deg) / 2.0)
        intr = CameraIntrinsics(fx, fx, self.width / 2.0 - 0.5, self.height / 2.0 - 0.5, self.width, self.height)
        psi = math.radians(self.yaw_deg)
        c, s = math.cos(psi), math.sin(psi)
        rot = np.array([[s, -c, 0.0], [0.0, 0.0, -1.0], [c, s, 0.0]])
        return CameraModel(self.name, intr, RigidTransform(rot, -rot @ np.asarray(self.offset, float), "lidar", "camera"))


@dataclass
class ScenarioSpec:
    name: str
    seed: int = 0
    duration_s: float = 30.0
    lidar_rate_hz: float = 10.0
    mask_rate_hz: float = 10.0
    mask_time_offset_s: float = 0.013
    structures: list[Structure] = field(default_factory=list)
    targets: list[TargetScript] = field(default_factory=list)
    enc_polygons: list[list[list[float]]] = field(default_factory=list)
    clutter_rate: float = 20.0
    angular_resolution_deg: float = 0.2
    max_range_m: float = 100.0
    range_noise_std: float = 0.02
    lidar_height_m: float = 2.5
    clutter_height_m: float = 0.1
    cameras: list[CameraSpec] = field(default_factory=list)
    ego_waypoints: list[list[float]] = field(default_factory=lambda: [[0.0, 0.0, 0.0, 90.0]])  # [t, x, y, yaw_deg]
    grid: dict = field(default_factory=lambda: {"origin": [-60.0, -20.0], "cell_size": 0.5,
                                                 "n_cols": 240, "n_rows": 200})
    pose_rate_hz: float = 100.0

    def __post_init__(self):
        if self.duration_s <= 0 or self.lidar_rate_hz <= 0 or self.mask_rate_hz <= 0:
            raise ValueError("duration and rates must be positive")
        if self.mask_rate_hz > self.lidar_rate_hz:
            raise ValueError("mask rate cannot exceed the LiDAR rate")
        if self.angular_resolution_deg <= 0 or self.max_range_m <= 0 or self.range_noise_std < 0:
            raise ValueError("invalid LiDAR parameters")
        for s in self.structures:
            if len(s.polygon) < 3:
                raise ValueError(f"structure {s.name!r} needs at least 3 vertices")
        ids = [t.target_id for t in self.targets]
        if len(set(ids)) != len(ids):
            raise ValueError("target ids must be unique")
        for t in self.targets:
            wp = np.asarray(t.waypoints, dtype=float)
            if wp.ndim != 2 or wp.shape[1] != 3 or (np.diff(wp[:, 0]) <= 0).any():
                raise ValueError(f"target {t.name!r}: waypoints must be [t, x, y] with increasing t")

    @property
    def grid_spec(self) -> GridSpec:
        return GridSpec.from_dict(self.grid)

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.lidar_rate_hz))

    def frame_time_us(self, k: int) -> int:
        return T0_US + int(round(k * 1e6 / self.lidar_rate_hz))

    def ego_state(self, t: float) -> tuple[float, float, float]:
        wp = np.asarray(self.ego_waypoints, dtype=float)
        return (float(np.interp(t, wp[:, 0], wp[:, 1])), float(np.interp(t, wp[:, 0], wp[:, 2])),
                math.radians(float(np.interp(t, wp[:, 0], wp[:, 3]))))

    def with_seed(self, seed: int) -> "ScenarioSpec":
        out = copy.deepcopy(self)
        out.seed = seed
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        d["structures"] = [Structure(**s) for s in d.get("structures", [])]
        d["targets"] = [TargetScript(**t) for t in d.get("targets", [])]
        d["cameras"] = [CameraSpec(**c) for c in d.get("cameras", [])]
        return cls(**d)


@dataclass(eq=False)
class GroundTruth:
    frame_times_us: list[int]
    target_rows: list[tuple[int, int, float, float]]  # (timestamp_us, target_id, x, y)
    target_names: dict[int, str]
    truth_map: BinaryMap
    docked_map: BinaryMap
    coverage: BinaryMap
    target_hits: dict[int, np.ndarray]  # returns per frame
    static_pixels: dict[str, list[np.ndarray]]  # per camera, per frame: pixels of static-structure returns
    clutter_counts: list[int] = field(default_factory=list)  # clutter points per frame

    @property
    def docked_footprint(self) -> BinaryMap:
        return BinaryMap(self.docked_map.grid, self.docked_map.cells & self.coverage.cells)

    @property
    def coverage_region(self) -> BinaryMap:
        return BinaryMap(self.truth_map.grid, self.truth_map.cells & self.coverage.cells)

    def trajectories(self) -> dict[int, np.ndarray]:
        """Per target, an (N, 3) array of (timestamp_us, x, y)."""
        out: dict[int, list] = {}
        for t, tid, x, y in self.target_rows:
            out.setdefault(tid, []).append((t, x, y))
        return {k: np.array(v, dtype=float) for k, v in out.items()}


def cast_rays(origin: np.ndarray, angles: np.ndarray, edges: np.ndarray,
              max_range: float) -> tuple[np.ndarray, np.ndarray]:
    """Distance to and index of the first edge hit by each ray (inf / -1 when none)."""
    k = len(angles)
    if len(edges) == 0:
        return np.full(k, np.inf), np.full(k, -1)
    dx, dy = np.cos(angles)[:, None], np.sin(angles)[:, None]
    px, py = edges[None, :, 0] - origin[0], edges[None, :, 1] - origin[1]
    ex, ey = edges[None, :, 2] - edges[None, :, 0], edges[None, :, 3] - edges[None, :, 1]
    denom = dx * ey - dy * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (px * ey - py * ex) / denom
        s = (px * dy - py * dx) / denom
    valid = (np.abs(denom) > 1e-12) & (t > 1e-9) & (s >= 0.0) & (s <= 1.0) & (t <= max_range)
    t = np.where(valid, t, np.inf)
    idx = np.argmin(t, axis=1)
    dist = t[np.arange(k), idx]
    return dist, np.where(np.isfinite(dist), idx, -1)


def _edges(poly: np.ndarray) -> np.ndarray:
    return np.hstack([poly, np.roll(poly, -1, axis=0)])


def _inside_any(xy: np.ndarray, polys: list[np.ndarray]) -> np.ndarray:
    inside = np.zeros(len(xy), dtype=bool)
    for p in polys:
        ring = np.vstack([p, p[:1]])
        inside |= points_in_rings(xy[:, 0], xy[:, 1], [ring])
    return inside


def generate(spec: ScenarioSpec) -> tuple[SequenceBundle, GroundTruth]:
    rng = np.random.default_rng(spec.seed)
    grid = spec.grid_spec
    cams = [c.model() for c in spec.cameras]
    n = spec.n_frames
    mask_every = max(1, int(round(spec.lidar_rate_hz / spec.mask_rate_hz)))
    azimuths = np.deg2rad(np.arange(0.0, 360.0, spec.angular_resolution_deg))

    static_objs = [(np.asarray(s.polygon, float), s.vessel, s.return_height, ("structure", i))
                   for i, s in enumerate(spec.structures)]
    frames, masks = [], {c.name: [] for c in cams}
    coverage_counts = np.zeros(grid.shape, dtype=np.int64)
    target_hits = {t.target_id: np.zeros(n, dtype=np.int64) for t in spec.targets}
    static_pixels: dict[str, list[np.ndarray]] = {c.name: [] for c in cams}
    rows = []
    clutter_counts = []

    for k in range(n):
        t = k / spec.lidar_rate_hz
        t_us = spec.frame_time_us(k)
        ex, ey, yaw = spec.ego_state(t)
        objs = list(static_objs)
        for tg in spec.targets:
            poly = tg.polygon_at(t)
            if poly is not None:
                objs.append((poly, tg.vessel, tg.return_height, ("target", tg.target_id)))
                pos = tg.position(t)
                rows.append((t_us, tg.target_id, float(pos[0]), float(pos[1])))
        edges = np.vstack([_edges(o[0]) for o in objs]) if objs else np.zeros((0, 4))
        owner_of_edge = np.concatenate([np.full(len(o[0]), j) for j, o in enumerate(objs)]) if objs else np.zeros(0, int)

        origin = np.array([ex, ey])
        angles = yaw + azimuths
        dist, eidx = cast_rays(origin, angles, edges, spec.max_range_m)
        hit = eidx >= 0
        owner = np.where(hit, owner_of_edge[np.maximum(eidx, 0)], -1)[hit]
        d_true = dist[hit]
        ang = angles[hit]
        d_meas = d_true + (rng.normal(0.0, spec.range_noise_std, len(d_true)) if spec.range_noise_std > 0 else 0.0)
        dirs = np.column_stack([np.cos(ang), np.sin(ang)])
        xy_true = origin + dirs * d_true[:, None]
        xy = origin + dirs * d_meas[:, None]
        z = np.array([objs[o][2] for o in owner]) if len(owner) else np.zeros(0)

        cols, rws, inside = world_to_cells(xy_true, grid)
        cells = np.unique(np.column_stack([rws[inside], cols[inside]]), axis=0)
        if len(cells):
            coverage_counts[cells[:, 0], cells[:, 1]] += 1
        for j, o in enumerate(objs):
            if o[3][0] == "target":
                target_hits[o[3][1]][k] = int((owner == j).sum())

        n_clutter = rng.poisson(spec.clutter_rate) if spec.clutter_rate > 0 else 0
        clutter = np.zeros((0, 2))
        if n_clutter:
            polys = [o[0] for o in objs]
            picked = []
            while sum(len(p) for p in picked) < n_clutter:
                m = 2 * n_clutter
                rad = spec.max_range_m * np.sqrt(rng.random(m))
                th = rng.random(m) * 2 * np.pi
                cand = origin + np.column_stack([rad * np.cos(th), rad * np.sin(th)])
                picked.append(cand[~_inside_any(cand, polys)])
            clutter = np.vstack(picked)[:n_clutter]
        clutter_counts.append(int(n_clutter))
        world = np.vstack([np.column_stack([xy, z]),
                           np.column_stack([clutter, np.full(len(clutter), spec.clutter_height_m)])])
        pose = RigidTransform.from_yaw(yaw, [ex, ey, spec.lidar_height_m])
        pts_lidar = quantize(pose.inverse().apply(world)) if len(world) else np.zeros((0, 3))
        frames.append(LidarFrame(t_us, pts_lidar))

        point_owner = np.concatenate([owner, np.full(len(clutter), -1)])
        is_vessel = np.array([o >= 0 and objs[o][1] for o in point_owner], dtype=bool)
        is_static = np.array([o >= 0 and objs[o][3][0] == "structure" and not objs[o][1]
                              for o in point_owner], dtype=bool)
        for cam in cams:
            uv, _, front = project_points(cam.cam_from_lidar.apply(pts_lidar), cam.intrinsics) \
                if len(pts_lidar) else (np.zeros((0, 2)), np.zeros(0), np.zeros(0, bool))
            vis = front & in_image_mask(uv, cam.intrinsics) if len(uv) else np.zeros(0, bool)
            px = pixel_index(uv[vis], cam.intrinsics) if vis.any() else np.zeros((0, 2), np.int64)
            vis_idx = np.flatnonzero(vis)
            static_pixels[cam.name].append(px[is_static[vis_idx]])
            if k % mask_every:
                continue
            instances = []
            for j in sorted(set(point_owner[vis_idx][is_vessel[vis_idx]].tolist())):
                sel = point_owner[vis_idx] == j
                instances.append(spans_from_pixels(px[sel]))
            k_cam = cam.intrinsics
            masks[cam.name].append(MaskFrame(t_us + int(round(spec.mask_time_offset_s * 1e6)),
                                             k_cam.width, k_cam.height, instances))

    end_us = spec.frame_time_us(n - 1) if n else T0_US
    step_us = int(round(1e6 / spec.pose_rate_hz))
    samples = []
    t_us = T0_US
    while t_us <= end_us + step_us:
        ex, ey, yaw = spec.ego_state((t_us - T0_US) * 1e-6)
        samples.append(PoseSample(t_us, RigidTransform.from_yaw(yaw, [ex, ey, spec.lidar_height_m])))
        t_us += step_us

    enc = EncPolygonSet([Polygon(np.vstack([np.asarray(p, float), np.asarray(p[:1], float)]))
                         for p in spec.enc_polygons])
    bundle = SequenceBundle(frames, PoseSequence(samples), cams, masks, grid, enc)

    def _raster(polys):
        return rasterize_enc(EncPolygonSet([Polygon(np.vstack([p, p[:1]])) for p in polys]), grid)

    truth_map = _raster([np.asarray(s.polygon, float) for s in spec.structures if not s.vessel])
    docked_map = _raster([np.asarray(s.polygon, float) for s in spec.structures if s.vessel])
    coverage = BinaryMap(grid, coverage_counts * 2 >= max(n, 1))
    truth = GroundTruth([f.timestamp_us for f in frames], rows, {t.target_id: t.name for t in spec.targets},
                        truth_map, docked_map, coverage, target_hits, static_pixels, clutter_counts)
    return bundle, truth


@dataclass
class FalsePositiveSpec:
    """Spurious vessel boxes over land: Poisson count per frame, centred on land pixels."""

    rate_per_frame: float = 0.0
    width_px: int = 24
    height_px: int = 24
    anchors: list[np.ndarray] = field(default_factory=list)  # per mask frame, (M, 2) candidate (x, y) pixels


def degrade_masks(masks: list[MaskFrame], false_negative_rate: float,
                  false_positive: FalsePositiveSpec | None, seed: int) -> list[MaskFrame]:
    """Drop instances at the false-negative rate and inject spurious land masks."""
    if not 0.0 <= false_negative_rate <= 1.0:
        raise ValueError("false-negative rate must be in [0, 1]")
    if false_positive is not None and false_positive.rate_per_frame < 0:
        raise ValueError("false-positive rate must be non-negative")
    rng = np.random.default_rng(seed)
    out = []
    for k, mf in enumerate(masks):
        keep = rng.random(len(mf.instances)) >= false_negative_rate
        instances = [inst for inst, kp in zip(mf.instances, keep) if kp]
        if false_positive is not None and false_positive.rate_per_frame > 0:
            n_fp = rng.poisson(false_positive.rate_per_frame)
            anchors = false_positive.anchors[k] if k < len(false_positive.anchors) else np.zeros((0, 2))
            for _ in range(n_fp):
                if len(anchors) == 0:
                    break
                ax, ay = anchors[rng.integers(len(anchors))]
                x0 = max(0, int(ax) - false_positive.width_px // 2)
                x1 = min(mf.width, x0 + false_positive.width_px)
                y0 = max(0, int(ay) - false_positive.height_px // 2)
                y1 = min(mf.height, y0 + false_positive.height_px)
                instances.append(np.array([[y, x0, x1] for y in range(y0, y1)], dtype=np.int64).reshape(-1, 3))
        out.append(MaskFrame(mf.timestamp_us, mf.width, mf.height, instances))
    return out


def mask_anchor_frames(truth: GroundTruth, camera: str, masks: list[MaskFrame]) -> list[np.ndarray]:
    """Static-structure pixels aligned with a camera's mask frames."""
    times = np.asarray(truth.frame_times_us, dtype=np.int64)
    pix = truth.static_pixels[camera]
    out = []
    for mf in masks:
        # masks carry the camera timestamp; pair with the nearest LiDAR frame
        i = int(np.argmin(np.abs(times - mf.timestamp_us))) if len(times) else None
        out.append(pix[i] if i is not None else np.zeros((0, 2)))
    return out


# ---------------------------------------------------------------- built-in scenarios

def _box(x0, x1, y0, y1) -> list[list[float]]:
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


# Structure faces sit 0.1 m inside a cell from its outer edge so returns land in
# cells whose centres are inside the polygon.
PIER = Structure("pier", _box(-25.4, -5.1, 25.1, 28.4), return_height=0.6)
LAND_WEST = Structure("land_west", _box(-70.0, -6.6, 50.1, 85.0), return_height=1.5)
LAND_EAST = Structure("land_east", _box(6.6, 70.0, 50.1, 85.0), return_height=1.5)
BREAKWATER = Structure("breakwater", _box(-40.4, -34.1, 35.1, 38.4), return_height=1.0)
# Nautical chart: land and breakwater with a 1 m margin, no floating pier.
HARBOUR_ENC = [_box(-71.0, -5.6, 49.1, 86.0), _box(5.6, 71.0, 49.1, 86.0), _box(-41.4, -33.1, 34.1, 39.4)]
DOCKED_BOATS = [
    Structure("boat_a", _box(-22.4, -16.6, 22.6, 24.4), vessel=True, return_height=0.9),
    Structure("boat_b", _box(-14.4, -9.1, 22.6, 24.4), vessel=True, return_height=0.9),
    Structure("boat_c", _box(-30.4, -22.6, 46.6, 48.9), vessel=True, return_height=0.9),
]
FERRY_CAMERAS = [CameraSpec("port", 35.0), CameraSpec("starboard", -35.0)]
KAYAK_SHAPE = _box(-2.0, 2.0, -0.5, 0.5)
CRUISER_SHAPE = _box(-4.0, 4.0, -1.25, 1.25)


def _harbour(name: str, duration: float, seed: int, targets=(), docked=False, ego=None) -> ScenarioSpec:
    structures = [PIER, LAND_WEST, LAND_EAST, BREAKWATER] + (DOCKED_BOATS if docked else [])
    return ScenarioSpec(name=name, seed=seed, duration_s=duration,
                        structures=copy.deepcopy(structures), targets=list(targets),
                        enc_polygons=copy.deepcopy(HARBOUR_ENC), cameras=copy.deepcopy(FERRY_CAMERAS),
                        ego_waypoints=ego or [[0.0, 0.0, 0.0, 90.0]])


def builtin_scenarios(seed: int = 0) -> dict[str, ScenarioSpec]:
    # moored along the pier, slides clear of its east end, then heads for the ferry and turns east
    kayak = TargetScript(1, "kayak", KAYAK_SHAPE,
                         [[0.0, -7.5, 24.4], [4.0, -7.5, 24.4], [7.0, -4.0, 24.4], [9.0, -4.0, 22.0],
                          [18.0, -4.0, 15.8], [25.0, 8.0, 15.8]], return_height=0.3, align_heading=True)
    cruiser = TargetScript(2, "day_cruiser", CRUISER_SHAPE, [[0.0, 44.0, 12.1], [25.0, -43.5, 12.1]],
                           return_height=1.2, align_heading=True)
    pass_a = TargetScript(1, "motorboat", _box(-3.0, 3.0, -1.0, 1.0), [[0.0, -40.0, 15.0], [30.0, 40.0, 15.0]])
    pass_b = TargetScript(2, "sailboat", _box(-4.0, 4.0, -1.2, 1.2), [[0.0, 45.0, 19.0], [30.0, -30.0, 19.0]])
    turner = TargetScript(1, "kayak", KAYAK_SHAPE,
                          [[0.0, -12.0, 15.0], [10.0, 3.0, 15.0], [11.0, 4.2, 15.6], [12.0, 4.0, 17.0],
                           [20.0, 3.2, 29.0], [26.0, 2.6, 38.0]], return_height=0.3, align_heading=True)
    return {
        "kayak_undock": _harbour("kayak_undock", 25.0, seed, [kayak, cruiser]),
        "docked_boats_mapping": _harbour("docked_boats_mapping", 60.0, seed, docked=True),
        "multi_pass": _harbour("multi_pass", 30.0, seed, [pass_a, pass_b],
                               ego=[[0.0, -10.0, -5.0, 80.0], [30.0, 10.0, -5.0, 100.0]]),
        "maneuver": _harbour("maneuver", 26.0, seed, [turner]),
    }
