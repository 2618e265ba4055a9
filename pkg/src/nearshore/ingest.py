"""Loading, validation and canonical serialisation of pipeline inputs.

File formats
------------
* point clouds: CSV ``timestamp_us,x,y,z``; a frame is a run of rows with equal timestamp
* poses: CSV ``timestamp_us,x,y,z,qw,qx,qy,qz`` (world from LiDAR body)
* masks: JSON array of frames ``{timestamp_us, width, height, instances: [{rows: [{y, spans}]}]}``
* calibration: JSON with ``cameras: [{name, K, H_cam_lidar}]`` (a single top-level
  ``K``/``H_cam_lidar`` pair is accepted too)
* ENC: GeoJSON Polygon/MultiPolygon geometry in local metric world coordinates
"""
from __future__ import annotations

import bisect
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .geometry import CameraIntrinsics, GridSpec, PoseSample, PoseSequence, RigidTransform
from .maps import BinaryMap


class InputError(ValueError):
    """Malformed or inconsistent input file."""


LIDAR_HEADER = "timestamp_us,x,y,z"
POSE_HEADER = "timestamp_us,x,y,z,qw,qx,qy,qz"


@dataclass(eq=False)
class LidarFrame:
    timestamp_us: int
    points: np.ndarray  # (N, 3) in the LiDAR frame

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)

    @property
    def t(self) -> float:
        return self.timestamp_us * 1e-6


@dataclass(eq=False)
class MaskFrame:
    """Vessel instance masks for one image; each instance is an (K, 3) array of ``(y, x0, x1)`` spans."""

    timestamp_us: int
    width: int
    height: int
    instances: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.instances = [np.asarray(s, dtype=np.int64).reshape(-1, 3) for s in self.instances]
        for spans in self.instances:
            if len(spans) == 0:
                continue
            y, x0, x1 = spans.T
            if (y < 0).any() or (y >= self.height).any():
                raise InputError("mask row outside image")
            if (x0 < 0).any() or (x0 >= self.width).any() or (x1 > self.width).any() or (x1 <= x0).any():
                raise InputError("mask span outside image or empty")

    def bitmap(self) -> np.ndarray:
        """Union of all instances as a dense (height, width) bool image."""
        img = np.zeros((self.height, self.width), dtype=bool)
        for spans in self.instances:
            for y, x0, x1 in spans:
                img[y, x0:x1] = True
        return img

    def instance_bitmap(self, i: int) -> np.ndarray:
        img = np.zeros((self.height, self.width), dtype=bool)
        for y, x0, x1 in self.instances[i]:
            img[y, x0:x1] = True
        return img


def spans_from_pixels(px: np.ndarray) -> np.ndarray:
    """Run-length encode a set of integer pixels given as (N, 2) ``(x, y)`` rows."""
    if len(px) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    uniq = np.unique(np.asarray(px, dtype=np.int64)[:, ::-1], axis=0)  # sorted by (y, x)
    y, x = uniq[:, 0], uniq[:, 1]
    breaks = np.flatnonzero((np.diff(y) != 0) | (np.diff(x) != 1)) + 1
    starts = np.concatenate([[0], breaks])
    stops = np.concatenate([breaks, [len(uniq)]])
    return np.stack([y[starts], x[starts], x[stops - 1] + 1], axis=1)


@dataclass(frozen=True)
class CameraModel:
    name: str
    intrinsics: CameraIntrinsics
    cam_from_lidar: RigidTransform


@dataclass
class Polygon:
    exterior: np.ndarray  # (N, 2), closed
    holes: list[np.ndarray] = field(default_factory=list)

    @property
    def rings(self) -> list[np.ndarray]:
        return [self.exterior, *self.holes]


@dataclass
class EncPolygonSet:
    polygons: list[Polygon] = field(default_factory=list)


@dataclass(eq=False)
class SequenceBundle:
    frames: list[LidarFrame]
    poses: PoseSequence
    cameras: list[CameraModel]
    masks: dict[str, list[MaskFrame]]
    grid: GridSpec
    enc: EncPolygonSet = field(default_factory=EncPolygonSet)
    mask_tolerance_s: float = 0.05


# ---------------------------------------------------------------- point clouds

def _read_numeric_csv(path, header: str) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n", 1)
    if lines[0].strip() != header:
        raise InputError(f"{path}:1: expected header {header!r}, got {lines[0]!r}")
    ncol = header.count(",") + 1
    body = lines[1] if len(lines) > 1 else ""
    if not body.strip():
        return np.zeros((0, ncol))
    try:
        df = pd.read_csv(io.StringIO(body), header=None, dtype=str, skip_blank_lines=True,
                         keep_default_na=False)
    except pd.errors.ParserError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if df.shape[1] != ncol:
        raise InputError(f"{path}: expected {ncol} columns, found {df.shape[1]}")
    values = df.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise InputError(f"{path}:{i + 2}: malformed or non-finite value in row {','.join(df.iloc[i])!r}")
    return values


def load_lidar_sequence(path) -> list[LidarFrame]:
    values = _read_numeric_csv(path, LIDAR_HEADER)
    if len(values) == 0:
        return []
    ts = values[:, 0].astype(np.int64)
    change = np.flatnonzero(np.diff(ts)) + 1
    starts = np.concatenate([[0], change])
    stops = np.concatenate([change, [len(ts)]])
    frame_ts = ts[starts]
    if (np.diff(frame_ts) <= 0).any():
        i = int(np.flatnonzero(np.diff(frame_ts) <= 0)[0]) + 1
        raise InputError(f"{path}:{starts[i] + 2}: non-monotonic timestamp {frame_ts[i]}")
    return [LidarFrame(int(t), values[a:b, 1:4]) for t, a, b in zip(frame_ts, starts, stops)]


def _fmt_rows(arr: np.ndarray, fmts: list[str]) -> str:
    fmt = ",".join(fmts)
    return "".join(fmt % tuple(row) + "\n" for row in arr.tolist())


def write_lidar_sequence(path, frames: list[LidarFrame]) -> None:
    chunks = [LIDAR_HEADER + "\n"]
    for f in frames:
        n = len(f.points)
        if n == 0:
            continue
        arr = np.column_stack([np.full(n, f.timestamp_us, dtype=np.int64).astype(object), f.points])
        chunks.append(_fmt_rows(arr, ["%d", "%.6f", "%.6f", "%.6f"]))
    Path(path).write_text("".join(chunks), encoding="utf-8")


def quantize(points: np.ndarray, decimals: int = 6) -> np.ndarray:
    """Round values exactly as a write/read cycle through the text formats would."""
    flat = np.asarray(points, dtype=float).ravel()
    out = np.array([float(f"{v:.{decimals}f}") for v in flat.tolist()])
    return out.reshape(np.shape(points))


def load_poses(path) -> PoseSequence:
    values = _read_numeric_csv(path, POSE_HEADER)
    samples = []
    for i, row in enumerate(values):
        try:
            tf = RigidTransform.from_quaternion(row[4:8], row[1:4], "lidar", "world")
        except ValueError as exc:
            raise InputError(f"{path}:{i + 2}: {exc}") from exc
        samples.append(PoseSample(int(row[0]), tf))
    try:
        return PoseSequence(samples)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def write_poses(path, poses: PoseSequence) -> None:
    rows = []
    for s in poses.samples:
        q = s.transform.quaternion()
        rows.append([s.timestamp_us, *s.transform.translation, *q])
    arr = np.array(rows, dtype=object).reshape(-1, 8)
    Path(path).write_text(POSE_HEADER + "\n" + _fmt_rows(arr, ["%d"] + ["%.6f"] * 3 + ["%.9f"] * 4),
                          encoding="utf-8")


# ---------------------------------------------------------------- masks

def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":")) + "\n"


def load_masks(path) -> list[MaskFrame]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: {exc}") from exc
    frames = []
    for k, fr in enumerate(doc):
        try:
            instances = []
            for inst in fr["instances"]:
                spans = [(r["y"], a, b) for r in inst["rows"] for a, b in r["spans"]]
                instances.append(np.array(spans, dtype=np.int64).reshape(-1, 3))
            frames.append(MaskFrame(int(fr["timestamp_us"]), int(fr["width"]), int(fr["height"]), instances))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: frame {k}: {exc}") from exc
    ts = [f.timestamp_us for f in frames]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise InputError(f"{path}: mask timestamps must be strictly increasing")
    return frames


def masks_to_json(frames: list[MaskFrame]) -> list[dict]:
    out = []
    for f in frames:
        instances = []
        for spans in f.instances:
            rows: dict[int, list] = {}
            for y, a, b in sorted(map(tuple, spans.tolist())):
                rows.setdefault(y, []).append([a, b])
            instances.append({"rows": [{"y": y, "spans": s} for y, s in rows.items()]})
        out.append({"timestamp_us": f.timestamp_us, "width": f.width, "height": f.height,
                    "instances": instances})
    return out


def write_masks(path, frames: list[MaskFrame]) -> None:
    Path(path).write_text(_dump(masks_to_json(frames)), encoding="utf-8")


def match_mask_to_frame(masks: list[MaskFrame], timestamp_us: int, tol_s: float = 0.05) -> MaskFrame | None:
    """Nearest mask frame within ``tol_s`` of the timestamp, else None (earlier frame wins ties)."""
    if not masks:
        return None
    times = [m.timestamp_us for m in masks]
    i = bisect.bisect_left(times, timestamp_us)
    best = None
    for j in (i - 1, i):
        if 0 <= j < len(masks):
            d = abs(times[j] - timestamp_us)
            if best is None or d < best[0]:
                best = (d, j)
    if best[0] > round(tol_s * 1e6):
        return None
    return masks[best[1]]


# ---------------------------------------------------------------- calibration

def _camera_from_doc(d: dict, name: str) -> CameraModel:
    k = d["K"]
    intr = CameraIntrinsics(float(k["fx"]), float(k["fy"]), float(k["cx"]), float(k["cy"]),
                            int(k["width"]), int(k["height"]))
    h = d["H_cam_lidar"]
    tf = RigidTransform.from_quaternion(h["quaternion_wxyz"], h["translation"], "lidar", "camera")
    return CameraModel(d.get("name", name), intr, tf)


def load_calibration(path) -> list[CameraModel]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    doc = json.loads(path.read_text(encoding="utf-8"))
    try:
        if "cameras" in doc:
            return [_camera_from_doc(c, f"cam{i}") for i, c in enumerate(doc["cameras"])]
        return [_camera_from_doc(doc, "cam0")]
    except (KeyError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def calibration_to_json(cameras: list[CameraModel]) -> dict:
    cams = []
    for c in cameras:
        k = c.intrinsics
        cams.append({
            "name": c.name,
            "K": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy, "width": k.width, "height": k.height},
            # 12 decimals keeps the document a fixed point of load/write
            "H_cam_lidar": {"quaternion_wxyz": [round(float(v), 12) for v in c.cam_from_lidar.quaternion()],
                            "translation": [round(float(v), 12) for v in c.cam_from_lidar.translation]},
        })
    return {"cameras": cams}


def write_calibration(path, cameras: list[CameraModel]) -> None:
    Path(path).write_text(json.dumps(calibration_to_json(cameras), indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- ENC polygons

def _normalize_ring(coords, where: str) -> np.ndarray:
    ring = np.asarray(coords, dtype=float).reshape(-1, 2)
    if len(ring) and not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[:1]])
    if len(np.unique(ring[:-1], axis=0)) < 3:
        raise InputError(f"{where}: degenerate ring with fewer than 3 distinct vertices")
    return ring


def _polygons_from_geometry(geom: dict, where: str) -> list[Polygon]:
    kind = geom.get("type")
    if kind == "Polygon":
        rings = [_normalize_ring(r, where) for r in geom["coordinates"]]
        return [Polygon(rings[0], rings[1:])]
    if kind == "MultiPolygon":
        out = []
        for k, poly in enumerate(geom["coordinates"]):
            rings = [_normalize_ring(r, f"{where}[{k}]") for r in poly]
            out.append(Polygon(rings[0], rings[1:]))
        return out
    raise InputError(f"{where}: unsupported geometry type {kind!r}")


def parse_enc(doc: dict, where: str = "enc") -> EncPolygonSet:
    polys: list[Polygon] = []
    if doc.get("type") == "FeatureCollection":
        for i, feat in enumerate(doc["features"]):
            if feat.get("geometry"):
                polys += _polygons_from_geometry(feat["geometry"], f"{where}: feature {i}")
    elif doc.get("type") == "Feature":
        polys += _polygons_from_geometry(doc["geometry"], where)
    else:
        polys += _polygons_from_geometry(doc, where)
    return EncPolygonSet(polys)


def load_enc(path) -> EncPolygonSet:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    return parse_enc(json.loads(path.read_text(encoding="utf-8")), str(path))


def enc_to_geojson(enc: EncPolygonSet) -> dict:
    feats = [{"type": "Feature", "properties": {},
              "geometry": {"type": "Polygon", "coordinates": [r.tolist() for r in p.rings]}}
             for p in enc.polygons]
    return {"type": "FeatureCollection", "features": feats}


def write_enc(path, enc: EncPolygonSet) -> None:
    Path(path).write_text(_dump(enc_to_geojson(enc)), encoding="utf-8")


def points_in_rings(px: np.ndarray, py: np.ndarray, rings: list[np.ndarray]) -> np.ndarray:
    """Even-odd crossing test of points against a set of closed rings."""
    inside = np.zeros(np.shape(px), dtype=bool)
    for ring in rings:
        x1, y1 = ring[:-1, 0], ring[:-1, 1]
        x2, y2 = ring[1:, 0], ring[1:, 1]
        for a, b, c, d in zip(x1, y1, x2, y2):
            if b == d:
                continue
            if b > d:  # same arithmetic whichever way the ring runs
                a, b, c, d = c, d, a, b
            straddle = (b > py) != (d > py)
            x_cross = a + (py - b) * (c - a) / (d - b)
            inside ^= straddle & (px < x_cross)
    return inside


def rasterize_enc(enc: EncPolygonSet, g: GridSpec) -> BinaryMap:
    """A cell is land iff its center lies inside any polygon (even-odd, holes subtract)."""
    cells = np.zeros(g.shape, dtype=bool)
    for poly in enc.polygons:
        if len(np.unique(poly.exterior[:-1], axis=0)) < 3:
            raise InputError("degenerate polygon with fewer than 3 distinct vertices")
        xmin, ymin = poly.exterior.min(axis=0)
        xmax, ymax = poly.exterior.max(axis=0)
        c0 = max(0, math.floor((xmin - g.origin_x) / g.cell_size - 0.5))
        c1 = min(g.n_cols, math.ceil((xmax - g.origin_x) / g.cell_size + 0.5))
        r0 = max(0, math.floor((ymin - g.origin_y) / g.cell_size - 0.5))
        r1 = min(g.n_rows, math.ceil((ymax - g.origin_y) / g.cell_size + 0.5))
        if c0 >= c1 or r0 >= r1:
            continue
        xs = g.origin_x + (np.arange(c0, c1) + 0.5) * g.cell_size
        ys = g.origin_y + (np.arange(r0, r1) + 0.5) * g.cell_size
        px, py = np.meshgrid(xs, ys)
        cells[r0:r1, c0:c1] |= points_in_rings(px, py, poly.rings)
    return BinaryMap(g, cells)
