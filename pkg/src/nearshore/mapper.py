"""Static-structure mapping: point selection, sliding-window accumulation, post-processing."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .geometry import GridSpec, RigidTransform, in_image_mask, pixel_index, project_points, world_to_cells
from .ingest import CameraModel, LidarFrame, MaskFrame, SequenceBundle, match_mask_to_frame, rasterize_enc
from .maps import BinaryMap, require_same_grid


class PointLabel(enum.IntEnum):
    # Ordered by priority when several cameras see the same point.
    UNKNOWN = 0
    CANDIDATE = 1
    VESSEL = 2


class WindowNotFullError(RuntimeError):
    pass


@dataclass
class MapperConfig:
    window_seconds: float = 5.0
    frame_rate_hz: float = 10.0
    max_range_m: float = 100.0
    min_observed_fraction: float = 0.40
    cell_size_m: float = 0.5
    dilate_radius_cells: int = 1
    erode_radius_cells: int = 1
    morphology_order: str = "close_open"
    opening_element: str = "segments"
    use_masks: bool = True

    def __post_init__(self):
        if not 0 < self.min_observed_fraction <= 1:
            raise ValueError("min_observed_fraction must be in (0, 1]")
        if self.dilate_radius_cells < 0 or self.erode_radius_cells < 0:
            raise ValueError("morphology radii must be non-negative")
        if self.morphology_order not in ("close_open", "open_close"):
            raise ValueError(f"unknown morphology_order {self.morphology_order!r}")
        if self.opening_element not in ("segments", "square"):
            raise ValueError(f"unknown opening_element {self.opening_element!r}")
        if self.window_frames < 1:
            raise ValueError("window must hold at least one frame")

    @property
    def window_frames(self) -> int:
        return int(round(self.window_seconds * self.frame_rate_hz))

    @property
    def min_observed_slots(self) -> int:
        return math.ceil(self.min_observed_fraction * self.window_frames - 1e-9)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class LabeledPoints:
    labels: np.ndarray  # PointLabel values, (N,)
    xy: np.ndarray  # world (x, y), (N, 2)


def _mask_lookup(uv: np.ndarray, front: np.ndarray, cam: CameraModel, bitmap: np.ndarray | None) -> np.ndarray:
    k = cam.intrinsics
    visible = front & in_image_mask(uv, k)
    labels = np.full(len(uv), PointLabel.UNKNOWN, dtype=np.int8)
    if bitmap is None:
        return labels
    labels[visible] = PointLabel.CANDIDATE
    if visible.any():
        px = pixel_index(uv[visible], k)
        hit = bitmap[px[:, 1], px[:, 0]]
        idx = np.flatnonzero(visible)[hit]
        labels[idx] = PointLabel.VESSEL
    return labels


def classify_points(frame: LidarFrame, masks: dict[str, MaskFrame | None], cameras: list[CameraModel],
                    pose: RigidTransform, use_masks: bool = True) -> LabeledPoints:
    """Label each point Vessel / Candidate / Unknown and reduce it to world (x, y).

    ``masks`` maps camera name to the matched mask frame (None when no mask is
    within tolerance; such a camera then contributes only Unknown labels).
    With ``use_masks=False`` every point is a mapping candidate.
    """
    pts = frame.points
    xy = pose.apply(pts)[:, :2] if len(pts) else np.zeros((0, 2))
    if not use_masks:
        return LabeledPoints(np.full(len(pts), PointLabel.CANDIDATE, dtype=np.int8), xy)
    labels = np.full(len(pts), PointLabel.UNKNOWN, dtype=np.int8)
    for cam in cameras:
        if len(pts) == 0:
            break
        uv, _, front = project_points(cam.cam_from_lidar.apply(pts), cam.intrinsics)
        mf = masks.get(cam.name)
        bitmap = mf.bitmap() if mf is not None else None
        labels = np.maximum(labels, _mask_lookup(uv, front, cam, bitmap))
    return LabeledPoints(labels, xy)


class AccumulatorGrid:
    """Ring buffer of the last W frames' per-cell observed / vessel flags."""

    def __init__(self, grid: GridSpec, window_frames: int, max_range_m: float = 100.0):
        self.grid = grid
        self.window = window_frames
        self.max_range = max_range_m
        self.observed = np.zeros((window_frames, *grid.shape), dtype=bool)
        self.vessel = np.zeros((window_frames, *grid.shape), dtype=bool)
        self.last_vessel_frame = np.full(grid.shape, -1, dtype=np.int64)
        self.frames_seen = 0

    @property
    def full(self) -> bool:
        return self.frames_seen >= self.window

    def accumulate_frame(self, points: LabeledPoints, sensor_xy) -> None:
        slot = self.frames_seen % self.window
        self.observed[slot] = False
        self.vessel[slot] = False
        keep = points.labels != PointLabel.UNKNOWN
        if keep.any():
            cols, rows, inside = world_to_cells(points.xy[keep], self.grid)
            labels = points.labels[keep][inside]
            cols, rows = cols[inside], rows[inside]
            cx = self.grid.origin_x + (cols + 0.5) * self.grid.cell_size
            cy = self.grid.origin_y + (rows + 0.5) * self.grid.cell_size
            in_range = np.hypot(cx - sensor_xy[0], cy - sensor_xy[1]) <= self.max_range
            cols, rows, labels = cols[in_range], rows[in_range], labels[in_range]
            self.observed[slot, rows, cols] = True
            v = labels == PointLabel.VESSEL
            self.vessel[slot, rows[v], cols[v]] = True
            self.last_vessel_frame[rows[v], cols[v]] = self.frames_seen
        self.frames_seen += 1

    def observed_counts(self) -> np.ndarray:
        return self.observed.sum(axis=0)

    def vessel_in_window(self) -> np.ndarray:
        return self.vessel.any(axis=0)


def finalize_cells(acc: AccumulatorGrid, cfg: MapperConfig) -> BinaryMap:
    """Static iff never vessel within the window and observed in enough window slots."""
    if not acc.full:
        raise WindowNotFullError(f"only {acc.frames_seen} frames accumulated, window needs {acc.window}")
    need = math.ceil(cfg.min_observed_fraction * acc.window - 1e-9)
    static = (acc.observed_counts() >= need) & ~acc.vessel_in_window()
    return BinaryMap(acc.grid, static)


def _square(radius: int) -> np.ndarray:
    return np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)


def closing(cells: np.ndarray, radius: int) -> np.ndarray:
    """Dilate then erode with a square element; cells beyond the grid count as water."""
    if radius == 0:
        return cells.copy()
    padded = np.pad(cells, radius)
    out = ndimage.binary_erosion(ndimage.binary_dilation(padded, _square(radius)), _square(radius))
    return out[radius:-radius, radius:-radius]


def opening_square(cells: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return cells.copy()
    el = _square(radius)
    return ndimage.binary_dilation(ndimage.binary_erosion(cells, el, border_value=0), el)


def _shift(a: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """out[r, c] = a[r + dr, c + dc], False outside."""
    out = np.zeros_like(a)
    h, w = a.shape
    rs, re = max(0, -dr), min(h, h - dr)
    cs, ce = max(0, -dc), min(w, w - dc)
    if rs < re and cs < ce:
        out[rs:re, cs:ce] = a[rs + dr:re + dr, cs + dc:ce + dc]
    return out


def opening_segments(cells: np.ndarray, radius: int) -> np.ndarray:
    """Union of openings by straight segments of ``radius + 1`` cells in four directions.

    Radius 1 removes exactly the static cells with no static 8-neighbour while
    keeping one-cell-wide walls intact.
    """
    if radius == 0:
        return cells.copy()
    out = np.zeros_like(cells)
    for d in ((0, 1), (1, 0), (1, 1), (1, -1)):
        eroded = cells.copy()
        for k in range(1, radius + 1):
            eroded &= _shift(cells, k * d[0], k * d[1])
        opened = eroded.copy()
        for k in range(1, radius + 1):
            opened |= _shift(eroded, -k * d[0], -k * d[1])
        out |= opened
    return out


def opening(cells: np.ndarray, radius: int, element: str = "segments") -> np.ndarray:
    return opening_segments(cells, radius) if element == "segments" else opening_square(cells, radius)


def post_process(m: BinaryMap, cfg: MapperConfig) -> BinaryMap:
    cells = m.cells
    if cfg.morphology_order == "close_open":
        cells = opening(closing(cells, cfg.dilate_radius_cells), cfg.erode_radius_cells, cfg.opening_element)
    else:
        cells = closing(opening(cells, cfg.erode_radius_cells, cfg.opening_element), cfg.dilate_radius_cells)
    return BinaryMap(m.grid, cells)


def merge_with_enc(lidar_map: BinaryMap, enc_map: BinaryMap) -> BinaryMap:
    require_same_grid(lidar_map, enc_map)
    return BinaryMap(lidar_map.grid, lidar_map.cells | enc_map.cells)


def dilate_map(m: BinaryMap, margin_m: float) -> BinaryMap:
    """Grow the static region by ``ceil(margin / cell_size)`` cells (square element)."""
    if margin_m < 0:
        raise ValueError("margin must be non-negative")
    radius = math.ceil(margin_m / m.grid.cell_size - 1e-9)
    if radius == 0:
        return m.copy()
    return BinaryMap(m.grid, ndimage.binary_dilation(m.cells, _square(radius)))


@dataclass
class MappingResult:
    raw: BinaryMap
    processed: BinaryMap
    final: BinaryMap
    frames_used: int

    def stage_counts(self) -> dict[str, int]:
        return {"raw_static": self.raw.count, "post_morphology": self.processed.count,
                "post_enc_merge": self.final.count}


def build_map(bundle: SequenceBundle, cfg: MapperConfig) -> MappingResult:
    """Run the full mapping pipeline over a sequence bundle."""
    acc = AccumulatorGrid(bundle.grid, cfg.window_frames, cfg.max_range_m)
    for frame in bundle.frames:
        pose = bundle.poses.at(frame.timestamp_us)
        matched = {cam.name: match_mask_to_frame(bundle.masks.get(cam.name, []), frame.timestamp_us,
                                                 bundle.mask_tolerance_s)
                   for cam in bundle.cameras}
        labeled = classify_points(frame, matched, bundle.cameras, pose, cfg.use_masks)
        acc.accumulate_frame(labeled, pose.translation[:2])
    raw = finalize_cells(acc, cfg)
    processed = post_process(raw, cfg)
    final = merge_with_enc(processed, rasterize_enc(bundle.enc, bundle.grid))
    return MappingResult(raw, processed, final, acc.frames_seen)
