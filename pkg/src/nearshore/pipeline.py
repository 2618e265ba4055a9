"""Stage orchestration shared by the CLI, the demos and the acceptance tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detector import Detection, DetectorConfig, detect
from .ingest import SequenceBundle, rasterize_enc
from .mapper import MapperConfig, MappingResult, build_map, dilate_map
from .maps import BinaryMap
from .tracker import Snapshot, TrackerConfig, TrackRow, run_tracker, snapshot_rows

MAP_VARIANTS = ("none", "enc_only", "dilated", "precise")


@dataclass
class TrackingResult:
    variant: str
    map: BinaryMap
    detections: list[tuple[int, list[Detection]]]
    kept_points: list[np.ndarray]
    snapshots: list[Snapshot]
    rows: list[TrackRow]

    @property
    def all_detections(self) -> list[Detection]:
        return [d for _, ds in self.detections for d in ds]


def variant_map(variant: str, bundle: SequenceBundle, precise: BinaryMap | None = None,
                margin_m: float = 2.0) -> BinaryMap:
    """The filter map for one experiment variant.

    ``none`` keeps every point, ``enc_only`` uses the rasterized chart,
    ``dilated`` grows the precise map by ``margin_m`` and ``precise`` is the
    mapped result as-is.
    """
    if variant not in MAP_VARIANTS:
        raise ValueError(f"unknown map variant {variant!r}; expected one of {', '.join(MAP_VARIANTS)}")
    if variant == "none":
        return BinaryMap.empty(bundle.grid)
    if variant == "enc_only":
        return rasterize_enc(bundle.enc, bundle.grid)
    if precise is None:
        raise ValueError(f"map variant {variant!r} needs a map")
    if variant == "dilated":
        if not math.isfinite(margin_m) or margin_m < 0:
            raise ValueError("margin must be a non-negative number")
        return dilate_map(precise, margin_m)
    return precise


def run_mapping(bundle: SequenceBundle, cfg: MapperConfig | None = None) -> MappingResult:
    return build_map(bundle, cfg or MapperConfig())


def run_detection(bundle: SequenceBundle, m: BinaryMap, cfg: DetectorConfig | None = None):
    cfg = cfg or DetectorConfig()
    dets, kept = [], []
    for frame in bundle.frames:
        d, xy = detect(frame, bundle.poses.at(frame.timestamp_us), m, cfg)
        dets.append((frame.timestamp_us, d))
        kept.append(xy)
    return dets, kept


def run_tracking(bundle: SequenceBundle, m: BinaryMap, variant: str = "precise",
                 detector_cfg: DetectorConfig | None = None,
                 tracker_cfg: TrackerConfig | None = None) -> TrackingResult:
    dets, kept = run_detection(bundle, m, detector_cfg)
    snaps, _ = run_tracker(dets, tracker_cfg)
    return TrackingResult(variant, m, dets, kept, snaps, snapshot_rows(snaps))
