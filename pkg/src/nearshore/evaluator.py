"""Map and track scoring against simulator ground truth."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .maps import BinaryMap, require_same_grid
from .tracker import TrackRow, TrackStatus


@dataclass
class MapScore:
    iou: float
    docked_exclusion_rate: float
    static_coverage_rate: float


def _ratio(num: int, den: int, empty: float) -> float:
    return float(num) / den if den else empty


def score_map(estimated: BinaryMap, truth: BinaryMap, docked_footprints: BinaryMap,
              coverage_region: BinaryMap) -> MapScore:
    """IoU of static regions, share of docked footprint left unmapped, share of covered truth mapped.

    ``coverage_region`` marks the cells the LiDAR can see; coverage is
    measured over truth static cells inside it.
    """
    for other in (truth, docked_footprints, coverage_region):
        require_same_grid(estimated, other)
    est, tru = estimated.cells, truth.cells
    iou = _ratio(int((est & tru).sum()), int((est | tru).sum()), 1.0)
    docked = docked_footprints.cells
    exclusion = _ratio(int((docked & ~est).sum()), int(docked.sum()), 1.0)
    region = tru & coverage_region.cells
    coverage = _ratio(int((region & est).sum()), int(region.sum()), 1.0)
    return MapScore(iou, exclusion, coverage)


@dataclass
class TargetScore:
    target_id: int
    first_truth_us: int
    first_track_us: int | None
    time_to_first_track_s: float | None
    fragmentation: int
    id_switches: int
    matched_ids: list[int] = field(default_factory=list)


@dataclass
class TrackScore:
    confirmed_track_count: int
    tentative_track_count: int
    true_target_count: int
    false_track_count: int
    fragmentation: int
    id_switches: int
    targets: list[TargetScore] = field(default_factory=list)
    false_track_ids: list[int] = field(default_factory=list)

    def target(self, target_id: int) -> TargetScore:
        return next(t for t in self.targets if t.target_id == target_id)

    def time_to_first_track(self, target_id: int) -> float | None:
        return self.target(target_id).time_to_first_track_s


def match_frame(tracks: list[tuple[int, float, float]], truths: list[tuple[int, float, float]],
                radius: float) -> dict[int, int]:
    """Greedy nearest assignment ``{target_id: track_id}`` within ``radius``."""
    pairs = []
    for tid, tx, ty in tracks:
        for gid, gx, gy in truths:
            d = float(np.hypot(tx - gx, ty - gy))
            if d <= radius:
                pairs.append((d, tid, gid))
    pairs.sort()
    used_tracks, out = set(), {}
    for _, tid, gid in pairs:
        if tid in used_tracks or gid in out:
            continue
        used_tracks.add(tid)
        out[gid] = tid
    return out


def score_tracks(rows: list[TrackRow], truth_rows: list[tuple[int, int, float, float]],
                 match_radius_m: float = 3.0) -> TrackScore:
    by_time: dict[int, list[TrackRow]] = {}
    for r in rows:
        by_time.setdefault(r.timestamp_us, []).append(r)
    truth_by_time: dict[int, list[tuple[int, float, float]]] = {}
    first_truth: dict[int, int] = {}
    for t, gid, x, y in truth_rows:
        truth_by_time.setdefault(int(t), []).append((int(gid), float(x), float(y)))
        first_truth[int(gid)] = min(first_truth.get(int(gid), int(t)), int(t))

    confirmed_ids, all_ids, assigned_ids = set(), set(), set()
    for r in rows:
        all_ids.add(r.track_id)
        if r.status == TrackStatus.CONFIRMED.value:
            confirmed_ids.add(r.track_id)

    first_track: dict[int, int] = {}
    last_id: dict[int, int] = {}
    was_matched: dict[int, bool] = {}
    frag = {g: 0 for g in first_truth}
    switches = {g: 0 for g in first_truth}
    history: dict[int, list[int]] = {g: [] for g in first_truth}
    for t in sorted(set(by_time) | set(truth_by_time)):
        conf = sorted((r.track_id, r.x, r.y) for r in by_time.get(t, []) if r.status == TrackStatus.CONFIRMED.value)
        truths = sorted(truth_by_time.get(t, []))
        assign = match_frame(conf, truths, match_radius_m)
        for gid, _, _ in truths:
            tid = assign.get(gid)
            if tid is None:
                if was_matched.get(gid):
                    was_matched[gid] = False
                continue
            assigned_ids.add(tid)
            first_track.setdefault(gid, t)
            if gid in last_id:
                if not was_matched[gid]:
                    frag[gid] += 1
                if last_id[gid] != tid:
                    switches[gid] += 1
            if not history[gid] or history[gid][-1] != tid:
                history[gid].append(tid)
            last_id[gid] = tid
            was_matched[gid] = True

    targets = []
    for gid in sorted(first_truth):
        ft = first_track.get(gid)
        targets.append(TargetScore(gid, first_truth[gid], ft,
                                   None if ft is None else round((ft - first_truth[gid]) * 1e-6, 6),
                                   frag[gid], switches[gid], history[gid]))
    false_ids = sorted(confirmed_ids - assigned_ids)
    return TrackScore(len(confirmed_ids), len(all_ids - confirmed_ids), len(first_truth), len(false_ids),
                      sum(frag.values()), sum(switches.values()), targets, false_ids)


def report(map_score: MapScore | None, track_score: TrackScore | None) -> dict:
    out: dict = {}
    if map_score is not None:
        out["map"] = asdict(map_score)
    if track_score is not None:
        out["tracks"] = asdict(track_score)
    return out


def flat_metrics(rep: dict) -> list[tuple[str, object]]:
    rows = []
    if "map" in rep:
        rows += [(f"map.{k}", v) for k, v in rep["map"].items()]
    if "tracks" in rep:
        tr = rep["tracks"]
        for k in ("confirmed_track_count", "tentative_track_count", "true_target_count", "false_track_count",
                  "fragmentation", "id_switches"):
            rows.append((f"tracks.{k}", tr[k]))
        for t in tr["targets"]:
            rows.append((f"target{t['target_id']}.time_to_first_track_s", t["time_to_first_track_s"]))
    return rows


def write_report(json_path, csv_path, rep: dict) -> None:
    Path(json_path).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    lines = ["metric,value"]
    for k, v in flat_metrics(rep):
        lines.append(f"{k},{'' if v is None else (f'{v:.6f}' if isinstance(v, float) else v)}")
    Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
