"""Scenario directories: sequence inputs plus ground-truth files, written and read as a set."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import GridSpec
from .ingest import (InputError, SequenceBundle, load_calibration, load_enc, load_lidar_sequence, load_masks,
                     load_poses, write_calibration, write_enc, write_lidar_sequence, write_masks, write_poses)
from .maps import BinaryMap, read_map, write_map
from .simulator import GroundTruth, ScenarioSpec

TRUTH_HEADER = "timestamp_us,target_id,x,y"


def write_truth(path, rows: list[tuple[int, int, float, float]]) -> None:
    lines = [TRUTH_HEADER] + [f"{t},{i},{x:.6f},{y:.6f}" for t, i, x, y in sorted(rows)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_truth(path) -> list[tuple[int, int, float, float]]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != TRUTH_HEADER:
        raise InputError(f"{path}:1: expected header {TRUTH_HEADER!r}")
    rows = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        f = line.split(",")
        try:
            if len(f) != 4:
                raise ValueError("expected 4 fields")
            rows.append((int(f[0]), int(f[1]), float(f[2]), float(f[3])))
        except ValueError as exc:
            raise InputError(f"{path}:{n}: {exc}") from exc
    return sorted(rows)


def write_dataset(out_dir, spec: ScenarioSpec, bundle: SequenceBundle, truth: GroundTruth) -> dict[str, Path]:
    """Write every input and truth file of a generated scenario; returns name -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"lidar": out / "lidar.csv", "poses": out / "poses.csv", "calibration": out / "calibration.json",
             "enc": out / "enc.geojson", "truth": out / "truth.csv", "scenario": out / "scenario.json"}
    write_lidar_sequence(paths["lidar"], bundle.frames)
    write_poses(paths["poses"], bundle.poses)
    write_calibration(paths["calibration"], bundle.cameras)
    write_enc(paths["enc"], bundle.enc)
    for cam in bundle.cameras:
        paths[f"masks_{cam.name}"] = out / f"masks_{cam.name}.json"
        write_masks(paths[f"masks_{cam.name}"], bundle.masks.get(cam.name, []))
    write_truth(paths["truth"], truth.target_rows)
    prov = {"scenario": spec.name, "seed": spec.seed}
    paths["truth_map"] = write_map(out / "truth_map", truth.truth_map, prov)
    paths["docked_map"] = write_map(out / "docked_footprint", truth.docked_footprint, prov)
    paths["coverage_map"] = write_map(out / "coverage_region", truth.coverage_region, prov)
    paths["scenario"].write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def load_bundle(lidar, poses, calibration, masks: dict[str, Path], enc, grid: GridSpec,
                mask_tolerance_s: float = 0.05) -> SequenceBundle:
    """Load a sequence; a missing mask file is an error, an empty mask list is allowed."""
    cameras = load_calibration(calibration)
    mask_frames = {}
    for cam in cameras:
        if cam.name not in masks:
            raise InputError(f"no mask file configured for camera {cam.name!r}")
        mask_frames[cam.name] = load_masks(masks[cam.name])
    return SequenceBundle(load_lidar_sequence(lidar), load_poses(poses), cameras, mask_frames, grid,
                          load_enc(enc), mask_tolerance_s)


def load_map_checked(path, grid: GridSpec | None = None) -> BinaryMap:
    path = Path(path)
    if not path.with_suffix(".pgm").exists() or not path.with_suffix(".json").exists():
        raise InputError(f"{path}: map raster or metadata missing")
    m = read_map(path)
    if grid is not None and m.grid != grid:
        raise InputError(f"{path}: map grid {m.grid} does not match configured grid {grid}")
    return m


def trajectories(rows: list[tuple[int, int, float, float]]) -> dict[int, np.ndarray]:
    out: dict[int, list] = {}
    for t, i, x, y in rows:
        out.setdefault(i, []).append((x, y))
    return {k: np.array(v) for k, v in out.items()}
