"""Command-line entry point: simulate, map, track, eval and the full pipeline."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import ConfigError, PipelineConfig, load_config
from .dataset import load_bundle, load_map_checked, load_truth, trajectories, write_dataset
from .detector import write_detections
from .evaluator import report, score_map, score_tracks, write_report
from .geometry import GridSpec
from .ingest import InputError, load_calibration
from .mapper import WindowNotFullError
from .maps import boundary_geojson, config_hash, write_map
from .pipeline import MAP_VARIANTS, run_mapping, run_tracking, variant_map
from .simulator import FalsePositiveSpec, ScenarioSpec, builtin_scenarios, degrade_masks, generate, mask_anchor_frames
from .svg import write_overview
from .tracker import load_tracks, track_summary, write_summary, write_tracks

log = logging.getLogger("nearshore")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise UsageError(f"{what} not found: {path}")
    return Path(path)


def _grid(cfg: PipelineConfig) -> GridSpec:
    grid = GridSpec.from_dict(cfg.grid)
    if abs(grid.cell_size - cfg.mapper.cell_size_m) > 1e-12:
        raise ConfigError(f"grid cell_size {grid.cell_size} differs from mapper.cell_size_m {cfg.mapper.cell_size_m}")
    return grid


# ---------------------------------------------------------------- simulate

def _scenario_spec(cfg: PipelineConfig, args) -> ScenarioSpec:
    spec_file = getattr(args, "spec", None)
    if spec_file:
        path = _require(Path(spec_file), "scenario spec")
        try:
            spec = ScenarioSpec.from_dict(yaml.safe_load(path.read_text(encoding="utf-8")))
        except (TypeError, ValueError, yaml.YAMLError) as exc:
            raise ConfigError(f"{path}: invalid scenario spec: {exc}") from exc
        return spec.with_seed(cfg.seed)
    name = getattr(args, "scenario", None) or cfg.scenario
    if not name:
        raise UsageError("no scenario given (use --scenario NAME or --spec FILE)")
    scenarios = builtin_scenarios(cfg.seed)
    if name not in scenarios:
        raise UsageError(f"unknown scenario {name!r}; available: {', '.join(sorted(scenarios))}")
    return scenarios[name]


def simulate(cfg: PipelineConfig, args) -> dict:
    spec = _scenario_spec(cfg, args)
    bundle, truth = generate(spec)
    fn_rate = getattr(args, "mask_fn_rate", 0.0) or 0.0
    fp_rate = getattr(args, "mask_fp_rate", 0.0) or 0.0
    if fn_rate or fp_rate:
        masks = {}
        for i, cam in enumerate(bundle.cameras):
            frames = bundle.masks[cam.name]
            fp = FalsePositiveSpec(fp_rate, anchors=mask_anchor_frames(truth, cam.name, frames))
            masks[cam.name] = degrade_masks(frames, fn_rate, fp, cfg.seed * 1000 + i + 1)
        bundle = dataclasses.replace(bundle, masks=masks)
    # for simulate, --out names the scenario directory
    standalone = getattr(args, "command", None) == "simulate"
    out = cfg.out_path if standalone and getattr(args, "out", None) else cfg.data_path
    write_dataset(out, spec, bundle, truth)
    summary = {
        "scenario": spec.name, "seed": spec.seed, "frames": len(bundle.frames),
        "targets": len(truth.target_names),
        "mean_points_per_frame": round(float(np.mean([len(f.points) for f in bundle.frames])), 3),
        "clutter_points_total": int(sum(truth.clutter_counts)),
        "clutter_points_per_frame": round(float(np.mean(truth.clutter_counts)), 3) if truth.clutter_counts else 0.0,
        "data_dir": str(out),
    }
    print(f"simulated {spec.name} (seed {spec.seed}): {summary['frames']} frames, {summary['targets']} targets, "
          f"{summary['mean_points_per_frame']} points/frame, {summary['clutter_points_per_frame']} clutter/frame "
          f"-> {out}")
    return summary


# ---------------------------------------------------------------- map

def _bundle(cfg: PipelineConfig):
    grid = _grid(cfg)
    for name in ("lidar", "poses", "calibration", "enc"):
        _require(cfg.input(name), f"{name} input")
    cameras = load_calibration(cfg.input("calibration"))
    masks = {c.name: _require(cfg.mask_path(c.name), f"mask file for camera {c.name!r}") for c in cameras}
    return load_bundle(cfg.input("lidar"), cfg.input("poses"), cfg.input("calibration"), masks,
                       cfg.input("enc"), grid, cfg.mask_tolerance_s)


def make_map(cfg: PipelineConfig, bundle=None):
    bundle = bundle or _bundle(cfg)
    result = run_mapping(bundle, cfg.mapper)
    out = cfg.out_path
    out.mkdir(parents=True, exist_ok=True)
    prov = {"config_hash": config_hash({"mapper": cfg.mapper.to_dict(), "grid": cfg.grid,
                                        "mask_tolerance_s": cfg.mask_tolerance_s}),
            "inputs": {k: getattr(cfg.inputs, k) for k in ("lidar", "poses", "calibration", "enc")},
            "stage_counts": result.stage_counts()}
    write_map(out / "map", result.final, prov)
    (out / "map_boundary.geojson").write_text(json.dumps(boundary_geojson(result.final)) + "\n", encoding="utf-8")
    counts = result.stage_counts()
    for stage, n in counts.items():
        log.info("map stage %s: %d static cells", stage, n)
    print("map: raw static {raw_static}, post-morphology {post_morphology}, post-ENC-merge {post_enc_merge} cells"
          .format(**counts) + f" -> {out / 'map.pgm'}")
    return result, bundle


# ---------------------------------------------------------------- track

def make_tracks(cfg: PipelineConfig, bundle=None, precise=None, map_path=None):
    bundle = bundle or _bundle(cfg)
    variant = cfg.experiment.map_variant
    if variant in ("dilated", "precise") and precise is None:
        path = Path(map_path) if map_path else cfg.out_path / "map.pgm"
        _require(path.with_suffix(".pgm"), f"map for variant {variant!r}")
        precise = load_map_checked(path, bundle.grid)
    m = variant_map(variant, bundle, precise, cfg.experiment.margin_m)
    res = run_tracking(bundle, m, variant, cfg.detector, cfg.tracker)
    out = cfg.out_path
    out.mkdir(parents=True, exist_ok=True)
    write_tracks(out / "tracks.csv", res.rows)
    write_detections(out / "detections.csv", res.all_detections)
    summary = track_summary(res.rows)
    summary["map_variant"] = variant
    if variant == "dilated":
        summary["margin_m"] = cfg.experiment.margin_m
    write_summary(out / "track_summary.json", summary)
    truth_path = cfg.input("truth")
    truth = trajectories(load_truth(truth_path)) if truth_path.exists() else None
    det_xy = np.array([[d.x, d.y] for d in res.all_detections]).reshape(-1, 2)
    write_overview(out / "overview.svg", m, det_xy, res.rows, truth, title=f"map variant: {variant}")
    print(f"track ({variant}): {summary['confirmed_track_count']} confirmed, "
          f"{summary['tentative_only_track_count']} tentative-only tracks -> {out / 'tracks.csv'}")
    return res


# ---------------------------------------------------------------- eval

def evaluate(cfg: PipelineConfig, args=None) -> dict:
    out = cfg.out_path
    tracks_path = _require(Path(getattr(args, "tracks", None) or out / "tracks.csv"), "track table")
    truth_path = _require(Path(getattr(args, "truth", None) or cfg.input("truth")), "truth file")
    map_arg = getattr(args, "map", None)
    map_path = Path(map_arg) if map_arg else out / "map.pgm"
    truth_map_arg = getattr(args, "truth_map", None)
    truth_map_path = Path(truth_map_arg) if truth_map_arg else cfg.input("truth_map")
    ms = None
    if map_arg or truth_map_arg or map_path.exists():
        _require(map_path.with_suffix(".pgm"), "map")
        _require(truth_map_path.with_suffix(".pgm"), "truth map")
        est = load_map_checked(map_path)
        truth_map = load_map_checked(truth_map_path)
        docked = load_map_checked(_require(cfg.input("docked_map"), "docked footprint map"))
        cov = load_map_checked(_require(cfg.input("coverage_map"), "coverage region map"))
        ms = score_map(est, truth_map, docked, cov)
    ts = score_tracks(load_tracks(tracks_path), load_truth(truth_path))
    rep = report(ms, ts)
    out.mkdir(parents=True, exist_ok=True)
    write_report(out / "report.json", out / "metrics.csv", rep)
    if ms is not None:
        print(f"map: IoU {ms.iou:.3f}, docked exclusion {ms.docked_exclusion_rate:.3f}, "
              f"coverage {ms.static_coverage_rate:.3f}")
    firsts = ", ".join(f"target {t.target_id}: {t.time_to_first_track_s}" for t in ts.targets)
    print(f"tracks: {ts.confirmed_track_count} confirmed, {ts.false_track_count} false, "
          f"{ts.id_switches} id switches; first confirmed track (s) {firsts} -> {out / 'report.json'}")
    return rep


# ---------------------------------------------------------------- pipeline

def run_pipeline(cfg: PipelineConfig, args=None) -> dict:
    if getattr(args, "scenario", None) or getattr(args, "spec", None) or cfg.scenario:
        simulate(cfg, args)
    result, bundle = make_map(cfg)
    make_tracks(cfg, bundle, result.final)
    return evaluate(cfg, None)


def _pipeline_worker(job: tuple[str | None, dict]) -> int:
    path, overrides = job
    ns = argparse.Namespace(**overrides)
    try:
        cfg = _apply_overrides(load_config(path), ns)
        run_pipeline(cfg, ns)
        return EXIT_OK
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported per config
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


# ---------------------------------------------------------------- argument handling

def _apply_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = str(Path(args.out).resolve())
    if getattr(args, "data", None):
        cfg.data_dir = str(Path(args.data).resolve())
    elif getattr(args, "out", None) and getattr(args, "command", None) == "pipeline":
        cfg.data_dir = str(Path(args.out).resolve() / "data")
    if getattr(args, "scenario", None):
        cfg.scenario = args.scenario
    if getattr(args, "no_masks", False):
        cfg.mapper.use_masks = False
    if getattr(args, "map_variant", None):
        cfg.experiment.map_variant = args.map_variant
    if getattr(args, "margin", None) is not None:
        if args.margin < 0:
            raise UsageError("--margin must be non-negative")
        cfg.experiment.margin_m = args.margin
    return cfg


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", default=argparse.SUPPRESS,
                        help="YAML pipeline configuration (pipeline accepts several)")
    common.add_argument("--seed", type=_seed, default=argparse.SUPPRESS, help="random seed override")
    common.add_argument("--out", default=argparse.SUPPRESS,
                        help="output directory (for simulate: where the scenario files go)")
    common.add_argument("--data", default=argparse.SUPPRESS, help="scenario data directory override")
    common.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS, help="debug logging")

    p = argparse.ArgumentParser(prog="nearshore", parents=[common],
                                description="Static harbour mapping with vessel masks and map-aided tracking.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", parents=[common], help="generate a synthetic scenario")
    src = sp.add_mutually_exclusive_group()
    src.add_argument("--scenario", help="built-in scenario name")
    src.add_argument("--spec", help="scenario spec file (JSON or YAML)")
    sp.add_argument("--mask-fn-rate", type=float, default=0.0, help="mask false-negative rate")
    sp.add_argument("--mask-fp-rate", type=float, default=0.0, help="spurious land masks per mask frame")
    sp.add_argument("--list", action="store_true", help="list built-in scenarios and exit")

    mp = sub.add_parser("map", parents=[common], help="build the static map")
    mp.add_argument("--no-masks", action="store_true", help="naive accumulation: ignore vessel masks")

    tp = sub.add_parser("track", parents=[common], help="detect and track against a map variant")
    tp.add_argument("--map-variant", choices=MAP_VARIANTS)
    tp.add_argument("--margin", type=float, help="dilation margin in metres for the dilated variant")
    tp.add_argument("--map", help="map raster (default: <out>/map.pgm)")

    ep = sub.add_parser("eval", parents=[common], help="score map and tracks against truth")
    ep.add_argument("--tracks", help="track table (default: <out>/tracks.csv)")
    ep.add_argument("--truth", help="truth trajectories (default: from config)")
    ep.add_argument("--map", help="estimated map raster (default: <out>/map.pgm)")
    ep.add_argument("--truth-map", help="truth map raster (default: from config)")

    pp = sub.add_parser("pipeline", parents=[common], help="simulate (optional), map, track and eval")
    pp.add_argument("--scenario", help="built-in scenario to simulate first")
    pp.add_argument("--map-variant", choices=MAP_VARIANTS)
    pp.add_argument("--margin", type=float)
    pp.add_argument("--no-masks", action="store_true")
    pp.add_argument("--jobs", type=int, default=1, help="parallel workers when several configs are given")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    configs = getattr(args, "config", None) or [None]
    try:
        if args.command == "simulate" and args.list:
            for name in sorted(builtin_scenarios()):
                print(name)
            return EXIT_OK
        if len(configs) > 1:
            if args.command != "pipeline":
                raise UsageError("only the pipeline command accepts several --config files")
            if getattr(args, "out", None):
                raise UsageError("--out cannot be combined with several configs")
            overrides = {k: v for k, v in vars(args).items() if k not in ("config", "jobs", "command")}
            jobs = [(c, overrides) for c in configs]
            with ProcessPoolExecutor(max_workers=max(1, args.jobs)) as pool:
                codes = list(pool.map(_pipeline_worker, jobs))
            return max(codes)
        cfg = _apply_overrides(load_config(configs[0]), args)
        if args.command == "simulate":
            simulate(cfg, args)
        elif args.command == "map":
            make_map(cfg)
        elif args.command == "track":
            make_tracks(cfg, map_path=args.map)
        elif args.command == "eval":
            evaluate(cfg, args)
        else:
            run_pipeline(cfg, args)
        return EXIT_OK
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, WindowNotFullError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
