import json
import shutil

import pytest
import yaml

from nearshore.cli import main
from nearshore.simulator import builtin_scenarios


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("kayak")
    assert main(["pipeline", "--scenario", "kayak_undock", "--seed", "0", "--out", str(out)]) == 0
    return out


def test_pipeline_outputs(run_dir):
    for name in ("map.pgm", "map.json", "map_boundary.geojson", "tracks.csv", "detections.csv",
                 "track_summary.json", "overview.svg", "report.json", "metrics.csv", "data/truth.csv"):
        assert (run_dir / name).exists(), name
    rep = json.loads((run_dir / "report.json").read_text())
    assert rep["tracks"]["confirmed_track_count"] == 2 and rep["tracks"]["false_track_count"] == 0
    assert rep["map"]["iou"] > 0.8
    svg = (run_dir / "overview.svg").read_text()
    assert svg.startswith("<svg") and "<polyline" in svg


def test_track_variant_none_has_more_tracks(run_dir, tmp_path):
    out = tmp_path / "none"
    args = ["track", "--data", str(run_dir / "data"), "--out", str(out), "--map-variant", "none"]
    assert main(args) == 0
    none = json.loads((out / "track_summary.json").read_text())
    precise = json.loads((run_dir / "track_summary.json").read_text())
    assert none["map_variant"] == "none"
    assert none["confirmed_track_count"] > precise["confirmed_track_count"]


def test_track_needs_map(run_dir, tmp_path):
    args = ["track", "--data", str(run_dir / "data"), "--out", str(tmp_path), "--map-variant", "precise"]
    assert main(args) == 2


def test_eval_shuffled_tracks_identical(run_dir, tmp_path):
    lines = (run_dir / "tracks.csv").read_text().splitlines()
    shuffled = tmp_path / "tracks.csv"
    shuffled.write_text("\n".join([lines[0], *reversed(lines[1:])]) + "\n")
    shutil.copy(run_dir / "map.pgm", tmp_path / "map.pgm")
    shutil.copy(run_dir / "map.json", tmp_path / "map.json")
    assert main(["eval", "--data", str(run_dir / "data"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "report.json").read_bytes() == (run_dir / "report.json").read_bytes()
    assert (tmp_path / "metrics.csv").read_bytes() == (run_dir / "metrics.csv").read_bytes()


def test_eval_missing_truth(run_dir, tmp_path):
    assert main(["eval", "--data", str(tmp_path), "--out", str(run_dir), "--tracks",
                 str(run_dir / "tracks.csv")]) == 2


def test_unknown_scenario(tmp_path, capsys):
    assert main(["simulate", "--scenario", "atlantis", "--out", str(tmp_path)]) == 2
    assert "unknown scenario" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    assert main(["simulate", "--seed", "-1", "--scenario", "maneuver"]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["map", "--config", str(tmp_path / "missing.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("tracker: {bogus: 1}\n")
    assert main(["map", "--config", str(bad)]) == 2
    assert main(["map", "--data", str(tmp_path), "--out", str(tmp_path)]) == 2  # no inputs


def _short_spec(tmp_path, seconds):
    spec = builtin_scenarios()["docked_boats_mapping"]
    spec.duration_s = seconds
    p = tmp_path / "spec.yaml"
    p.write_text(yaml.safe_dump(spec.to_dict()))
    return p


def test_simulate_seed_determinism(tmp_path):
    spec = _short_spec(tmp_path, 1.0)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--spec", str(spec), "--seed", "7", "--out", str(a)]) == 0
    assert main(["simulate", "--spec", str(spec), "--seed", "7", "--out", str(b)]) == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir()) and "lidar.csv" in files
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_short_sequence_fails(tmp_path, capsys):
    spec = _short_spec(tmp_path, 3.0)
    data = tmp_path / "data"
    assert main(["simulate", "--spec", str(spec), "--out", str(data)]) == 0
    assert main(["map", "--data", str(data), "--out", str(tmp_path / "out")]) == 1
    assert "window" in capsys.readouterr().err.lower()


def test_no_masks_maps_the_boats(tmp_path):
    data = tmp_path / "data"
    assert main(["simulate", "--scenario", "docked_boats_mapping", "--out", str(data)]) == 0
    reports = {}
    for flag in ([], ["--no-masks"]):
        out = tmp_path / ("naive" if flag else "masked")
        assert main(["map", "--data", str(data), "--out", str(out), *flag]) == 0
        (out / "tracks.csv").write_text("timestamp_us,track_id,status,x,y,vx,vy,r,v,P_xx,P_xy,P_yy\n")
        assert main(["eval", "--data", str(data), "--out", str(out)]) == 0
        reports[out.name] = json.loads((out / "report.json").read_text())["map"]
    assert reports["masked"]["docked_exclusion_rate"] >= 0.95
    assert reports["naive"]["docked_exclusion_rate"] <= 0.20


def test_parallel_configs(tmp_path):
    paths = []
    for seed in (1, 2):
        p = tmp_path / f"c{seed}.yaml"
        p.write_text(yaml.safe_dump({"scenario": "maneuver", "seed": seed, "data_dir": f"d{seed}",
                                     "out_dir": f"o{seed}"}))
        paths += ["--config", str(p)]
    assert main(["pipeline", *paths, "--jobs", "2"]) == 0
    for seed in (1, 2):
        assert (tmp_path / f"o{seed}" / "report.json").exists()
