import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Point, Polygon as ShapelyPolygon

from nearshore.dataset import write_dataset
from nearshore.geometry import in_image_mask, project_points
from nearshore.ingest import EncPolygonSet, MaskFrame, Polygon, match_mask_to_frame, rasterize_enc
from nearshore.mapper import PointLabel, classify_points
from nearshore.simulator import (PIER, FalsePositiveSpec, ScenarioSpec, Structure, TargetScript,
                                 builtin_scenarios, cast_rays, degrade_masks, generate)


WALL = Structure("wall", [[10.0, -1.0], [11.0, -1.0], [11.0, 1.0], [10.0, 1.0]])


def small_spec(**kw):
    base = dict(name="t", duration_s=0.3, structures=[WALL], clutter_rate=0.0, range_noise_std=0.0,
                angular_resolution_deg=1.0, ego_waypoints=[[0.0, 0.0, 0.0, 0.0]])
    base.update(kw)
    return ScenarioSpec(**base)


def world_xy(bundle, k):
    f = bundle.frames[k]
    return bundle.poses.at(f.timestamp_us).apply(f.points)[:, :2]


def test_single_wall():
    bundle, _ = generate(small_spec())
    xy = world_xy(bundle, 0)
    straight = xy[np.abs(xy[:, 1]) < 1e-9]
    assert straight.tolist() == [[10.0, 0.0]]
    # only rays within atan(1/10) of the axis hit the 2 m wall face
    assert len(xy) == 2 * int(math.degrees(math.atan(0.1))) + 1
    assert np.allclose(xy[:, 0], 10.0, atol=1e-6)


def test_static_frames_identical():
    bundle, _ = generate(small_spec())
    pts = [f.points for f in bundle.frames]
    assert all(np.array_equal(pts[0], p) for p in pts[1:])


def _first_hit_oracle(origin, angle, polys, max_range):
    best = math.inf
    d = (math.cos(angle), math.sin(angle))
    for poly in polys:
        for i in range(len(poly)):
            (x1, y1), (x2, y2) = poly[i], poly[(i + 1) % len(poly)]
            ex, ey = x2 - x1, y2 - y1
            den = d[0] * ey - d[1] * ex
            if abs(den) < 1e-12:
                continue
            px, py = x1 - origin[0], y1 - origin[1]
            t = (px * ey - py * ex) / den
            s = (px * d[1] - py * d[0]) / den
            if 1e-9 < t <= max_range and 0 <= s <= 1:
                best = min(best, t)
    return best


def test_target_occludes_wall():
    boat = TargetScript(1, "boat", [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]], [[0.0, 5.0, 0.0],
                                                                                          [1.0, 5.0, 0.0]])
    bundle, truth = generate(small_spec(targets=[boat]))
    xy = world_xy(bundle, 0)
    on_axis = xy[np.abs(xy[:, 1]) < 1e-9]
    assert on_axis.tolist() == [[4.5, 0.0]]
    assert truth.target_hits[1][0] > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_no_return_beyond_first_hit(seed):
    rng = np.random.default_rng(seed)
    polys = []
    for _ in range(3):
        c = rng.uniform(-15, 15, 2)
        if np.hypot(*c) < 3:
            c += 5
        w, h = rng.uniform(0.5, 4, 2)
        polys.append([[c[0] - w, c[1] - h], [c[0] + w, c[1] - h], [c[0] + w, c[1] + h], [c[0] - w, c[1] + h]])
    spec = small_spec(structures=[Structure(f"s{i}", p) for i, p in enumerate(polys)], duration_s=0.1,
                      angular_resolution_deg=3.0, max_range_m=30.0)
    bundle, _ = generate(spec)
    for x, y in world_xy(bundle, 0):
        r = math.hypot(x, y)
        assert r <= _first_hit_oracle((0.0, 0.0), math.atan2(y, x), polys, 30.0) + 1e-5


def test_cast_rays_matches_oracle():
    rng = np.random.default_rng(0)
    polys = [np.array([[3, -1], [5, -1], [5, 1], [3, 1]], float), np.array([[-6, 2], [-2, 2], [-2, 8]], float)]
    edges = np.vstack([np.hstack([p, np.roll(p, -1, axis=0)]) for p in polys])
    angles = rng.uniform(0, 2 * np.pi, 200)
    dist, _ = cast_rays(np.zeros(2), angles, edges, 50.0)
    oracle = [_first_hit_oracle((0, 0), a, polys, 50.0) for a in angles]
    assert np.allclose(dist, oracle, rtol=0, atol=1e-9, equal_nan=False)


def test_same_seed_byte_identical(tmp_path):
    spec = builtin_scenarios(7)["multi_pass"]
    spec.duration_s = 2.0
    a = write_dataset(tmp_path / "a", spec, *generate(spec))
    b = write_dataset(tmp_path / "b", spec, *generate(spec))
    for name in a:
        assert a[name].read_bytes() == b[name].read_bytes(), name
    other = spec.with_seed(8)
    c = write_dataset(tmp_path / "c", other, *generate(other))
    assert c["lidar"].read_bytes() != a["lidar"].read_bytes()


def _masks(n=200, per_frame=5):
    inst = np.array([[10, 0, 5]])
    return [MaskFrame(k, 64, 48, [inst + [0, j, j] for j in range(per_frame)]) for k in range(n)]


def test_degrade_examples():
    masks = _masks()
    same = degrade_masks(masks, 0.0, FalsePositiveSpec(0.0), seed=1)
    assert all(len(a.instances) == len(b.instances) and all(np.array_equal(x, y) for x, y in
                                                            zip(a.instances, b.instances))
               for a, b in zip(masks, same))
    assert all(m.instances == [] for m in degrade_masks(masks, 1.0, None, seed=1))
    kept = sum(len(m.instances) for m in degrade_masks(masks, 0.1, None, seed=2))
    dropped = 1000 - kept
    assert abs(dropped - 100) <= 3 * math.sqrt(1000 * 0.1 * 0.9)
    with pytest.raises(ValueError):
        degrade_masks(masks, 1.5, None, seed=0)


def test_false_positives_sit_on_anchors():
    masks = [MaskFrame(k, 64, 48) for k in range(100)]
    anchors = [np.array([[40, 30]])] * 100
    out = degrade_masks(masks, 0.0, FalsePositiveSpec(0.5, 4, 4, anchors), seed=3)
    n = sum(len(m.instances) for m in out)
    assert abs(n - 50) <= 3 * math.sqrt(50)
    for m in out:
        for inst in m.instances:
            assert inst[:, 0].min() == 28 and inst[:, 1].min() == 38 and inst[:, 2].max() == 42


def test_builtin_scenarios():
    specs = builtin_scenarios()
    assert {"kayak_undock", "docked_boats_mapping", "multi_pass", "maneuver"} <= set(specs)
    kayak = specs["kayak_undock"].targets[0]
    gap = ShapelyPolygon(kayak.polygon_at(0.0)).distance(ShapelyPolygon(PIER.polygon))
    assert gap <= 1.0
    assert specs["docked_boats_mapping"].targets == []
    turner = specs["maneuver"].targets[0]
    ts = np.arange(0.0, 24.0, 0.1)

    def course(t):
        a, b = turner.position(t), turner.position(t + 0.1)
        return math.atan2(b[1] - a[1], b[0] - a[0])

    change = max(abs(math.remainder(course(t + 2.0) - course(t), 2 * math.pi)) for t in ts)
    assert math.degrees(change) >= 90.0


def test_truth_map_is_rasterized_structures(docked):
    spec, bundle, truth = docked
    statics = EncPolygonSet([Polygon(np.vstack([s.polygon, s.polygon[:1]])) for s in spec.structures
                             if not s.vessel])
    assert truth.truth_map == rasterize_enc(statics, bundle.grid)
    assert truth.docked_map.count > 0 and not (truth.docked_map.cells & truth.truth_map.cells).any()


def test_oracle_masks_cover_vessel_points(docked):
    spec, bundle, truth = docked
    boats = [ShapelyPolygon(s.polygon).exterior for s in spec.structures if s.vessel]
    checked = 0
    for k in range(0, 40, 7):
        f = bundle.frames[k]
        pose = bundle.poses.at(f.timestamp_us)
        masks = {c.name: match_mask_to_frame(bundle.masks[c.name], f.timestamp_us) for c in bundle.cameras}
        lab = classify_points(f, masks, bundle.cameras, pose)
        seen = np.zeros(len(f.points), bool)
        for cam in bundle.cameras:
            uv, _, front = project_points(cam.cam_from_lidar.apply(f.points), cam.intrinsics)
            seen |= front & in_image_mask(uv, cam.intrinsics)
        # range noise moves points a few cm off the hull outline
        on_boat = np.array([min(b.distance(Point(x, y)) for b in boats) < 0.15 for x, y in lab.xy])
        sel = on_boat & seen
        checked += sel.sum()
        assert (lab.labels[sel] == PointLabel.VESSEL).all()
    assert checked > 50


def test_invalid_specs():
    with pytest.raises(ValueError):
        small_spec(duration_s=0.0)
    with pytest.raises(ValueError):
        small_spec(mask_rate_hz=20.0)
    with pytest.raises(ValueError):
        small_spec(targets=[TargetScript(1, "a", [[0, 0]], [[1.0, 0, 0], [0.5, 1, 1]])])
