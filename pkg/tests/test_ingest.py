import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
import shapely
from shapely.geometry import Polygon as ShapelyPolygon

from nearshore.geometry import GridSpec
from nearshore.ingest import (EncPolygonSet, InputError, LidarFrame, MaskFrame, Polygon, load_calibration, load_enc,
                              load_lidar_sequence, load_masks, load_poses, match_mask_to_frame, parse_enc,
                              rasterize_enc, spans_from_pixels, write_calibration, write_enc,
                              write_lidar_sequence, write_masks, write_poses)


def test_lidar_three_frames(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("timestamp_us,x,y,z\n10,1,2,3\n10,4,5,6\n20,0,0,1\n30,1,1,1\n")
    frames = load_lidar_sequence(p)
    assert [f.timestamp_us for f in frames] == [10, 20, 30]
    assert frames[0].points.tolist() == [[1, 2, 3], [4, 5, 6]]


def test_lidar_nan_names_line(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("timestamp_us,x,y,z\n10,1,2,3\n10,nan,5,6\n")
    with pytest.raises(InputError, match=r"l\.csv:3"):
        load_lidar_sequence(p)


def test_lidar_empty_and_errors(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("timestamp_us,x,y,z\n")
    assert load_lidar_sequence(p) == []
    p.write_text("timestamp_us,x,y,z\n20,1,2,3\n10,1,2,3\n")
    with pytest.raises(InputError, match="non-monotonic"):
        load_lidar_sequence(p)
    p.write_text("t,x,y,z\n")
    with pytest.raises(InputError, match="header"):
        load_lidar_sequence(p)
    with pytest.raises(InputError, match="not found"):
        load_lidar_sequence(tmp_path / "missing.csv")


def test_mask_examples(tmp_path):
    doc = [{"timestamp_us": 1, "width": 10, "height": 5, "instances": []},
           {"timestamp_us": 2, "width": 10, "height": 5,
            "instances": [{"rows": [{"y": 1, "spans": [[2, 6]]}]}, {"rows": [{"y": 1, "spans": [[4, 8]]}]}]}]
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc))
    frames = load_masks(p)
    assert frames[0].instances == []
    assert len(frames[1].instances) == 2
    assert frames[1].bitmap()[1].tolist() == [False, False] + [True] * 6 + [False, False]
    doc[1]["instances"][0]["rows"][0]["spans"] = [[10, 11]]
    p.write_text(json.dumps(doc))
    with pytest.raises(InputError):
        load_masks(p)


def test_spans_from_pixels_round_trip():
    rng = np.random.default_rng(0)
    px = rng.integers(0, 30, size=(200, 2))
    mf = MaskFrame(0, 30, 30, [spans_from_pixels(px)])
    img = np.zeros((30, 30), bool)
    img[px[:, 1], px[:, 0]] = True
    assert np.array_equal(mf.bitmap(), img)


def test_match_mask_examples():
    masks = [MaskFrame(t, 4, 4) for t in (1_000_000, 1_100_000)]
    assert match_mask_to_frame(masks, 1_000_000) is masks[0]
    assert match_mask_to_frame(masks, 1_130_000, 0.05) is masks[1]
    assert match_mask_to_frame(masks, 1_180_000, 0.05) is None
    assert match_mask_to_frame([], 0) is None


def _square(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]], float)


def test_rasterize_square_block():
    g = GridSpec(0.0, 0.0, 0.5, 30, 30)
    m = rasterize_enc(EncPolygonSet([Polygon(_square(0, 0, 10, 10))]), g)
    assert m.count == 400
    assert m.cells[:20, :20].all()
    assert rasterize_enc(EncPolygonSet(), g).count == 0


def test_rasterize_hole_leaves_ring():
    g = GridSpec(0.0, 0.0, 1.0, 10, 10)
    m = rasterize_enc(EncPolygonSet([Polygon(_square(0, 0, 5, 5), [_square(1, 1, 4, 4)])]), g)
    want = np.zeros((10, 10), bool)
    want[:5, :5] = True
    want[1:4, 1:4] = False
    assert np.array_equal(m.cells, want)


def test_degenerate_polygon_rejected():
    with pytest.raises(InputError, match="degenerate"):
        parse_enc({"type": "Polygon", "coordinates": [[[0, 0], [1, 1], [0, 0]]]})


polygon_pts = st.lists(st.tuples(st.floats(-9, 9), st.floats(-9, 9)), min_size=3, max_size=8)


@settings(max_examples=60, deadline=None)
@given(polygon_pts)
def test_rasterize_matches_shapely(pts):
    shp = ShapelyPolygon(pts)
    if not shp.is_valid or shp.area < 1e-3:
        return
    g = GridSpec(-10.0, -10.0, 0.5, 40, 40)
    ring = np.array(pts + [pts[0]], float)
    m = rasterize_enc(EncPolygonSet([Polygon(ring)]), g)
    rev = rasterize_enc(EncPolygonSet([Polygon(ring[::-1])]), g)
    assert m == rev
    cx, cy = g.cell_centers()
    want = shapely.contains_xy(shp, cx, cy)
    on_edge = shapely.distance(shp.exterior, shapely.points(cx, cy)) < 1e-9
    # centres exactly on an edge may go either way
    assert np.array_equal(m.cells[~on_edge], want[~on_edge])


def test_rasterized_area_converges():
    tri = np.array([[0, 0], [8, 1], [3, 7], [0, 0]], float)
    area = ShapelyPolygon(tri[:-1]).area
    errs = []
    for cell in (1.0, 0.1):
        n = int(10 / cell)
        m = rasterize_enc(EncPolygonSet([Polygon(tri)]), GridSpec(0.0, 0.0, cell, n, n))
        errs.append(abs(m.count * cell * cell - area) / area)
    assert errs[1] < 0.10
    assert errs[1] <= errs[0]


def test_file_round_trips_are_byte_identical(tmp_path, kayak):
    _, bundle, _ = kayak
    frames = bundle.frames[:5]
    write_lidar_sequence(tmp_path / "a.csv", frames)
    write_lidar_sequence(tmp_path / "b.csv", load_lidar_sequence(tmp_path / "a.csv"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    for f, g in zip(frames, load_lidar_sequence(tmp_path / "a.csv")):
        assert np.array_equal(f.points, g.points)

    write_poses(tmp_path / "p.csv", bundle.poses)
    write_poses(tmp_path / "q.csv", load_poses(tmp_path / "p.csv"))
    assert (tmp_path / "p.csv").read_bytes() == (tmp_path / "q.csv").read_bytes()

    masks = bundle.masks["port"]
    write_masks(tmp_path / "m.json", masks)
    write_masks(tmp_path / "n.json", load_masks(tmp_path / "m.json"))
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "n.json").read_bytes()

    write_calibration(tmp_path / "c.json", bundle.cameras)
    cams = load_calibration(tmp_path / "c.json")
    write_calibration(tmp_path / "d.json", cams)
    assert (tmp_path / "c.json").read_bytes() == (tmp_path / "d.json").read_bytes()
    assert [c.name for c in cams] == ["port", "starboard"]

    write_enc(tmp_path / "e.geojson", bundle.enc)
    write_enc(tmp_path / "f.geojson", load_enc(tmp_path / "e.geojson"))
    assert (tmp_path / "e.geojson").read_bytes() == (tmp_path / "f.geojson").read_bytes()


def test_single_camera_calibration(tmp_path):
    doc = {"K": {"fx": 500, "fy": 500, "cx": 320, "cy": 240, "width": 640, "height": 480},
           "H_cam_lidar": {"quaternion_wxyz": [1, 0, 0, 0], "translation": [0, 0, 0]}}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(doc))
    (cam,) = load_calibration(p)
    assert cam.intrinsics.fx == 500 and cam.name == "cam0"


def test_pose_quaternion_checked(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("timestamp_us,x,y,z,qw,qx,qy,qz\n0,0,0,0,1,0.1,0,0\n")
    with pytest.raises(InputError, match=":2"):
        load_poses(p)


def test_lidar_frame_shape():
    assert LidarFrame(0, []).points.shape == (0, 3)
