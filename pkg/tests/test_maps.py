import numpy as np
import pytest
from shapely.geometry import shape

from nearshore.geometry import GridSpec
from nearshore.maps import (BinaryMap, GridMismatchError, boundary_geojson, read_map, read_pgm, require_same_grid,
                            write_map, write_pgm)

G = GridSpec(-5.0, -2.0, 0.5, 13, 7)


def random_map(seed=0):
    return BinaryMap(G, np.random.default_rng(seed).random(G.shape) < 0.3)


@pytest.mark.parametrize("binary", [True, False])
def test_pgm_round_trip(tmp_path, binary):
    m = random_map()
    write_pgm(tmp_path / "m.pgm", m, binary=binary)
    assert np.array_equal(read_pgm(tmp_path / "m.pgm"), m.cells)


def test_pgm_is_north_up(tmp_path):
    cells = np.zeros(G.shape, bool)
    cells[0, 0] = True  # south-west corner cell
    write_pgm(tmp_path / "m.pgm", BinaryMap(G, cells))
    data = (tmp_path / "m.pgm").read_bytes()
    pixels = np.frombuffer(data[-G.n_rows * G.n_cols:], np.uint8).reshape(G.shape)
    assert pixels[-1, 0] == 255 and pixels.sum() == 255


def test_map_with_sidecar(tmp_path):
    m = random_map(3)
    write_map(tmp_path / "map", m, {"config_hash": "abc"})
    back = read_map(tmp_path / "map.pgm")
    assert back == m


def test_boundary_area_matches_cells():
    m = random_map(5)
    geo = boundary_geojson(m)
    area = sum(shape(f["geometry"]).area for f in geo["features"])
    assert area == pytest.approx(m.count * G.cell_size**2)


def test_grid_mismatch():
    other = BinaryMap.empty(GridSpec(0.0, 0.0, 0.5, 13, 7))
    with pytest.raises(GridMismatchError):
        require_same_grid(random_map(), other)
    with pytest.raises(GridMismatchError):
        BinaryMap(G, np.zeros((2, 2), bool))
