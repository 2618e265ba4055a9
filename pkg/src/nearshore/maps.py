"""Binary static-structure maps and their raster/vector file formats."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import GridSpec


class GridMismatchError(ValueError):
    pass


@dataclass(eq=False)
class BinaryMap:
    """Per-cell static flag, indexed ``cells[row, col]`` with row 0 at the grid origin."""

    grid: GridSpec
    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.shape != self.grid.shape:
            raise GridMismatchError(f"cells shape {self.cells.shape} != grid shape {self.grid.shape}")

    @classmethod
    def empty(cls, grid: GridSpec) -> "BinaryMap":
        return cls(grid, np.zeros(grid.shape, dtype=bool))

    def __eq__(self, other) -> bool:
        return (isinstance(other, BinaryMap) and self.grid == other.grid
                and np.array_equal(self.cells, other.cells))

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    def copy(self) -> "BinaryMap":
        return BinaryMap(self.grid, self.cells.copy())

    def is_static_xy(self, xy: np.ndarray) -> np.ndarray:
        """Static flag for world (x, y) rows; points outside the grid return False."""
        from .geometry import world_to_cells

        cols, rows, inside = world_to_cells(xy, self.grid)
        out = np.zeros(len(cols), dtype=bool)
        out[inside] = self.cells[rows[inside], cols[inside]]
        return out


def require_same_grid(a: BinaryMap, b: BinaryMap) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"grid specs differ: {a.grid} vs {b.grid}")


# PGM rasters are written north-up: the first image row is the grid's top row.

def write_pgm(path, m: BinaryMap, binary: bool = True) -> None:
    img = np.where(m.cells[::-1], 255, 0).astype(np.uint8)
    h, w = img.shape
    path = Path(path)
    if binary:
        path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())
    else:
        lines = [f"P2\n{w} {h}\n255"] + [" ".join(str(v) for v in row) for row in img]
        path.write_text("\n".join(lines) + "\n", encoding="ascii")


def read_pgm(path) -> np.ndarray:
    """Read a P2/P5 graymap and return a bool array in grid orientation (row 0 = origin)."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a PGM file")
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    w, h, maxval = (int(t) for t in tokens)
    if magic == b"P5":
        pos += 1
        img = np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w)
    else:
        img = np.array(data[pos:].split(), dtype=np.int64).reshape(h, w)
    return (img[::-1] > maxval // 2).copy()


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_map(path, m: BinaryMap, provenance: dict | None = None) -> Path:
    """Write ``<path>.pgm`` plus a ``<path>.json`` sidecar with the grid spec."""
    path = Path(path)
    pgm = path.with_suffix(".pgm")
    write_pgm(pgm, m)
    meta = {"grid": m.grid.to_dict(), "row_order": "north_up", "static_value": 255,
            "provenance": provenance or {}}
    pgm.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return pgm


def read_map(path) -> BinaryMap:
    pgm = Path(path).with_suffix(".pgm")
    meta = json.loads(pgm.with_suffix(".json").read_text())
    grid = GridSpec.from_dict(meta["grid"])
    return BinaryMap(grid, read_pgm(pgm))


def boundary_geojson(m: BinaryMap) -> dict:
    """Static region as a GeoJSON FeatureCollection of (multi)polygons in world coordinates."""
    from shapely.geometry import box, mapping
    from shapely.ops import unary_union

    g = m.grid
    boxes = []
    for row in range(g.n_rows):
        line = m.cells[row]
        if not line.any():
            continue
        padded = np.concatenate([[False], line, [False]]).astype(np.int8)
        edges = np.flatnonzero(np.diff(padded))
        y0 = g.origin_y + row * g.cell_size
        for start, stop in zip(edges[::2], edges[1::2]):
            boxes.append(box(g.origin_x + start * g.cell_size, y0,
                             g.origin_x + stop * g.cell_size, y0 + g.cell_size))
    features = []
    if boxes:
        features.append({"type": "Feature", "properties": {"class": "static"},
                         "geometry": mapping(unary_union(boxes))})
    return {"type": "FeatureCollection", "features": features}
