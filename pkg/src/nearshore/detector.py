"""Map filtering, density clustering and centroid detections."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geometry import RigidTransform, world_to_cells
from .ingest import LidarFrame
from .maps import BinaryMap


@dataclass
class DetectorConfig:
    epsilon: float = 1.5
    min_points: int = 4

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.min_points < 1:
            raise ValueError("min_points must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Detection:
    timestamp_us: int
    x: float
    y: float
    n_points: int

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def filter_points_by_map(frame: LidarFrame, pose: RigidTransform, m: BinaryMap) -> np.ndarray:
    """World (x, y) of the frame's points that fall in water cells of the map."""
    if len(frame.points) == 0:
        return np.zeros((0, 2))
    xy = pose.apply(frame.points)[:, :2]
    return filter_xy(xy, m)


def filter_xy(xy: np.ndarray, m: BinaryMap) -> np.ndarray:
    cols, rows, inside = world_to_cells(xy, m.grid)
    keep = inside.copy()
    keep[inside] = ~m.cells[rows[inside], cols[inside]]
    return xy[keep]


@dataclass
class Clustering:
    clusters: list[np.ndarray]  # indices into the input, one array per cluster
    noise: np.ndarray
    labels: np.ndarray  # cluster number per point, -1 for noise


def dbscan_cluster(points: np.ndarray, cfg: DetectorConfig) -> Clustering:
    """Density clustering with an order-independent border rule.

    Core points have at least ``min_points`` neighbours within ``epsilon``
    (counting themselves). Cores are linked when within ``epsilon``; each
    connected group is a cluster seeded by its lexicographically smallest core.
    A border point joins the cluster of its nearest core neighbour, ties going
    to the cluster with the smaller seed. Clusters are returned in seed order.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return Clustering([], np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    tree = cKDTree(pts)
    pairs = tree.query_pairs(cfg.epsilon, output_type="ndarray")
    counts = np.ones(n, dtype=np.int64)
    np.add.at(counts, pairs[:, 0], 1)
    np.add.at(counts, pairs[:, 1], 1)
    core = counts >= cfg.min_points

    labels = np.full(n, -1, dtype=np.int64)
    core_idx = np.flatnonzero(core)
    if len(core_idx) == 0:
        return Clustering([], np.arange(n), labels)
    both = core[pairs[:, 0]] & core[pairs[:, 1]]
    pos = np.full(n, -1)
    pos[core_idx] = np.arange(len(core_idx))
    cp = pairs[both]
    adj = coo_matrix((np.ones(len(cp)), (pos[cp[:, 0]], pos[cp[:, 1]])), shape=(len(core_idx),) * 2)
    _, comp = connected_components(adj, directed=False)

    # seed = lexicographically smallest core point of each component
    order = np.lexsort((pts[core_idx, 1], pts[core_idx, 0]))
    seed_rank = {}
    for i in order:
        c = comp[i]
        if c not in seed_rank:
            seed_rank[c] = len(seed_rank)
    labels[core_idx] = [seed_rank[c] for c in comp]

    border = ~core & (counts > 1)
    for b in np.flatnonzero(border):
        nbrs = [j for j in tree.query_ball_point(pts[b], cfg.epsilon) if core[j]]
        if not nbrs:
            continue
        d = np.hypot(*(pts[nbrs] - pts[b]).T)
        best = min(zip(d, (labels[j] for j in nbrs)))
        labels[b] = best[1]

    k = len(seed_rank)
    clusters = [np.flatnonzero(labels == c) for c in range(k)]
    return Clustering(clusters, np.flatnonzero(labels < 0), labels)


def clusters_to_detections(points: np.ndarray, clustering: Clustering, timestamp_us: int,
                           min_points: int = 1) -> list[Detection]:
    """One centroid per cluster with at least ``min_points`` members."""
    out = []
    for members in clustering.clusters:
        if len(members) < min_points:
            continue
        c = points[members].mean(axis=0)
        out.append(Detection(int(timestamp_us), float(c[0]), float(c[1]), int(len(members))))
    return out


def detect(frame: LidarFrame, pose: RigidTransform, m: BinaryMap, cfg: DetectorConfig) -> tuple[list[Detection], np.ndarray]:
    """Filter a frame against the map and return its detections plus the kept points."""
    xy = filter_points_by_map(frame, pose, m)
    # the nearest-core border rule can strip a lone core of all its neighbours; such remnants are dropped
    return clusters_to_detections(xy, dbscan_cluster(xy, cfg), frame.timestamp_us, cfg.min_points), xy


DETECTION_HEADER = "timestamp_us,x,y,n_points"


def write_detections(path, detections: list[Detection]) -> None:
    lines = [DETECTION_HEADER] + [f"{d.timestamp_us},{d.x:.6f},{d.y:.6f},{d.n_points}" for d in detections]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_detections(path) -> list[Detection]:
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    if not rows or rows[0] != DETECTION_HEADER:
        raise ValueError(f"{path}: expected header {DETECTION_HEADER!r}")
    out = []
    for line in rows[1:]:
        if line:
            t, x, y, n = line.split(",")
            out.append(Detection(int(t), float(x), float(y), int(n)))
    return out
