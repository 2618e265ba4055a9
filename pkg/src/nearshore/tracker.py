"""Visibility-augmented integrated PDA tracker for 2D point targets.

Each track carries a constant-velocity Kalman state, an existence
probability ``r`` and a visibility probability ``v``. A visible existing
target is detected with probability ``P_D``; invisible ones never are.
Per track, the hypotheses are

    no target / invisible / visible but missed     weight 1 - r v P_D P_G
    detection i is the target                      weight r v P_D g_i / lambda

with ``g_i`` the Gaussian innovation likelihood and ``lambda`` the clutter
density. Existence and visibility posteriors follow from the same weights,
and the kinematic state is the moment-matched mixture of the per-hypothesis
Kalman updates. Detections gated by several tracks are handed to the one
with the largest hypothesis weight before the per-track updates.
"""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import chi2

from .detector import Detection


class TrackStatus(str, enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    TERMINATED = "terminated"


class CovarianceCollapseError(ArithmeticError):
    pass


@dataclass
class TrackerConfig:
    process_noise: float = 0.5  # q, m^2/s^3
    measurement_std: float = 0.3
    clutter_density: float = 1e-4  # per m^2
    detection_prob: float = 0.9
    survival_prob: float = 0.999
    p_visible_stay: float = 0.95
    p_invisible_to_visible: float = 0.20
    gate_prob: float = 0.99
    confirm_threshold: float = 0.90
    terminate_threshold: float = 0.05
    initial_existence: float = 0.3
    initial_visibility: float = 0.9
    initial_velocity_std: float = 2.0

    def __post_init__(self):
        probs = ("detection_prob", "survival_prob", "p_visible_stay", "p_invisible_to_visible", "gate_prob",
                 "confirm_threshold", "terminate_threshold", "initial_existence", "initial_visibility")
        for name in probs:
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        if min(self.process_noise, self.measurement_std, self.clutter_density) <= 0:
            raise ValueError("process noise, measurement std and clutter density must be positive")

    @property
    def gate_threshold(self) -> float:
        return float(chi2.ppf(self.gate_prob, df=2))

    def to_dict(self) -> dict:
        return asdict(self)


H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


def cv_transition(dt: float) -> np.ndarray:
    f = np.eye(4)
    f[0, 2] = f[1, 3] = dt
    return f


def cv_process_noise(dt: float, q: float) -> np.ndarray:
    """Discretised continuous white-noise acceleration of intensity ``q``."""
    a, b, c = dt**3 / 3.0, dt**2 / 2.0, dt
    return q * np.array([[a, 0, b, 0], [0, a, 0, b], [b, 0, c, 0], [0, b, 0, c]])


def _symmetrize(p: np.ndarray) -> np.ndarray:
    p = 0.5 * (p + p.T)
    w, v = np.linalg.eigh(p)
    if w.min() < 0:
        if w.min() < -1e-9:
            raise CovarianceCollapseError(f"covariance not PSD (min eigenvalue {w.min():.3g})")
        p = (v * np.clip(w, 0.0, None)) @ v.T
        p = 0.5 * (p + p.T)
    return p


@dataclass
class Track:
    id: int
    mean: np.ndarray
    cov: np.ndarray
    existence: float
    visibility: float
    status: TrackStatus = TrackStatus.TENTATIVE
    timestamp_us: int = 0
    born_us: int = 0
    confirmed_us: int | None = None
    weights: np.ndarray = field(default_factory=lambda: np.ones(1))  # beta_0, beta_1..m of the last update

    def copy(self) -> "Track":
        return Track(self.id, self.mean.copy(), self.cov.copy(), self.existence, self.visibility, self.status,
                     self.timestamp_us, self.born_us, self.confirmed_us, self.weights.copy())


def predict(track: Track, dt: float, cfg: TrackerConfig) -> Track:
    if dt <= 0:
        raise ValueError("dt must be positive")
    f = cv_transition(dt)
    out = track.copy()
    out.mean = f @ track.mean
    out.cov = _symmetrize(f @ track.cov @ f.T + cv_process_noise(dt, cfg.process_noise))
    out.existence = cfg.survival_prob * track.existence
    v = track.visibility
    out.visibility = cfg.p_visible_stay * v + cfg.p_invisible_to_visible * (1.0 - v)
    out.timestamp_us = track.timestamp_us + int(round(dt * 1e6))
    return out


def innovation_cov(track: Track, cfg: TrackerConfig) -> np.ndarray:
    return H @ track.cov @ H.T + cfg.measurement_std**2 * np.eye(2)


def _gate_stats(track: Track, z: np.ndarray, cfg: TrackerConfig) -> tuple[np.ndarray, np.ndarray]:
    """Squared Mahalanobis distances and Gaussian likelihoods of (M, 2) measurements."""
    s = innovation_cov(track, cfg)
    det = np.linalg.det(s)
    if not np.isfinite(det) or det <= 1e-18:
        raise CovarianceCollapseError("singular innovation covariance")
    nu = z - H @ track.mean
    d2 = np.einsum("ij,jk,ik->i", nu, np.linalg.inv(s), nu)
    like = np.exp(-0.5 * d2) / (2.0 * np.pi * np.sqrt(det))
    return d2, like


def gate(track: Track, detections: list[Detection], cfg: TrackerConfig) -> list[int]:
    """Indices of detections inside the track's validation gate."""
    if not detections:
        return []
    z = np.array([[d.x, d.y] for d in detections])
    d2, _ = _gate_stats(track, z, cfg)
    return [int(i) for i in np.flatnonzero(d2 < cfg.gate_threshold)]


def vipda_update(track: Track, z: np.ndarray, cfg: TrackerConfig) -> Track:
    """Update one track with its (M, 2) validated detections (M may be 0)."""
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    r, v = track.existence, track.visibility
    pd_pg = cfg.detection_prob * cfg.gate_prob
    s = innovation_cov(track, cfg)
    if len(z):
        _, like = _gate_stats(track, z, cfg)
        # P_G cancels: P_D P_G * (g / P_G)
        a = r * v * cfg.detection_prob * like / cfg.clutter_density
    else:
        a = np.zeros(0)
    miss_exist = r * (1.0 - v) + r * v * (1.0 - pd_pg)  # target exists, no detection from it
    a0 = (1.0 - r) + miss_exist
    total = a0 + a.sum()
    exist_mass = miss_exist + a.sum()

    out = track.copy()
    out.existence = float(np.clip(exist_mass / total, 0.0, 1.0))
    out.visibility = float(np.clip((r * v * (1.0 - pd_pg) + a.sum()) / exist_mass, 0.0, 1.0)) if exist_mass > 0 else v
    if exist_mass > 0:
        beta = np.concatenate([[miss_exist], a]) / exist_mass
    else:
        beta = np.concatenate([[1.0], np.zeros(len(a))])
    beta /= beta.sum()
    out.weights = beta

    if len(z):
        k = track.cov @ H.T @ np.linalg.inv(s)
        nus = z - H @ track.mean
        nu = beta[1:] @ nus
        out.mean = track.mean + k @ nu
        p_upd = track.cov - k @ s @ k.T
        spread = (nus.T * beta[1:]) @ nus - np.outer(nu, nu)
        out.cov = _symmetrize(beta[0] * track.cov + (1.0 - beta[0]) * p_upd + k @ spread @ k.T)
    return out


def associate_and_update(tracks: list[Track], detections: list[Detection],
                         cfg: TrackerConfig) -> tuple[list[Track], list[Detection]]:
    """Gate, resolve contested detections, update every track.

    Returns the updated tracks and the detections that fell in no gate.
    """
    z = np.array([[d.x, d.y] for d in detections]).reshape(-1, 2)
    score = np.zeros((len(tracks), len(detections)))
    in_gate = np.zeros((len(tracks), len(detections)), dtype=bool)
    for i, tr in enumerate(tracks):
        if len(detections):
            d2, like = _gate_stats(tr, z, cfg)
            in_gate[i] = d2 < cfg.gate_threshold
            score[i] = tr.existence * tr.visibility * cfg.detection_prob * like
    owner = np.full(len(detections), -1)
    for j in range(len(detections)):
        cands = np.flatnonzero(in_gate[:, j])
        if len(cands):
            # highest weight wins; ties to the lower track id
            owner[j] = min(cands, key=lambda i: (-score[i, j], tracks[i].id))
    updated = [vipda_update(tr, z[owner == i], cfg) for i, tr in enumerate(tracks)]
    unassociated = [d for j, d in enumerate(detections) if not in_gate[:, j].any()]
    return updated, unassociated


def birth_and_lifecycle(tracks: list[Track], unassociated: list[Detection], cfg: TrackerConfig,
                        timestamp_us: int, next_id: int) -> tuple[list[Track], list[Track], int]:
    """Apply confirmation/termination, then spawn tentative tracks.

    Returns (active tracks, tracks terminated this step, next free id).
    """
    active, ended = [], []
    for tr in tracks:
        if tr.existence <= cfg.terminate_threshold:
            tr.status = TrackStatus.TERMINATED
            ended.append(tr)
            continue
        if tr.status == TrackStatus.TENTATIVE and tr.existence >= cfg.confirm_threshold:
            tr.status = TrackStatus.CONFIRMED
            tr.confirmed_us = timestamp_us
        active.append(tr)
    var_p = cfg.measurement_std**2
    var_v = cfg.initial_velocity_std**2
    for d in unassociated:
        active.append(Track(next_id, np.array([d.x, d.y, 0.0, 0.0]), np.diag([var_p, var_p, var_v, var_v]),
                            cfg.initial_existence, cfg.initial_visibility, TrackStatus.TENTATIVE,
                            timestamp_us, timestamp_us))
        next_id += 1
    return active, ended, next_id


@dataclass
class Snapshot:
    timestamp_us: int
    tracks: list[Track]


class Tracker:
    """Sequential multi-target tracker; call :meth:`step` once per frame in time order."""

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.tracks: list[Track] = []
        self.retired: list[Track] = []
        self.time_us: int | None = None
        self.next_id = 1

    def step(self, detections: list[Detection], timestamp_us: int) -> Snapshot:
        if self.time_us is not None and timestamp_us <= self.time_us:
            raise ValueError(f"non-monotonic timestamp {timestamp_us} after {self.time_us}")
        if self.time_us is not None:
            dt = (timestamp_us - self.time_us) * 1e-6
            self.tracks = [predict(t, dt, self.cfg) for t in self.tracks]
            for t in self.tracks:
                t.timestamp_us = timestamp_us
        updated, unassociated = associate_and_update(self.tracks, detections, self.cfg)
        self.tracks, ended, self.next_id = birth_and_lifecycle(updated, unassociated, self.cfg,
                                                               timestamp_us, self.next_id)
        self.retired.extend(ended)
        self.time_us = timestamp_us
        return Snapshot(timestamp_us, [t.copy() for t in self.tracks])


def run_tracker(detections_by_frame: list[tuple[int, list[Detection]]],
                cfg: TrackerConfig | None = None) -> tuple[list[Snapshot], Tracker]:
    tracker = Tracker(cfg)
    snaps = [tracker.step(dets, t) for t, dets in detections_by_frame]
    return snaps, tracker


TRACK_HEADER = "timestamp_us,track_id,status,x,y,vx,vy,r,v,P_xx,P_xy,P_yy"


@dataclass(frozen=True)
class TrackRow:
    timestamp_us: int
    track_id: int
    status: str
    x: float
    y: float
    vx: float
    vy: float
    r: float
    v: float
    p_xx: float
    p_xy: float
    p_yy: float


def snapshot_rows(snaps: list[Snapshot]) -> list[TrackRow]:
    rows = []
    for s in snaps:
        for t in sorted(s.tracks, key=lambda t: t.id):
            rows.append(TrackRow(s.timestamp_us, t.id, t.status.value, *map(float, t.mean), t.existence,
                                 t.visibility, float(t.cov[0, 0]), float(t.cov[0, 1]), float(t.cov[1, 1])))
    return rows


def write_tracks(path, rows: list[TrackRow]) -> None:
    lines = [TRACK_HEADER]
    for r in rows:
        lines.append(f"{r.timestamp_us},{r.track_id},{r.status},{r.x:.6f},{r.y:.6f},{r.vx:.6f},{r.vy:.6f},"
                     f"{r.r:.9f},{r.v:.9f},{r.p_xx:.9f},{r.p_xy:.9f},{r.p_yy:.9f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_tracks(path) -> list[TrackRow]:
    """Parse a track table; rows are returned sorted by (timestamp, id) whatever the file order."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != TRACK_HEADER:
        raise ValueError(f"{path}: expected header {TRACK_HEADER!r}")
    rows = []
    for n, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        f = line.split(",")
        if len(f) != 12:
            raise ValueError(f"{path}:{n}: expected 12 fields")
        rows.append(TrackRow(int(f[0]), int(f[1]), f[2], *map(float, f[3:])))
    return sorted(rows, key=lambda r: (r.timestamp_us, r.track_id))


def track_summary(rows: list[TrackRow]) -> dict:
    """Per-track lifespan and confirmation time plus overall counts."""
    per: dict[int, dict] = {}
    for r in rows:
        d = per.setdefault(r.track_id, {"id": r.track_id, "first_us": r.timestamp_us, "last_us": r.timestamp_us,
                                        "confirmed_us": None})
        d["last_us"] = r.timestamp_us
        if r.status == TrackStatus.CONFIRMED.value and d["confirmed_us"] is None:
            d["confirmed_us"] = r.timestamp_us
    tracks = []
    for d in sorted(per.values(), key=lambda d: d["id"]):
        d["lifespan_s"] = round((d["last_us"] - d["first_us"]) * 1e-6, 6)
        d["confirmation_delay_s"] = (None if d["confirmed_us"] is None
                                     else round((d["confirmed_us"] - d["first_us"]) * 1e-6, 6))
        tracks.append(d)
    confirmed = sum(d["confirmed_us"] is not None for d in tracks)
    return {"confirmed_track_count": confirmed, "tentative_only_track_count": len(tracks) - confirmed,
            "total_track_count": len(tracks), "tracks": tracks}


def write_summary(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
