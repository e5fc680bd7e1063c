"""Object-files: per-object tracking state and classification memory.

Each moving object gets a constant-velocity Kalman track on its box centre
and a store of the classification vectors observed for it. Observations far
(in Mahalanobis distance) from the file's running distribution are kept
but ignored; the stable label is read from the top-K most confident kept
observations.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import BoundingBox, Detection

F = np.array([[1.0, 0.0, 1.0, 0.0],
              [0.0, 1.0, 0.0, 1.0],
              [0.0, 0.0, 1.0, 0.0],
              [0.0, 0.0, 0.0, 1.0]])
H = np.array([[1.0, 0.0, 0.0, 0.0],
              [0.0, 1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class KalmanTrack:
    state: np.ndarray  # (x, y, vx, vy)
    cov: np.ndarray  # 4x4
    q: float = 0.01
    r: float = 1.0
    frames_since_hit: int = 0

    @classmethod
    def start(cls, center: tuple[float, float], q: float = 0.01, r: float = 1.0,
              velocity_var: float = 25.0) -> "KalmanTrack":
        state = np.array([center[0], center[1], 0.0, 0.0])
        cov = np.diag([r, r, velocity_var, velocity_var])
        return cls(state, cov, q, r)

    @property
    def position(self) -> np.ndarray:
        return self.state[:2]


def predict(track: KalmanTrack) -> KalmanTrack:
    """Propagate one frame ahead under constant velocity."""
    state = F @ track.state
    cov = F @ track.cov @ F.T + track.q * np.eye(4)
    return replace(track, state=state, cov=0.5 * (cov + cov.T))


def update(track: KalmanTrack, measurement) -> KalmanTrack:
    """Measurement update on the box centre (Joseph form)."""
    z = np.asarray(measurement, dtype=float)
    P = track.cov
    S = H @ P @ H.T + track.r * np.eye(2)
    K = np.linalg.solve(S, H @ P).T  # P H' S^-1, S symmetric
    state = track.state + K @ (z - H @ track.state)
    IKH = np.eye(4) - K @ H
    cov = IKH @ P @ IKH.T + track.r * K @ K.T
    return replace(track, state=state, cov=0.5 * (cov + cov.T), frames_since_hit=0)


@dataclass
class Assignment:
    matches: list[tuple[int, int]]  # (track index, detection index)
    unmatched_tracks: list[int]
    unmatched_detections: list[int]


def associate(tracks: Sequence[KalmanTrack], centers: Sequence[tuple[float, float]], gate: float = 50.0) -> Assignment:
    """Greedy nearest-neighbour matching of (already predicted) tracks to detection centres.

    Pairs are taken in order of increasing distance; a pair farther apart
    than ``gate`` is never matched.
    """
    if not gate > 0:
        raise ValueError("gate must be positive")
    n_t, n_d = len(tracks), len(centers)
    if n_t == 0 or n_d == 0:
        return Assignment([], list(range(n_t)), list(range(n_d)))
    pos = np.array([t.position for t in tracks])
    cen = np.asarray(centers, dtype=float)
    dist = np.linalg.norm(pos[:, None, :] - cen[None, :, :], axis=2)
    order = np.argsort(dist, axis=None, kind="stable")
    used_t, used_d = set(), set()
    matches = []
    for flat in order:
        i, j = divmod(int(flat), n_d)
        if dist[i, j] > gate:
            break
        if i in used_t or j in used_d:
            continue
        matches.append((i, j))
        used_t.add(i)
        used_d.add(j)
    return Assignment(
        sorted(matches),
        [i for i in range(n_t) if i not in used_t],
        [j for j in range(n_d) if j not in used_d],
    )


@dataclass
class Observation:
    frame_index: int
    probs: np.ndarray
    feature: Optional[np.ndarray]
    included: bool
    distance: float
    tiebreak: Optional[np.ndarray] = None  # bottom-up scores, used to order tied categories


@dataclass
class ObjectFileConfig:
    top_k: int = 10
    n_min: int = 5
    d_max: float = 3.0
    var_floor: float = 1e-4
    prior_var: float = 0.1
    prior_count: float = 5.0
    confirm_confidence: float = 0.7
    q: float = 0.01
    r: float = 1.0
    gate: float = 50.0
    t_lost: int = 10

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("objectfile.top_k must be at least 1")
        if not self.d_max > 0:
            raise ValueError("objectfile.d_max must be positive")
        if not self.gate > 0:
            raise ValueError("objectfile.gate must be positive")
        if not (self.q > 0 and self.r > 0):
            raise ValueError("objectfile.q and objectfile.r must be positive")
        if not 0 < self.confirm_confidence <= 1:
            raise ValueError("objectfile.confirm_confidence must lie in (0, 1]")


def mahalanobis_diag(x: np.ndarray, mean: np.ndarray, var: np.ndarray) -> float:
    return float(np.sqrt(np.sum((x - mean) ** 2 / var)))


@dataclass
class ObjectFile:
    """Tracking state plus classification history of one object.

    The variance used for outlier rejection is the running per-dimension
    variance of included observations, shrunk toward ``prior_var`` with
    weight ``prior_count`` and floored at ``var_floor``; a file that has
    seen only a handful of near-identical vectors therefore does not reject
    everything that differs slightly.
    """

    file_id: int
    track: KalmanTrack
    config: ObjectFileConfig = field(default_factory=ObjectFileConfig)
    box: Optional[BoundingBox] = None
    observations: list[Observation] = field(default_factory=list)
    top_set: list[int] = field(default_factory=list)
    stable_label: Optional[int] = None
    stable_confidence: float = 0.0
    stable_probs: Optional[np.ndarray] = None  # elementwise mean over top_set
    n_included: int = 0
    _mean: Optional[np.ndarray] = field(default=None, repr=False)
    _m2: Optional[np.ndarray] = field(default=None, repr=False)
    confirmed_label: Optional[int] = None  # label last reported to the context model

    @property
    def mean(self) -> Optional[np.ndarray]:
        return self._mean

    @property
    def variance(self) -> Optional[np.ndarray]:
        if self._mean is None:
            return None
        c = self.config
        var = (c.prior_count * c.prior_var + self._m2) / (c.prior_count + self.n_included)
        return np.maximum(var, c.var_floor)

    @property
    def confirmed(self) -> bool:
        return (self.stable_label is not None
                and self.stable_confidence >= self.config.confirm_confidence
                and self.n_included >= self.config.top_k / 2)

    def distance(self, probs: np.ndarray) -> float:
        if self._mean is None:
            return 0.0
        return mahalanobis_diag(probs, self._mean, self.variance)

    def _recompute_decision(self) -> None:
        inc = [k for k, o in enumerate(self.observations) if o.included]
        # most confident first; earlier observation wins ties
        inc.sort(key=lambda k: (-self.observations[k].probs.max(), k))
        self.top_set = sorted(inc[: self.config.top_k])
        if not self.top_set:
            self.stable_label, self.stable_confidence, self.stable_probs = None, 0.0, None
            return
        avg = np.mean([self.observations[k].probs for k in self.top_set], axis=0)
        self.stable_probs = avg
        tied = np.flatnonzero(avg == avg.max())
        if len(tied) > 1:
            tb = [self.observations[k].tiebreak for k in self.top_set]
            if all(v is not None for v in tb):
                tied = tied[[int(np.argmax(np.mean(tb, axis=0)[tied]))]]
        self.stable_label = int(tied[0])
        self.stable_confidence = float(avg[self.stable_label])


def ingest_observation(file: ObjectFile, det: Detection, feature: Optional[np.ndarray] = None,
                       d_max: Optional[float] = None, tiebreak: Optional[np.ndarray] = None) -> ObjectFile:
    """Store one classification of the object and refresh its stable decision.

    ``tiebreak`` (normally the bottom-up vector behind ``det.probs``) orders
    categories whose averaged scores tie exactly, as happens when several
    corrected scores saturate at 1. Returns the same (mutated) file.
    """
    cfg = file.config
    d_max = cfg.d_max if d_max is None else d_max
    probs = det.probs
    d = file.distance(probs)
    included = not (d > d_max and file.n_included >= cfg.n_min)
    file.observations.append(Observation(det.frame_index, probs, feature, included, d, tiebreak))
    if included:
        if file._mean is None:
            file._mean = probs.copy()
            file._m2 = np.zeros_like(probs)
            file.n_included = 1
        else:
            file.n_included += 1
            delta = probs - file._mean
            file._mean = file._mean + delta / file.n_included
            file._m2 = file._m2 + delta * (probs - file._mean)
    file._recompute_decision()
    return file


def stable_decision(file: ObjectFile) -> tuple[Optional[int], float]:
    if file.n_included == 0:
        return None, 0.0
    return file.stable_label, file.stable_confidence


@dataclass(frozen=True)
class FileSnapshot:
    """Immutable view of an object-file handed to the reinforcement stage."""

    file_id: int
    stable_label: Optional[int]
    stable_confidence: float
    n_included: int
    confirmed: bool


def snapshot(file: ObjectFile) -> FileSnapshot:
    return FileSnapshot(file.file_id, file.stable_label, file.stable_confidence,
                        file.n_included, file.confirmed)


class ObjectFileTracker:
    """Owns the live object-files of one video and keeps them associated."""

    def __init__(self, config: ObjectFileConfig = ObjectFileConfig()):
        self.config = config
        self.files: dict[int, ObjectFile] = {}
        self.closed: list[ObjectFile] = []
        self._next_id = 0

    def step(self, boxes: Sequence[BoundingBox]) -> dict[int, int]:
        """Advance all tracks one frame and match them to ``boxes``.

        Returns ``{box index: file id}``; unmatched boxes open new files and
        files missed for more than ``t_lost`` frames are closed.
        """
        cfg = self.config
        ids = list(self.files)
        for fid in ids:
            f = self.files[fid]
            f.track = predict(f.track)
        assignment = associate([self.files[i].track for i in ids], [b.center for b in boxes], cfg.gate)
        out = {}
        for ti, di in assignment.matches:
            f = self.files[ids[ti]]
            f.track = update(f.track, boxes[di].center)
            f.box = boxes[di]
            out[di] = f.file_id
        for ti in assignment.unmatched_tracks:
            f = self.files[ids[ti]]
            f.track = replace(f.track, frames_since_hit=f.track.frames_since_hit + 1)
            if f.track.frames_since_hit > cfg.t_lost:
                self.closed.append(self.files.pop(f.file_id))
        for di in assignment.unmatched_detections:
            fid = self._next_id
            self._next_id += 1
            track = KalmanTrack.start(boxes[di].center, cfg.q, cfg.r)
            self.files[fid] = ObjectFile(fid, track, cfg, boxes[di])
            out[di] = fid
        return out

    def all_files(self) -> list[ObjectFile]:
        return self.closed + list(self.files.values())
