"""Timestamped sample streams and observation alignment.

All alignment happens in *capture* time: ``capture = receive - latency``.
A stream records receive timestamps plus the latency declared for it.

Wire format (JSONL): an optional header object without a ``"t"`` key, then
one sample per line, e.g.::

    {"stream_id": "ee", "latency": 0.005, "rate": 500.0}
    {"t": 0.002, "pose": [x, y, z, qw, qx, qy, qz]}
    {"t": 0.002, "width": 0.071}
    {"t": 0.016, "frame": "cam0/000001"}
    {"t": 0.016, "markers": [[u0, v0], [u1, v1]]}   # or null when undetected
    {"t": 0.010, "value": 0.25}

One file may interleave several sample kinds (a recording holding a pose
track and a marker track); each kind becomes its own stream.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable, Sequence

import numpy as np

from .errors import OutOfRangeError
from .se3 import Pose, PoseTrajectory, relative_proprioception, snap_time

if TYPE_CHECKING:
    from .latency import LatencyProfile

log = logging.getLogger(__name__)

SAMPLE_KINDS = ("pose", "width", "frame", "markers", "value")
SOFT_SYNC_MAX_OFFSET = 1.0 / 60.0


@dataclass(frozen=True)
class TimedStream:
    """Strictly time-ordered samples with a declared latency.

    ``values`` is a float array for ``width``/``value`` streams, an
    ``(n, 2, 2)`` float array (NaN when undetected) for ``markers``, and a
    tuple for ``pose`` (Pose objects) and ``frame`` (opaque references).
    """

    t: np.ndarray
    values: Any
    kind: str = "value"
    latency: float = 0.0
    stream_id: str = ""
    rate: float | None = None
    frame_id: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SAMPLE_KINDS:
            raise ValueError(f"unknown sample kind {self.kind!r}")
        t = np.asarray(self.t, dtype=float).reshape(-1)
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError(f"stream {self.stream_id!r}: timestamps must be strictly increasing")
        if not (math.isfinite(self.latency) and self.latency >= 0):
            raise ValueError(f"stream {self.stream_id!r}: latency must be finite and >= 0")
        if self.kind in ("width", "value"):
            values = np.asarray(self.values, dtype=float).reshape(-1)
        elif self.kind == "markers":
            values = np.asarray(self.values, dtype=float).reshape(-1, 2, 2)
        else:
            values = tuple(self.values)
        if len(values) != len(t):
            raise ValueError(f"stream {self.stream_id!r}: {len(t)} timestamps for {len(values)} values")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def capture_t(self) -> np.ndarray:
        return self.t - self.latency

    def native_rate(self) -> float:
        if self.rate:
            return float(self.rate)
        if len(self.t) < 2:
            raise ValueError(f"stream {self.stream_id!r}: cannot infer rate from < 2 samples")
        return 1.0 / float(np.median(np.diff(self.t)))

    def select(self, idx: Sequence[int]) -> TimedStream:
        idx = list(idx)
        if isinstance(self.values, np.ndarray):
            values = self.values[idx]
        else:
            values = tuple(self.values[i] for i in idx)
        return TimedStream(self.t[idx], values, self.kind, self.latency, self.stream_id, self.rate, self.frame_id, dict(self.meta))

    def with_timing(self, t=None, latency: float | None = None) -> TimedStream:
        return TimedStream(
            self.t if t is None else t,
            self.values,
            self.kind,
            self.latency if latency is None else latency,
            self.stream_id,
            self.rate,
            self.frame_id,
            dict(self.meta),
        )

    def trajectory(self) -> PoseTrajectory:
        """Pose stream as a trajectory in capture time."""
        if self.kind != "pose":
            raise TypeError(f"stream {self.stream_id!r} holds {self.kind}, not poses")
        return PoseTrajectory(self.capture_t, self.values, self.frame_id or "world")

    @classmethod
    def from_trajectory(cls, traj: PoseTrajectory, latency: float = 0.0, stream_id: str = "", rate=None, meta=None) -> TimedStream:
        """Pose stream whose capture times equal the trajectory's timestamps."""
        return cls(traj.t + latency, traj.poses, "pose", latency, stream_id, rate, traj.frame_id, dict(meta or {}))


# -- JSONL -----------------------------------------------------------------


def _sample_to_json(kind: str, v) -> Any:
    if kind == "pose":
        return v.to_list()
    if kind == "markers":
        return None if np.isnan(v).any() else v.tolist()
    if kind == "frame":
        return v
    return float(v)


def write_streams(path: str | Path, streams: Iterable[TimedStream], header: dict | None = None) -> None:
    """Write one or more streams (merged by timestamp) to a JSONL file."""
    streams = list(streams)
    head: dict[str, Any] = {}
    if streams:
        s0 = streams[0]
        head = {"stream_id": s0.stream_id, "latency": s0.latency, "rate": s0.rate}
        if s0.frame_id is not None:
            head["frame_id"] = s0.frame_id
        head.update(s0.meta)
    if header:
        head.update(header)
    rows = []
    for order, s in enumerate(streams):
        for i, (t, v) in enumerate(zip(s.t.tolist(), s.values)):
            rows.append((t, order, i, {"t": t, s.kind: _sample_to_json(s.kind, v)}))
    rows.sort(key=lambda r: r[:3])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for *_, obj in rows:
            fh.write(json.dumps(obj) + "\n")


def read_streams(path: str | Path) -> tuple[dict, dict[str, TimedStream]]:
    """Parse a JSONL stream file into ``(header, {kind: stream})``."""
    header: dict = {}
    cols: dict[str, tuple[list, list]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "t" not in obj:
                if cols:
                    raise ValueError(f"{path}:{lineno}: header must precede samples")
                header.update(obj)
                continue
            kinds = [k for k in SAMPLE_KINDS if k in obj]
            if len(kinds) != 1:
                raise ValueError(f"{path}:{lineno}: expected exactly one of {SAMPLE_KINDS}")
            kind = kinds[0]
            ts, vs = cols.setdefault(kind, ([], []))
            ts.append(float(obj["t"]))
            vs.append(obj[kind])
    known = {"stream_id", "latency", "rate", "frame_id"}
    meta = {k: v for k, v in header.items() if k not in known}
    out = {}
    for kind, (ts, vs) in cols.items():
        if kind == "pose":
            values = tuple(Pose.from_list(v) for v in vs)
        elif kind == "markers":
            values = np.array([np.full((2, 2), np.nan) if v is None else np.asarray(v, dtype=float) for v in vs]).reshape(-1, 2, 2)
        elif kind == "frame":
            values = tuple(vs)
        else:
            values = np.asarray(vs, dtype=float)
        out[kind] = TimedStream(
            np.asarray(ts),
            values,
            kind,
            float(header.get("latency") or 0.0),
            str(header.get("stream_id", Path(path).stem)),
            header.get("rate"),
            header.get("frame_id"),
            dict(meta),
        )
    return header, out


def read_stream(path: str | Path, kind: str | None = None) -> TimedStream:
    _, streams = read_streams(path)
    if kind is not None:
        if kind not in streams:
            raise ValueError(f"{path}: no {kind!r} samples")
        return streams[kind]
    if len(streams) != 1:
        raise ValueError(f"{path}: holds {sorted(streams)}; pass kind=")
    return next(iter(streams.values()))


# -- sampling --------------------------------------------------------------


def sample_at(stream: TimedStream, t: float):
    """Value of ``stream`` at capture time ``t``.

    Exact at sample timestamps; linear for scalars, lerp+slerp for poses in
    between. Requests outside coverage raise :class:`OutOfRangeError`.
    """
    ct = stream.capture_t
    t = snap_time(ct, t)
    if len(ct) == 0 or t < ct[0] or t > ct[-1]:
        lo = float(ct[0]) if len(ct) else float("nan")
        hi = float(ct[-1]) if len(ct) else float("nan")
        raise OutOfRangeError(
            f"stream {stream.stream_id!r}: t={t!r} outside [{lo}, {hi}]", stream=stream.stream_id, t=t
        )
    if stream.kind == "pose":
        return stream.trajectory().at(t)
    if stream.kind not in ("width", "value"):
        raise TypeError(f"cannot interpolate {stream.kind} samples")
    i = int(np.searchsorted(ct, t, side="left"))
    if ct[i] == t:
        return float(stream.values[i])
    t0, t1 = ct[i - 1], ct[i]
    v0, v1 = stream.values[i - 1], stream.values[i]
    return float(v0 + (v1 - v0) * ((t - t0) / (t1 - t0)))


def downsample_frames(frames: TimedStream, target_hz: float) -> TimedStream:
    """Greedy subsampling: each kept frame is the one nearest to the previous
    kept frame plus ``1 / target_hz``."""
    if target_hz <= 0:
        raise ValueError("target_hz must be positive")
    native = frames.native_rate()
    if target_hz > native * (1 + 1e-6):
        raise ValueError(f"target {target_hz} Hz exceeds native rate {native:.4f} Hz")
    if len(frames) == 0:
        return frames
    period = 1.0 / target_hz
    t = frames.t
    keep = [0]
    while True:
        goal = t[keep[-1]] + period
        j = int(np.searchsorted(t, goal))
        cands = [c for c in (j - 1, j) if keep[-1] < c < len(t)]
        if not cands:
            break
        best = min(cands, key=lambda c: (abs(t[c] - goal), c))
        if best == len(t) - 1 and t[best] < goal and goal - t[best] > 0.5 / native:
            break
        keep.append(best)
    return frames.select(keep)


@dataclass(frozen=True)
class ObservationTuple:
    t_obs: float
    frame_ref: Any
    ee_history: PoseTrajectory
    width_history: list[tuple[float, float]]
    ee_pose: Pose

    def to_dict(self) -> dict:
        return {
            "t_obs": self.t_obs,
            "frame": self.frame_ref,
            "ee_history": [p.to_list() for p in self.ee_history.poses],
            "ee_history_t": self.ee_history.t.tolist(),
            "width_history": [list(w) for w in self.width_history],
            "ee_pose": self.ee_pose.to_list(),
        }


@dataclass
class AlignedObservations:
    tuples: list[ObservationTuple]
    skipped: list[tuple[float, str]]

    def __iter__(self):
        return iter(self.tuples)

    def __len__(self):
        return len(self.tuples)

    def __getitem__(self, k):
        return self.tuples[k]


def align_observations(
    frames: TimedStream,
    ee_stream: TimedStream,
    width_stream: TimedStream,
    profile: LatencyProfile | None = None,
    obs_horizon: int = 2,
    freq: float = 10.0,
) -> AlignedObservations:
    """Build synchronized observation tuples anchored at frame capture times.

    With ``profile`` given its latencies replace the streams' declared ones
    (camera for frames, proprioception for pose and width).
    """
    if obs_horizon < 1:
        raise ValueError("obs_horizon must be >= 1")
    if profile is not None:
        frames = frames.with_timing(latency=profile.l_camera)
        ee_stream = ee_stream.with_timing(latency=profile.l_proprio)
        width_stream = width_stream.with_timing(latency=profile.l_proprio)
    slowest = max(ee_stream.latency, width_stream.latency)
    if frames.latency < slowest:
        raise ValueError(
            f"camera latency {frames.latency} is below a proprioception latency {slowest}; "
            "observations are aligned to the slowest stream, which must be the camera"
        )
    chosen = downsample_frames(frames, freq)
    ee_traj = ee_stream.trajectory()
    out: list[ObservationTuple] = []
    skipped: list[tuple[float, str]] = []
    for t_recv, ref in zip(chosen.t.tolist(), chosen.values):
        t_obs = t_recv - frames.latency
        times = [t_obs - k / freq for k in range(obs_horizon - 1, -1, -1)]
        times[-1] = t_obs
        try:
            poses = tuple(ee_traj.at(tk) for tk in times)
            widths = [(tk, sample_at(width_stream, tk)) for tk in times]
        except OutOfRangeError as exc:
            log.info("skipping observation at t_obs=%.6f: %s", t_obs, exc)
            skipped.append((t_obs, str(exc)))
            continue
        hist = relative_proprioception(PoseTrajectory(np.array(times), poses, ee_traj.frame_id))
        out.append(ObservationTuple(t_obs, ref, hist, widths, poses[-1]))
    return AlignedObservations(out, skipped)


# -- bimanual soft sync ----------------------------------------------------


@dataclass(frozen=True)
class FramePair:
    left: Any
    right: Any
    t_left: float
    t_right: float

    @property
    def offset(self) -> float:
        return abs(self.t_right - self.t_left)


@dataclass
class SoftSyncResult:
    pairs: list[FramePair]
    rejected: list[FramePair]
    unmatched_left: list[int]
    unmatched_right: list[int]


def _nearest(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Index into ``dst`` of the nearest timestamp for each ``src``; ties pick the earlier."""
    j = np.searchsorted(dst, src)
    lo = np.clip(j - 1, 0, len(dst) - 1)
    hi = np.clip(j, 0, len(dst) - 1)
    return np.where(np.abs(dst[lo] - src) <= np.abs(dst[hi] - src), lo, hi)


def soft_sync_bimanual(
    frames_left: TimedStream, frames_right: TimedStream, max_offset: float = SOFT_SYNC_MAX_OFFSET
) -> SoftSyncResult:
    """Mutual-nearest pairing of two camera streams on their capture clocks."""
    if len(frames_left) == 0 or len(frames_right) == 0:
        raise ValueError("soft sync needs two non-empty frame streams")
    tl, tr = frames_left.capture_t, frames_right.capture_t
    l2r = _nearest(tl, tr)
    r2l = _nearest(tr, tl)
    pairs, rejected = [], []
    matched_l, matched_r = set(), set()
    for i, j in enumerate(l2r.tolist()):
        if r2l[j] != i:
            continue
        pair = FramePair(frames_left.values[i], frames_right.values[j], float(tl[i]), float(tr[j]))
        # float slack so the documented 1/60 s bound itself is accepted
        if pair.offset <= max_offset + 1e-9:
            pairs.append(pair)
        else:
            rejected.append(pair)
        matched_l.add(i)
        matched_r.add(j)
    return SoftSyncResult(
        pairs,
        rejected,
        [i for i in range(len(tl)) if i not in matched_l],
        [j for j in range(len(tr)) if j not in matched_r],
    )
