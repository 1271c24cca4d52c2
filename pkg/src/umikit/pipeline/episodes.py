"""Session manifests, episodes, bimanual pairing and inter-gripper streams."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..errors import FrameMismatchError, PairingAmbiguityError
from ..se3 import Pose, PoseTrajectory, inter_gripper_pose
from ..streams import TimedStream

ROLES = ("mapping", "calibration", "demo")
AMBIGUITY_MARGIN = 1.0


@dataclass(frozen=True)
class Recording:
    path: str
    serial: str
    role: str
    t_start: float = 0.0
    t_end: float = 0.0

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown recording role {self.role!r}")

    def overlap(self, other: Recording) -> float:
        return max(0.0, min(self.t_end, other.t_end) - max(self.t_start, other.t_start))


@dataclass(frozen=True)
class SessionManifest:
    scene_id: str
    gripper_serials: tuple[str, ...]
    recordings: tuple[Recording, ...]
    map_frame_id: str

    def __post_init__(self):
        object.__setattr__(self, "gripper_serials", tuple(self.gripper_serials))
        object.__setattr__(self, "recordings", tuple(self.recordings))
        if len(set(self.gripper_serials)) != len(self.gripper_serials):
            raise ValueError(f"scene {self.scene_id}: gripper serials must be unique")
        n_map = sum(r.role == "mapping" for r in self.recordings)
        if n_map != 1:
            raise ValueError(f"scene {self.scene_id}: expected exactly one mapping recording, found {n_map}")

    def demos(self, serial: str | None = None) -> list[Recording]:
        return [r for r in self.recordings if r.role == "demo" and (serial is None or r.serial == serial)]


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str | None = None
    stage: str = "ingest"
    detail: dict = field(default_factory=dict)

    @classmethod
    def ok(cls, stage: str = "ingest") -> Verdict:
        return cls(True, None, stage)

    @classmethod
    def rejected(cls, reason: str, stage: str = "filter", **detail) -> Verdict:
        return cls(False, reason, stage, detail)

    def __str__(self) -> str:
        return "accepted" if self.accepted else f"rejected({self.reason})"

    def to_dict(self) -> dict:
        return {"status": "accepted" if self.accepted else "rejected", "reason": self.reason, "stage": self.stage, "detail": self.detail}

    @classmethod
    def from_dict(cls, d: dict) -> Verdict:
        return cls(d["status"] == "accepted", d.get("reason"), d.get("stage", "ingest"), dict(d.get("detail") or {}))


@dataclass(frozen=True)
class Episode:
    """One demonstration: one (single-arm) or two (bimanual) grippers."""

    episode_id: str
    scene_id: str
    serials: tuple[str, ...]
    trajs: tuple[PoseTrajectory, ...]
    widths: tuple[TimedStream, ...]
    recordings: tuple[str, ...] = ()
    verdict: Verdict = Verdict.ok()

    def __post_init__(self):
        for name in ("serials", "trajs", "widths", "recordings"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not (len(self.serials) == len(self.trajs) == len(self.widths)):
            raise ValueError("episode needs one trajectory and width stream per gripper")
        if len(self.trajs) == 2 and self.trajs[0].frame_id != self.trajs[1].frame_id:
            raise FrameMismatchError(
                f"episode {self.episode_id}: grippers are in frames {self.trajs[0].frame_id!r} and {self.trajs[1].frame_id!r}"
            )

    @property
    def bimanual(self) -> bool:
        return len(self.trajs) == 2

    def with_verdict(self, verdict: Verdict) -> Episode:
        return replace(self, verdict=verdict)

    def coverage(self) -> tuple[float, float]:
        """Time span covered by every pose and width stream."""
        lo = max(max(float(tr.t[0]) for tr in self.trajs), max(float(w.capture_t[0]) for w in self.widths))
        hi = min(min(float(tr.t[-1]) for tr in self.trajs), min(float(w.capture_t[-1]) for w in self.widths))
        return lo, hi

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "scene_id": self.scene_id,
            "serials": list(self.serials),
            "recordings": list(self.recordings),
            "frame_id": self.trajs[0].frame_id,
            "grippers": [
                {
                    "t": tr.t.tolist(),
                    "poses": [p.to_list() for p in tr.poses],
                    "width_t": w.capture_t.tolist(),
                    "width": w.values.tolist(),
                }
                for tr, w in zip(self.trajs, self.widths)
            ],
            "verdict": self.verdict.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Episode:
        trajs, widths = [], []
        for serial, g in zip(d["serials"], d["grippers"]):
            trajs.append(PoseTrajectory(np.asarray(g["t"]), tuple(Pose.from_list(p) for p in g["poses"]), d["frame_id"]))
            widths.append(TimedStream(np.asarray(g["width_t"]), np.asarray(g["width"]), "width", 0.0, serial))
        return cls(d["episode_id"], d["scene_id"], tuple(d["serials"]), tuple(trajs), tuple(widths), tuple(d["recordings"]), Verdict.from_dict(d["verdict"]))


@dataclass
class PairingResult:
    pairs: list[tuple[Recording, Recording]]
    unpaired: list[Recording]
    singles: list[Recording]


def pair_bimanual(manifest: SessionManifest, margin: float = AMBIGUITY_MARGIN) -> PairingResult:
    """Match demo recordings of two grippers by maximal temporal overlap.

    The first serial in the manifest is the left gripper. With one serial
    every demo is a single-arm episode. A recording whose two best
    candidates overlap it by amounts closer than ``margin`` seconds cannot
    be resolved automatically.
    """
    serials = manifest.gripper_serials
    if len(serials) == 1:
        return PairingResult([], [], sorted(manifest.demos(serials[0]), key=lambda r: (r.t_start, r.path)))
    if len(serials) != 2:
        raise ValueError(f"scene {manifest.scene_id}: pairing supports one or two grippers, got {len(serials)}")
    left = sorted(manifest.demos(serials[0]), key=lambda r: (r.t_start, r.path))
    right = sorted(manifest.demos(serials[1]), key=lambda r: (r.t_start, r.path))
    ov = np.array([[a.overlap(b) for b in right] for a in left]).reshape(len(left), len(right))

    def check(rows: np.ndarray, recs: Sequence[Recording]):
        for i, row in enumerate(rows):
            cand = np.sort(row[row > 0])[::-1]
            if len(cand) >= 2 and cand[0] - cand[1] < margin:
                raise PairingAmbiguityError(
                    f"{recs[i].path}: two candidate partners overlap by {cand[0]:.2f} s and {cand[1]:.2f} s",
                    recording=recs[i].path,
                )

    check(ov, left)
    check(ov.T, right)
    order = sorted(
        ((ov[i, j], i, j) for i in range(len(left)) for j in range(len(right)) if ov[i, j] > 0),
        key=lambda x: (-x[0], x[1], x[2]),
    )
    used_l, used_r, pairs = set(), set(), []
    for _, i, j in order:
        if i in used_l or j in used_r:
            continue
        used_l.add(i)
        used_r.add(j)
        pairs.append((left[i], right[j]))
    pairs.sort(key=lambda p: (p[0].t_start, p[0].path))
    unpaired = [r for i, r in enumerate(left) if i not in used_l] + [r for j, r in enumerate(right) if j not in used_r]
    return PairingResult(pairs, sorted(unpaired, key=lambda r: (r.t_start, r.path)), [])


def inter_gripper_stream(left: PoseTrajectory, right: PoseTrajectory) -> TimedStream:
    """Right gripper pose in the left gripper frame at each left timestamp.

    Left timestamps outside the right trajectory's coverage are dropped.
    """
    if left.frame_id != right.frame_id:
        raise FrameMismatchError(f"trajectories are in frames {left.frame_id!r} and {right.frame_id!r}")
    ts, poses = [], []
    lo, hi = right.t[0], right.t[-1]
    for t, pl in left:
        if lo <= t <= hi:
            ts.append(t)
            poses.append(inter_gripper_pose(pl, right.at(t)))
    return TimedStream(np.asarray(ts), tuple(poses), "pose", 0.0, "inter_gripper", frame_id=f"gripper:{left.frame_id}")
