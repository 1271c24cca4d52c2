"""Inference-time action latency matching.

A policy chunk is anchored at the observation time ``t_obs``. Steps that can
no longer take effect are discarded, the rest are sent ahead of time by each
actuator's execution latency so that they take effect at their target time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import LatePlanError
from .latency import LatencyProfile
from .se3 import Pose, compose

GRIPPER_STROKE = 0.08

ROBOT = "robot"
GRIPPER = "gripper"


@dataclass(frozen=True)
class ActionStep:
    t_target: float
    rel_pose: Pose
    width: float


@dataclass(frozen=True)
class ActionChunk:
    """Policy output: relative poses and widths targeted at absolute times."""

    t_obs: float
    steps: tuple[ActionStep, ...]
    dt_output: float = 0.1
    discarded: int = 0

    def __post_init__(self):
        steps = tuple(self.steps)
        object.__setattr__(self, "steps", steps)
        ts = [s.t_target for s in steps]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("step target times must be strictly increasing")
        if steps and ts[0] < self.t_obs - 1e-12:
            raise ValueError("first step targets a time before t_obs")
        for s in steps:
            if not -1e-12 <= s.width <= GRIPPER_STROKE + 1e-12:
                raise ValueError(f"width {s.width} outside gripper stroke [0, {GRIPPER_STROKE}]")

    @classmethod
    def regular(cls, t_obs: float, rel_poses: Sequence[Pose], widths: Sequence[float], dt: float) -> ActionChunk:
        """Chunk with steps every ``dt`` starting at ``t_obs``."""
        steps = tuple(ActionStep(t_obs + k * dt, p, float(w)) for k, (p, w) in enumerate(zip(rel_poses, widths)))
        return cls(t_obs, steps, dt)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def empty(self) -> bool:
        return not self.steps

    @property
    def needs_reinference(self) -> bool:
        """Every step was outdated; the caller must run the policy again."""
        return self.empty and self.discarded > 0

    @property
    def t_targets(self) -> list[float]:
        return [s.t_target for s in self.steps]


def action_time(t_output: float, profile: LatencyProfile, actuator: str | None = None) -> float:
    """Earliest target time a command issued at ``t_output`` can still meet."""
    if actuator is None:
        lat = profile.max_exec
    elif actuator == ROBOT:
        lat = profile.l_robot_exec
    elif actuator == GRIPPER:
        lat = profile.l_gripper_exec
    else:
        raise ValueError(f"unknown actuator {actuator!r}")
    return t_output + lat


def trim_outdated(chunk: ActionChunk, t_output: float, profile: LatencyProfile, actuator: str | None = None) -> ActionChunk:
    """Keep the steps with ``t_target >= t_act``.

    ``t_act`` uses the larger of the robot and gripper execution latencies
    unless ``actuator`` selects one of them. The returned chunk's
    ``discarded`` counts the steps dropped by this call.
    """
    if t_output < chunk.t_obs:
        raise ValueError(f"t_output {t_output} precedes t_obs {chunk.t_obs}")
    t_act = action_time(t_output, profile, actuator)
    # tolerate float noise in t_obs + k*dt so an exactly reachable step is kept
    kept = tuple(s for s in chunk.steps if s.t_target >= t_act - 1e-9)
    return replace(chunk, steps=kept, discarded=len(chunk.steps) - len(kept))


def retime(chunk: ActionChunk, speed_factor: float) -> ActionChunk:
    """Stretch (``< 1``) or compress (``> 1``) the chunk's timeline about ``t_obs``."""
    if not (speed_factor > 0 and math.isfinite(speed_factor)):
        raise ValueError(f"speed factor must be positive, got {speed_factor}")
    t0 = chunk.t_obs
    steps = tuple(replace(s, t_target=t0 + (s.t_target - t0) / speed_factor) for s in chunk.steps)
    return replace(chunk, steps=steps, dt_output=chunk.dt_output / speed_factor)


def to_absolute_targets(chunk: ActionChunk, current_pose: Pose) -> list[tuple[float, Pose, float]]:
    return [(s.t_target, compose(current_pose, s.rel_pose), s.width) for s in chunk.steps]


@dataclass(frozen=True, order=True)
class Command:
    t_send: float
    actuator: str
    t_target: float
    pose: Pose | None = field(default=None, compare=False)
    width: float | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        d = {"t_send": self.t_send, "t_target": self.t_target, "actuator": self.actuator}
        if self.pose is not None:
            d["pose"] = self.pose.to_list()
        if self.width is not None:
            d["width"] = self.width
        return d


@dataclass(frozen=True)
class DispatchPlan:
    commands: tuple[Command, ...]

    def for_actuator(self, actuator: str) -> list[Command]:
        return [c for c in self.commands if c.actuator == actuator]

    def __len__(self) -> int:
        return len(self.commands)

    def __iter__(self):
        return iter(self.commands)


def plan_dispatch(
    chunk: ActionChunk,
    profile: LatencyProfile,
    current_pose: Pose | None = None,
    now: float | None = None,
) -> DispatchPlan:
    """Schedule each step ahead of time per actuator.

    Robot poses go out at ``t_target - l_robot_exec`` and widths at
    ``t_target - l_gripper_exec``. Poses are made absolute with
    ``current_pose`` when given, otherwise the relative poses are sent.
    With ``now`` given, any send time in the past raises
    :class:`LatePlanError` naming the affected steps.
    """
    cmds = []
    late = []
    for k, s in enumerate(chunk.steps):
        pose = s.rel_pose if current_pose is None else compose(current_pose, s.rel_pose)
        for actuator, lat in ((ROBOT, profile.l_robot_exec), (GRIPPER, profile.l_gripper_exec)):
            t_send = s.t_target - lat
            if now is not None and t_send < now - 1e-9:
                late.append({"step": k, "actuator": actuator, "t_send": t_send})
            if actuator == ROBOT:
                cmds.append(Command(t_send, ROBOT, s.t_target, pose=pose))
            else:
                cmds.append(Command(t_send, GRIPPER, s.t_target, width=s.width))
    if late:
        raise LatePlanError(f"{len(late)} command(s) would be sent in the past", late=late, now=now)
    cmds.sort(key=lambda c: (c.t_send, c.actuator, c.t_target))
    return DispatchPlan(tuple(cmds))


class Dispatcher:
    """Single-writer command timeline.

    ``submit`` merges a new plan: a newer plan's command replaces any unsent
    command of the same actuator with an equal send time. ``advance`` pops
    every command due by ``now`` and hands it to ``send`` (which must not
    block). Sent commands are appended to ``log``.
    """

    def __init__(self, send: Callable[[Command], None] | None = None):
        self._send = send
        self._pending: dict[tuple[str, float], Command] = {}
        self.log: list[Command] = []

    def submit(self, plan: DispatchPlan | Iterable[Command]) -> None:
        for c in plan:
            self._pending[(c.actuator, round(c.t_send, 9))] = c

    def pending(self) -> list[Command]:
        return sorted(self._pending.values())

    def next_pending(self, actuator: str) -> Command | None:
        cands = [c for c in self._pending.values() if c.actuator == actuator]
        return min(cands) if cands else None

    def advance(self, now: float) -> list[Command]:
        due = sorted(c for c in self._pending.values() if c.t_send <= now + 1e-12)
        for c in due:
            del self._pending[(c.actuator, round(c.t_send, 9))]
            self.log.append(c)
            if self._send is not None:
                self._send(c)
        return due


def write_dispatch_log(path: str | Path, commands: Iterable[Command]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in commands:
            fh.write(json.dumps(c.to_dict()) + "\n")


def read_dispatch_log(path: str | Path) -> list[Command]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            pose = Pose.from_list(d["pose"]) if "pose" in d else None
            out.append(Command(d["t_send"], d["actuator"], d["t_target"], pose=pose, width=d.get("width")))
    return out
