"""Kinematic feasibility filtering of demonstrations for a target robot."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..se3 import Pose, PoseTrajectory, inverse
from .episodes import Episode, Verdict

# checked in this order; the first violated one is reported
CONSTRAINTS = ("reach", "workspace-z", "speed", "acceleration")


@dataclass(frozen=True)
class KinematicModel:
    """Reach shell, height band (in the base frame) and Cartesian speed/accel limits."""

    base_pose: Pose = Pose()
    reach_min: float = 0.0
    reach_max: float = 1.0
    z_min: float = -np.inf
    z_max: float = np.inf
    v_max: float = 2.0
    a_max: float = 20.0

    def __post_init__(self):
        if not self.reach_min < self.reach_max:
            raise ValueError("reach_min must be below reach_max")
        if not (self.v_max > 0 and self.a_max > 0):
            raise ValueError("v_max and a_max must be positive")
        if not self.z_min < self.z_max:
            raise ValueError("z_min must be below z_max")

    @classmethod
    def from_dict(cls, d: dict) -> KinematicModel:
        kw = {k: float(d[k]) for k in ("reach_min", "reach_max", "z_min", "z_max", "v_max", "a_max") if k in d}
        if "base_pose" in d:
            kw["base_pose"] = Pose.from_list(d["base_pose"])
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "base_pose": self.base_pose.to_list(),
            "reach_min": self.reach_min,
            "reach_max": self.reach_max,
            "z_min": self.z_min,
            "z_max": self.z_max,
            "v_max": self.v_max,
            "a_max": self.a_max,
        }


def central_differences(t: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Velocity and acceleration at interior samples, 3-point stencil,
    valid for non-uniform spacing. Row ``k`` belongs to sample ``k + 1``."""
    h1 = (t[1:-1] - t[:-2])[:, None]
    h2 = (t[2:] - t[1:-1])[:, None]
    v = (p[2:] - p[:-2]) / (h1 + h2)
    a = 2.0 * ((p[2:] - p[1:-1]) / h2 - (p[1:-1] - p[:-2]) / h1) / (h1 + h2)
    return v, a


def check_trajectory(traj: PoseTrajectory, model: KinematicModel) -> Verdict:
    if len(traj) < 3:
        return Verdict.rejected("insufficient-data", samples=len(traj))
    inv_base = inverse(model.base_pose)
    p_base = np.array([inv_base.apply(p) for p in traj.positions()])
    reach = np.linalg.norm(p_base, axis=1)
    v, a = central_differences(traj.t, traj.positions())
    speed = np.linalg.norm(v, axis=1)
    accel = np.linalg.norm(a, axis=1)
    z = p_base[:, 2]
    tests = {
        "reach": (reach < model.reach_min) | (reach > model.reach_max),
        "workspace-z": (z < model.z_min) | (z > model.z_max),
        "speed": speed > model.v_max,
        "acceleration": accel > model.a_max,
    }
    values = {"reach": reach, "workspace-z": z, "speed": speed, "acceleration": accel}
    offset = {"reach": 0, "workspace-z": 0, "speed": 1, "acceleration": 1}
    for name in CONSTRAINTS:
        bad = np.flatnonzero(tests[name])
        if len(bad):
            k = int(bad[0])
            return Verdict.rejected(name, sample=k + offset[name], t=float(traj.t[k + offset[name]]), value=float(values[name][k]))
    return Verdict.ok("filter")


def kinematic_filter(ep: Episode, model: KinematicModel | Sequence[KinematicModel]) -> Verdict:
    """Verdict for a whole episode; bimanual episodes take one model per arm
    (a single model applies to both)."""
    if ep.verdict.stage == "ingest" and not ep.verdict.accepted:
        return ep.verdict
    models = [model] * len(ep.trajs) if isinstance(model, KinematicModel) else list(model)
    if len(models) != len(ep.trajs):
        raise ValueError(f"episode {ep.episode_id} has {len(ep.trajs)} arms but {len(models)} models were given")
    for arm, (traj, m) in enumerate(zip(ep.trajs, models)):
        v = check_trajectory(traj, m)
        if not v.accepted:
            if ep.bimanual:
                v = Verdict.rejected(v.reason, arm=arm, **v.detail)
            return v
    return Verdict.ok("filter")
