"""Seeded generators for synthetic poses, trajectories and sensor noise.

Noise "levels" are mean error magnitudes: a translation level of 6 mm
produces per-sample position errors whose mean norm is 6 mm. For isotropic
3-D Gaussian noise the mean norm is ``sigma * sqrt(8 / pi)``, so the
per-axis sigma is ``level * sqrt(pi / 8)``. Rotation noise uses the same
rule on the rotation vector.
"""

from __future__ import annotations

import math

import numpy as np

from .se3 import Pose, PoseTrajectory, compose, quat_from_axis_angle

MEAN_NORM_TO_SIGMA = math.sqrt(math.pi / 8.0)


def random_quaternion(rng: np.random.Generator) -> tuple[float, float, float, float]:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return tuple(float(c) for c in q)


def random_pose(rng: np.random.Generator, scale: float = 1.0) -> Pose:
    return Pose(tuple(rng.uniform(-scale, scale, 3)), random_quaternion(rng))


def rotvec_pose(rotvec, translation=(0.0, 0.0, 0.0)) -> Pose:
    rv = np.asarray(rotvec, dtype=float)
    angle = float(np.linalg.norm(rv))
    if angle == 0.0:
        return Pose(tuple(translation))
    return Pose(tuple(translation), quat_from_axis_angle(rv / angle, angle))


def random_trajectory(rng: np.random.Generator, n: int, dt: float = 0.1, frame_id: str = "world") -> PoseTrajectory:
    """Random walk in SE(3) with bounded step sizes."""
    poses = [random_pose(rng)]
    for _ in range(n - 1):
        step = rotvec_pose(rng.normal(0, 0.2, 3), rng.normal(0, 0.05, 3))
        poses.append(compose(poses[-1], step))
    return PoseTrajectory(np.arange(n) * dt, tuple(poses), frame_id)


def perturb(
    traj: PoseTrajectory,
    rng: np.random.Generator,
    pos_level: float = 0.0,
    rot_level_deg: float = 0.0,
) -> PoseTrajectory:
    """Add independent per-sample noise with the given mean magnitudes."""
    sp = pos_level * MEAN_NORM_TO_SIGMA
    sr = math.radians(rot_level_deg) * MEAN_NORM_TO_SIGMA
    out = []
    for p in traj.poses:
        dp = rng.normal(0, sp, 3) if sp > 0 else np.zeros(3)
        noise_rot = rotvec_pose(rng.normal(0, sr, 3)) if sr > 0 else Pose()
        t = tuple(np.asarray(p.translation) + dp)
        out.append(Pose(t, compose(noise_rot, Pose(rotation=p.rotation)).rotation))
    return PoseTrajectory(traj.t, tuple(out), traj.frame_id)


def lissajous_trajectory(
    duration: float,
    rate: float,
    center=(0.5, 0.0, 0.3),
    amplitude=(0.15, 0.2, 0.08),
    freqs=(0.13, 0.21, 0.17),
    phase: float = 0.0,
    t0: float = 0.0,
    frame_id: str = "map",
) -> PoseTrajectory:
    """Smooth, non-planar hand-like motion with slowly varying orientation."""
    n = int(round(duration * rate)) + 1
    t = t0 + np.arange(n) / rate
    tau = t - t0
    c = np.asarray(center, dtype=float)
    a = np.asarray(amplitude, dtype=float)
    f = np.asarray(freqs, dtype=float)
    pos = c + a * np.sin(2 * np.pi * f * tau[:, None] + phase + np.array([0.0, 1.1, 2.3]))
    poses = []
    for k in range(n):
        rv = 0.4 * np.array([math.sin(0.3 * tau[k] + phase), math.cos(0.23 * tau[k]), 0.5 * math.sin(0.17 * tau[k])])
        poses.append(rotvec_pose(rv, pos[k]))
    return PoseTrajectory(t, tuple(poses), frame_id)
