"""Trajectory accuracy: rigid alignment, ATE, and inter-gripper RPE."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAlignmentError, OutOfRangeError
from .se3 import Pose, PoseTrajectory, angular_distance, compose, inter_gripper_pose, quat_from_matrix

ASSOC_GATE = 0.010


def associate(t_a: np.ndarray, t_b: np.ndarray, max_dt: float = ASSOC_GATE) -> tuple[np.ndarray, np.ndarray]:
    """One-to-one nearest-timestamp matching within ``max_dt``.

    For each timestamp in ``t_a`` take its nearest ``t_b``; when several
    claim the same ``t_b`` the closest wins (earlier index on ties).
    """
    t_a = np.asarray(t_a, dtype=float)
    t_b = np.asarray(t_b, dtype=float)
    if len(t_a) == 0 or len(t_b) == 0:
        return np.zeros(0, int), np.zeros(0, int)
    j = np.searchsorted(t_b, t_a)
    lo = np.clip(j - 1, 0, len(t_b) - 1)
    hi = np.clip(j, 0, len(t_b) - 1)
    nearest = np.where(np.abs(t_b[lo] - t_a) <= np.abs(t_b[hi] - t_a), lo, hi)
    dt = np.abs(t_b[nearest] - t_a)
    best: dict[int, int] = {}
    for i in np.flatnonzero(dt <= max_dt + 1e-12):
        k = int(nearest[i])
        if k not in best or dt[i] < dt[best[k]]:
            best[k] = int(i)
    ia = np.array(sorted(best.values()), dtype=int)
    return ia, nearest[ia].astype(int)


@dataclass(frozen=True)
class AlignmentResult:
    transform: Pose
    residual_rmse: float
    scale: float = 1.0
    est_idx: np.ndarray | None = None
    gt_idx: np.ndarray | None = None


def umeyama(src: np.ndarray, dst: np.ndarray, with_scale: bool = False) -> tuple[np.ndarray, np.ndarray, float]:
    """Least-squares ``dst ~ c * R @ src + t``; returns ``(R, t, c)``."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    n = len(src)
    if n < 3:
        raise DegenerateAlignmentError(f"need at least 3 associated points, got {n}")
    mu_s, mu_d = src.mean(0), dst.mean(0)
    xs, xd = src - mu_s, dst - mu_d
    for pts in (xs, xd):
        sv = np.linalg.svd(pts, compute_uv=False)
        if sv[0] < 1e-12 or sv[1] < 1e-9 * sv[0]:
            raise DegenerateAlignmentError("point set is coincident or collinear")
    cov = xd.T @ xs / n
    u, d, vt = np.linalg.svd(cov)
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    r = u @ s @ vt
    c = float(np.trace(np.diag(d) @ s) / (xs**2).sum() * n) if with_scale else 1.0
    t = mu_d - c * r @ mu_s
    return r, t, c


def rigid_align(est: PoseTrajectory, gt: PoseTrajectory, max_dt: float = ASSOC_GATE, with_scale: bool = False) -> AlignmentResult:
    """Closed-form transform taking the estimate's frame onto ground truth.

    Scale is fixed at 1 unless ``with_scale`` (diagnostics only).
    """
    ie, ig = associate(est.t, gt.t, max_dt)
    pe, pg = est.positions()[ie], gt.positions()[ig]
    r, t, c = umeyama(pe, pg, with_scale)
    resid = pg - (c * (r @ pe.T).T + t)
    rmse = float(np.sqrt((resid**2).sum(1).mean()))
    return AlignmentResult(Pose(tuple(t), quat_from_matrix(r)), rmse, c, ie, ig)


@dataclass(frozen=True)
class AteReport:
    pos_rmse: float
    pos_mean: float
    rot_mean: float
    rot_rmse: float
    pos_errors: np.ndarray
    rot_errors: np.ndarray
    alignment: AlignmentResult

    @property
    def n(self) -> int:
        return len(self.pos_errors)

    def to_dict(self) -> dict:
        return {
            "pos_rmse_m": self.pos_rmse,
            "pos_mean_m": self.pos_mean,
            "rot_mean_deg": self.rot_mean,
            "rot_rmse_deg": self.rot_rmse,
            "n": self.n,
            "alignment": {
                "transform": self.alignment.transform.to_list(),
                "residual_rmse_m": self.alignment.residual_rmse,
                "scale": self.alignment.scale,
            },
        }


def ate(est: PoseTrajectory, gt: PoseTrajectory, max_dt: float = ASSOC_GATE, with_scale: bool = False) -> AteReport:
    """Absolute trajectory error after rigid alignment; rotation errors in degrees."""
    ie, ig = associate(est.t, gt.t, max_dt)
    if len(ie) == 0:
        raise OutOfRangeError("no est/gt samples associate within the time gate", gate=max_dt)
    al = rigid_align(est, gt, max_dt, with_scale)
    pos, rot = [], []
    for i, j in zip(ie, ig):
        p = compose(al.transform, est.poses[i])
        tp = np.asarray(p.translation)
        if with_scale:
            tp = al.transform.translation + al.scale * (np.asarray(p.translation) - al.transform.translation)
        pos.append(float(np.linalg.norm(tp - gt.poses[j].translation)))
        rot.append(math.degrees(angular_distance(p.rotation, gt.poses[j].rotation)))
    pos_a, rot_a = np.array(pos), np.array(rot)
    return AteReport(
        float(np.sqrt((pos_a**2).mean())),
        float(pos_a.mean()),
        float(rot_a.mean()),
        float(np.sqrt((rot_a**2).mean())),
        pos_a,
        rot_a,
        al,
    )


@dataclass(frozen=True)
class RpeReport:
    pos_mean: float
    rot_mean: float
    pos_rmse: float
    pos_errors: np.ndarray
    rot_errors: np.ndarray

    def __iter__(self):
        return iter((self.pos_mean, self.rot_mean))

    def to_dict(self) -> dict:
        return {
            "pos_mean_m": self.pos_mean,
            "rot_mean_deg": self.rot_mean,
            "pos_rmse_m": self.pos_rmse,
            "n": len(self.pos_errors),
        }


def inter_gripper_rpe(
    left_est: PoseTrajectory,
    right_est: PoseTrajectory,
    left_gt: PoseTrajectory,
    right_gt: PoseTrajectory,
    max_dt: float = ASSOC_GATE,
) -> RpeReport:
    """Error of the estimated left-to-right gripper pose against ground truth.

    Samples are keyed on ``left_est`` timestamps; the other three
    trajectories are associated to them with the nearest-timestamp gate.
    """
    base = left_est.t
    idx = [np.arange(len(base))]
    keep = np.ones(len(base), dtype=bool)
    maps = []
    for other in (right_est, left_gt, right_gt):
        ia, ib = associate(base, other.t, max_dt)
        m = np.full(len(base), -1)
        m[ia] = ib
        keep &= m >= 0
        maps.append(m)
    sel = idx[0][keep]
    if len(sel) == 0:
        raise OutOfRangeError("the four trajectories share no associated timestamps", gate=max_dt)
    pos, rot = [], []
    for i in sel:
        e = inter_gripper_pose(left_est.poses[i], right_est.poses[maps[0][i]])
        g = inter_gripper_pose(left_gt.poses[maps[1][i]], right_gt.poses[maps[2][i]])
        pos.append(math.dist(e.translation, g.translation))
        rot.append(math.degrees(angular_distance(e.rotation, g.rotation)))
    pos_a, rot_a = np.array(pos), np.array(rot)
    return RpeReport(float(pos_a.mean()), float(rot_a.mean()), float(np.sqrt((pos_a**2).mean())), pos_a, rot_a)
