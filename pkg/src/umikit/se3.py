"""Rigid transforms and the relative / delta / absolute action representations.

Conventions:
    - A ``Pose`` is a frame-to-world transform ``T = [R | p]``; ``compose(a, b)``
      is the matrix product ``T_a @ T_b`` ("apply b, then a").
    - The pose of ``b`` expressed relative to ``a`` is ``inverse(a) @ b``.
    - Quaternions are (w, x, y, z), unit norm, canonicalized so ``w >= 0``.

Scalar math is done on Python floats rather than numpy: poses are tiny and
numpy call overhead dominates at this size.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import OutOfRangeError

_NORM_TOL = 1e-9
# timestamps closer than this are treated as the same sample time
NODE_SNAP = 1e-9


def _canonical_quat(w: float, x: float, y: float, z: float) -> tuple[float, float, float, float]:
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    # already unit up to rounding: keep the bits so serialization round-trips
    if abs(n - 1.0) > 4e-16:
        w, x, y, z = w / n, x / n, y / n, z / n
    if w < 0.0 or (w == 0.0 and (x < 0.0 or (x == 0.0 and (y < 0.0 or (y == 0.0 and z < 0.0))))):
        w, x, y, z = -w, -x, -y, -z
    return (w, x, y, z)


def quat_multiply(a: Sequence[float], b: Sequence[float]) -> tuple[float, float, float, float]:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_rotate(q: Sequence[float], v: Sequence[float]) -> tuple[float, float, float]:
    """Rotate vector ``v`` by unit quaternion ``q``."""
    w, x, y, z = q
    vx, vy, vz = v
    # t = 2 * cross(q.xyz, v); v' = v + w * t + cross(q.xyz, t)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def quat_from_axis_angle(axis: Sequence[float], angle: float) -> tuple[float, float, float, float]:
    ax, ay, az = (float(c) for c in axis)
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n < 1e-15:
        if abs(angle) > 0.0:
            raise ValueError("rotation axis must be non-zero")
        return (1.0, 0.0, 0.0, 0.0)
    s = math.sin(0.5 * angle) / n
    return _canonical_quat(math.cos(0.5 * angle), ax * s, ay * s, az * s)


def quat_to_matrix(q: Sequence[float]) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(m: np.ndarray) -> tuple[float, float, float, float]:
    """Shepperd's method; robust for all rotation angles."""
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = (0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)
    return _canonical_quat(*(float(c) for c in q))


def angular_distance(q1: Sequence[float], q2: Sequence[float]) -> float:
    """Geodesic angle between two rotations, radians, in [0, pi]."""
    # atan2 of the relative rotation stays accurate near zero, unlike acos
    w = q1[0] * q2[0] + q1[1] * q2[1] + q1[2] * q2[2] + q1[3] * q2[3]
    x = q1[0] * q2[1] - q1[1] * q2[0] - q1[2] * q2[3] + q1[3] * q2[2]
    y = q1[0] * q2[2] + q1[1] * q2[3] - q1[2] * q2[0] - q1[3] * q2[1]
    z = q1[0] * q2[3] - q1[1] * q2[2] + q1[2] * q2[1] - q1[3] * q2[0]
    return 2.0 * math.atan2(math.sqrt(x * x + y * y + z * z), abs(w))


@dataclass(frozen=True, slots=True)
class Pose:
    """Rigid transform: translation in meters plus unit quaternion (w, x, y, z)."""

    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        # hot path: unrolled checks, this runs for every composed pose
        isfinite = math.isfinite
        try:
            tx, ty, tz = self.translation
            t = (float(tx), float(ty), float(tz))
        except (TypeError, ValueError):
            t = ()
        if not t or not (isfinite(t[0]) and isfinite(t[1]) and isfinite(t[2])):
            raise ValueError(f"translation must be a finite 3-vector, got {self.translation!r}")
        try:
            rw, rx, ry, rz = self.rotation
            r = (float(rw), float(rx), float(ry), float(rz))
        except (TypeError, ValueError):
            r = ()
        if not r or not (isfinite(r[0]) and isfinite(r[1]) and isfinite(r[2]) and isfinite(r[3])):
            raise ValueError(f"rotation must be a finite quaternion, got {self.rotation!r}")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", _canonical_quat(*r))

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> Pose:
        return cls((x, y, z))

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle: float, translation=(0.0, 0.0, 0.0)) -> Pose:
        return cls(translation, quat_from_axis_angle(axis, angle))

    @classmethod
    def from_matrix(cls, m) -> Pose:
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        return cls(tuple(m[:3, 3]), quat_from_matrix(m[:3, :3]))

    @classmethod
    def from_list(cls, v: Sequence[float]) -> Pose:
        """Inverse of :meth:`to_list`: ``[x, y, z, qw, qx, qy, qz]``."""
        if len(v) != 7:
            raise ValueError(f"pose list must have 7 entries, got {len(v)}")
        return cls(tuple(v[:3]), tuple(v[3:]))

    def to_list(self) -> list[float]:
        return [*self.translation, *self.rotation]

    def matrix(self) -> np.ndarray:
        m = np.zeros((4, 4))
        m[:3, :3] = quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        m[3, 3] = 1.0
        return m

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def apply(self, point: Sequence[float]) -> tuple[float, float, float]:
        rx, ry, rz = quat_rotate(self.rotation, point)
        tx, ty, tz = self.translation
        return (rx + tx, ry + ty, rz + tz)

    def angle(self) -> float:
        """Rotation angle in radians."""
        return angular_distance(self.rotation, (1.0, 0.0, 0.0, 0.0))

    def __matmul__(self, other: Pose) -> Pose:
        return compose(self, other)

    def isclose(self, other: Pose, atol: float = 1e-9) -> bool:
        dt = max(abs(a - b) for a, b in zip(self.translation, other.translation))
        return dt <= atol and angular_distance(self.rotation, other.rotation) <= atol


IDENTITY = Pose()


def compose(a: Pose, b: Pose) -> Pose:
    """``T_a @ T_b``."""
    rx, ry, rz = quat_rotate(a.rotation, b.translation)
    ax, ay, az = a.translation
    return Pose((ax + rx, ay + ry, az + rz), quat_multiply(a.rotation, b.rotation))


def inverse(a: Pose) -> Pose:
    w, x, y, z = a.rotation
    conj = (w, -x, -y, -z)
    tx, ty, tz = quat_rotate(conj, a.translation)
    return Pose((-tx, -ty, -tz), conj)


def relative(a: Pose, b: Pose) -> Pose:
    """Pose of ``b`` expressed in the frame of ``a``."""
    return compose(inverse(a), b)


def slerp(q0: Sequence[float], q1: Sequence[float], alpha: float) -> tuple[float, float, float, float]:
    dot = q0[0] * q1[0] + q0[1] * q1[1] + q0[2] * q1[2] + q0[3] * q1[3]
    if dot < 0.0:
        q1 = (-q1[0], -q1[1], -q1[2], -q1[3])
        dot = -dot
    if dot > 0.9999995:
        # nearly parallel: normalized lerp is accurate to ~1e-13 here
        s0, s1 = 1.0 - alpha, alpha
    else:
        theta = math.acos(dot)
        sin_t = math.sin(theta)
        s0 = math.sin((1.0 - alpha) * theta) / sin_t
        s1 = math.sin(alpha * theta) / sin_t
    return _canonical_quat(*(s0 * c0 + s1 * c1 for c0, c1 in zip(q0, q1)))


def interpolate_pose(a: Pose, b: Pose, alpha: float) -> Pose:
    """Lerp translation, slerp rotation along the shorter arc."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return a
    if alpha == 1.0:
        return b
    t = tuple(pa + alpha * (pb - pa) for pa, pb in zip(a.translation, b.translation))
    return Pose(t, slerp(a.rotation, b.rotation, alpha))


@dataclass(frozen=True)
class PoseTrajectory:
    """Timestamped poses in one coordinate frame; timestamps strictly increasing."""

    t: np.ndarray
    poses: tuple[Pose, ...]
    frame_id: str = "world"
    _pos: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        poses = tuple(self.poses)
        if len(t) != len(poses):
            raise ValueError(f"{len(t)} timestamps for {len(poses)} poses")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "poses", poses)

    @classmethod
    def from_arrays(cls, t, positions, quaternions=None, frame_id: str = "world") -> PoseTrajectory:
        positions = np.asarray(positions, dtype=float)
        if quaternions is None:
            quaternions = np.tile([1.0, 0.0, 0.0, 0.0], (len(positions), 1))
        poses = tuple(Pose(tuple(p), tuple(q)) for p, q in zip(positions, np.asarray(quaternions, dtype=float)))
        return cls(np.asarray(t, dtype=float), poses, frame_id)

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, k):
        return float(self.t[k]), self.poses[k]

    def __iter__(self):
        return iter(zip(self.t.tolist(), self.poses))

    def positions(self) -> np.ndarray:
        if self._pos is None:
            object.__setattr__(self, "_pos", np.array([p.translation for p in self.poses], dtype=float).reshape(-1, 3))
        return self._pos

    def quaternions(self) -> np.ndarray:
        return np.array([p.rotation for p in self.poses], dtype=float).reshape(-1, 4)

    def transformed(self, g: Pose, frame_id: str | None = None) -> PoseTrajectory:
        """Left-multiply every pose by ``g`` (change of world frame)."""
        return PoseTrajectory(self.t, tuple(compose(g, p) for p in self.poses), frame_id or self.frame_id)

    def shifted(self, dt: float) -> PoseTrajectory:
        return PoseTrajectory(self.t + dt, self.poses, self.frame_id)

    def at(self, t: float) -> Pose:
        """Interpolated pose at time ``t``; raises OutOfRangeError outside coverage."""
        ts = self.t
        t = snap_time(ts, t)
        if len(ts) == 0 or t < ts[0] or t > ts[-1]:
            lo = float(ts[0]) if len(ts) else float("nan")
            hi = float(ts[-1]) if len(ts) else float("nan")
            raise OutOfRangeError(f"t={t!r} outside trajectory coverage [{lo}, {hi}]", t=t, start=lo, end=hi)
        i = int(np.searchsorted(ts, t, side="left"))
        if ts[i] == t:
            return self.poses[i]
        t0, t1 = ts[i - 1], ts[i]
        return interpolate_pose(self.poses[i - 1], self.poses[i], float((t - t0) / (t1 - t0)))


def snap_time(ts: np.ndarray, t: float, tol: float = NODE_SNAP) -> float:
    """``t`` moved onto the nearest timestamp when within ``tol``.

    Query times built as ``t_obs - k / freq`` carry float noise; snapping
    keeps lookups that are meant to hit a sample exact.
    """
    if len(ts) == 0:
        return t
    i = int(np.searchsorted(ts, t))
    for j in (i - 1, i):
        if 0 <= j < len(ts) and abs(ts[j] - t) <= tol:
            return float(ts[j])
    return t


def relative_trajectory(traj: PoseTrajectory, base_index: int) -> PoseTrajectory:
    """Express every pose relative to the pose at ``base_index``."""
    n = len(traj)
    if n == 0:
        raise ValueError("empty trajectory")
    if not 0 <= base_index < n:
        raise IndexError(f"base_index {base_index} out of range for length {n}")
    inv_base = inverse(traj.poses[base_index])
    poses = tuple(IDENTITY if k == base_index else compose(inv_base, p) for k, p in enumerate(traj.poses))
    return PoseTrajectory(traj.t, poses, f"relative:{float(traj.t[base_index])!r}")


def to_delta(traj: PoseTrajectory | Sequence[Pose]) -> list[Pose]:
    poses = traj.poses if isinstance(traj, PoseTrajectory) else tuple(traj)
    if len(poses) < 2:
        raise ValueError("delta representation needs at least 2 samples")
    return [compose(inverse(a), b) for a, b in zip(poses[:-1], poses[1:])]


def accumulate_deltas(deltas: Iterable[Pose], base: Pose) -> list[Pose]:
    out = [base]
    for d in deltas:
        out.append(compose(out[-1], d))
    return out


def relative_proprioception(history: PoseTrajectory) -> PoseTrajectory:
    """History relative to its newest pose, so the last element is identity."""
    if len(history) == 0:
        raise ValueError("empty proprioception history")
    return relative_trajectory(history, len(history) - 1)


def inter_gripper_pose(left: Pose, right: Pose) -> Pose:
    """Pose of the right gripper in the left gripper's frame."""
    return compose(inverse(left), right)


class ActionRepr(str, enum.Enum):
    RELATIVE_TRAJECTORY = "relative"
    DELTA = "delta"
    ABSOLUTE = "absolute"


def encode_actions(poses: Sequence[Pose], base: Pose, repr: ActionRepr) -> list[Pose]:
    """Absolute target poses -> chosen representation.

    ``base`` is the current end-effector pose at the observation anchor. For
    delta actions the first step is taken relative to ``base``.
    """
    repr = ActionRepr(repr)
    if repr is ActionRepr.ABSOLUTE:
        return list(poses)
    if repr is ActionRepr.RELATIVE_TRAJECTORY:
        inv_base = inverse(base)
        return [compose(inv_base, p) for p in poses]
    return to_delta([base, *poses])


def decode_actions(encoded: Sequence[Pose], base: Pose, repr: ActionRepr) -> list[Pose]:
    repr = ActionRepr(repr)
    if repr is ActionRepr.ABSOLUTE:
        return list(encoded)
    if repr is ActionRepr.RELATIVE_TRAJECTORY:
        return [compose(base, p) for p in encoded]
    return accumulate_deltas(encoded, base)[1:]


def convert_actions(encoded: Sequence[Pose], base: Pose, src: ActionRepr, dst: ActionRepr) -> list[Pose]:
    return encode_actions(decode_actions(encoded, base, src), base, dst)
