"""Discrete-event simulation of the deployment loop at a 1 ms tick.

The loop: a camera captures frames at the policy rate and delivers them
after the true camera latency. A replay policy, which recognizes the true
capture instant from the image, answers after ``inference_delay`` with a
chunk of reference poses and widths starting at that instant. The
scheduler labels the chunk with the *believed* observation time
(receive time minus the assumed camera latency), trims it and sends each
command ahead by the assumed execution latency. Each actuator linearly
interpolates between its last command and the next queued one, applies the
result after its true execution latency (transport delay) and follows it
through a first-order lag with time constant ``tracker_tau``.

Metrics:

* ``temporal_misalignment``: best-fit lag between the reference and the
  command trajectory the robot is executing (after transport delay).
  Zero when every latency is compensated, whatever the tracker does.
* ``output_lag``: the same lag measured on the physical robot output, so it
  also contains the tracker's group delay (about ``tracker_tau``).
* ``tracking_rmse``: position RMS error of the physical output.
* ``release_time_error``: how far apart the gripper's physical release
  (width crossing the midpoint between closed and open) and the robot's
  physical arrival at the reference release position are, in seconds.
* ``jerk_metric``: mean norm of the third derivative of the physical
  position, finite differences on a 10 ms grid.
* ``actuator_skew``: difference between the robot's and the gripper's
  timing error on the release step (effective time minus target time).

Latencies are rounded to whole ticks.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ConfigError
from .latency import LatencyProfile, _lag_core
from .scheduler import GRIPPER, GRIPPER_STROKE, ROBOT, ActionChunk, Dispatcher, plan_dispatch, trim_outdated
from .se3 import Pose, PoseTrajectory, interpolate_pose, quat_from_axis_angle, relative

TICK = 0.001
MIN_REFERENCE_DURATION = 3.0
G = 9.81


# -- reference motions -----------------------------------------------------


@dataclass(frozen=True)
class Reference:
    """Desired end-effector trajectory plus gripper width profile."""

    traj: PoseTrajectory
    width_t: np.ndarray
    width: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "width_t", np.asarray(self.width_t, dtype=float))
        object.__setattr__(self, "width", np.asarray(self.width, dtype=float))
        if len(self.width_t) != len(self.width) or len(self.width) < 2:
            raise ValueError("width profile needs matching times and values (>= 2 samples)")

    @property
    def duration(self) -> float:
        return float(self.traj.t[-1] - self.traj.t[0])

    @property
    def release_threshold(self) -> float:
        return 0.5 * (float(self.width.min()) + float(self.width.max()))

    def release_time(self) -> float:
        """Time of the single upward crossing of the width midpoint."""
        times = _upward_crossings(self.width_t, self.width, self.release_threshold)
        if len(times) != 1:
            raise ValueError(f"width profile must contain exactly one release event, found {len(times)}")
        return times[0]


@dataclass(frozen=True)
class TossParams:
    travel: float = 0.8
    v_peak: float = 2.0
    direction: tuple[float, float, float] = (math.cos(math.radians(40)), 0.0, math.sin(math.radians(40)))
    start: tuple[float, float, float] = (0.35, 0.0, 0.25)
    pre_hold: float = 1.0
    post_hold: float = 1.2
    pitch: float = 0.3
    width_closed: float = 0.02
    width_open: float = 0.08
    rate: float = 1000.0

    @classmethod
    def from_dict(cls, d: dict) -> TossParams:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown toss parameters: {sorted(unknown)}")
        kw = dict(d)
        for k in ("direction", "start"):
            if k in kw:
                kw[k] = tuple(float(v) for v in kw[k])
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["direction"] = list(self.direction)
        d["start"] = list(self.start)
        return d


@dataclass(frozen=True)
class TossProfile:
    reference: Reference
    params: TossParams
    t_release: float
    release_position: np.ndarray
    release_velocity: np.ndarray

    def projectile_range(self, landing_height: float = 0.0) -> float:
        return projectile_range(self.release_position, self.release_velocity, landing_height)


def toss_profile(params: TossParams | dict | None = None) -> TossProfile:
    """Accelerate-and-release motion along a straight line.

    Speed follows ``v_peak * sin^2(pi * s / T)`` over ``T = 2 * travel /
    v_peak``, so the travel is exact and the peak is reached halfway, where
    the gripper opens in a single step. The wrist pitches up linearly with
    the distance covered.
    """
    p = params if isinstance(params, TossParams) else TossParams.from_dict(params or {})
    if p.v_peak < 1.5:
        raise ValueError(f"toss peak speed must be at least 1.5 m/s, got {p.v_peak}")
    if p.travel <= 0 or p.pre_hold < 0 or p.post_hold < 0 or p.rate <= 0:
        raise ValueError("travel and rate must be positive, holds non-negative")
    if not 0 <= p.width_closed < p.width_open <= GRIPPER_STROKE:
        raise ValueError("widths must satisfy 0 <= closed < open <= stroke")
    u = np.asarray(p.direction, dtype=float)
    if np.linalg.norm(u) == 0:
        raise ValueError("direction must be non-zero")
    u = u / np.linalg.norm(u)
    start = np.asarray(p.start, dtype=float)
    T = 2.0 * p.travel / p.v_peak
    total = p.pre_hold + T + p.post_hold
    n = int(round(total * p.rate)) + 1
    t = np.arange(n) / p.rate
    tau = np.clip(t - p.pre_hold, 0.0, T)
    s = p.travel * (tau / T - np.sin(2 * np.pi * tau / T) / (2 * np.pi))
    pos = start + s[:, None] * u
    # pitch about the axis perpendicular to the motion in the vertical plane
    axis = np.cross(u, [0.0, 0.0, 1.0])
    if np.linalg.norm(axis) < 1e-9:
        axis = np.array([0.0, 1.0, 0.0])
    axis /= np.linalg.norm(axis)
    poses = tuple(Pose(tuple(pos[k]), quat_from_axis_angle(axis, -p.pitch * s[k] / p.travel)) for k in range(n))
    t_rel = p.pre_hold + T / 2
    # the step happens at the first sample at or after t_rel
    width = np.where(t >= t_rel - 1e-12, p.width_open, p.width_closed)
    ref = Reference(PoseTrajectory(t, poses, "world"), t, width)
    rel_pos = start + 0.5 * p.travel * u
    return TossProfile(ref, p, t_rel, rel_pos, p.v_peak * u)


def projectile_range(position, velocity, landing_height: float = 0.0, g: float = G) -> float:
    """Horizontal distance from the release point to where a ballistic object
    falls through ``landing_height`` (drag-free, z up)."""
    p = np.asarray(position, dtype=float)
    v = np.asarray(velocity, dtype=float)
    dz = p[2] - landing_height
    disc = v[2] ** 2 + 2 * g * dz
    if disc < 0:
        raise ValueError("object never reaches the landing height")
    t_land = (v[2] + math.sqrt(disc)) / g
    return float(np.hypot(v[0], v[1]) * t_land)


# -- config and report -----------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``profile`` holds the true hardware latencies, ``assumed_profile`` what
    the scheduler believes (all zeros reproduces running without latency
    matching). ``camera_jitter`` and ``proprio_noise`` are the random
    parts, drawn from ``seed``.
    """

    profile: LatencyProfile = LatencyProfile()
    assumed_profile: LatencyProfile = LatencyProfile()
    freq: float = 20.0
    inference_delay: float = 0.0
    tracker_tau: float = 0.03
    action_horizon: int = 6
    max_lag: float = 1.0
    camera_jitter: float = 0.0
    proprio_noise: float = 0.0
    seed: int = 0
    label: str = ""

    def __post_init__(self):
        if self.tracker_tau <= 0:
            raise ConfigError(f"tracker_tau must be positive for a stable tracker, got {self.tracker_tau}")
        if self.freq <= 0 or self.action_horizon < 1:
            raise ConfigError("freq must be positive and action_horizon at least 1")
        for name in ("inference_delay", "max_lag", "camera_jitter", "proprio_noise"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")

    @classmethod
    def matched(cls, profile: LatencyProfile, **kw) -> SimConfig:
        return cls(profile=profile, assumed_profile=profile, **kw)

    @classmethod
    def ablated(cls, profile: LatencyProfile, **kw) -> SimConfig:
        return cls(profile=profile, assumed_profile=LatencyProfile.zeros(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> SimConfig:
        d = dict(d)
        d.pop("toss", None)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown sim config keys: {sorted(unknown)}")
        profile = LatencyProfile.from_dict(d.pop("profile", {}))
        assumed = d.pop("assumed_profile", "matched")
        if assumed == "matched":
            assumed = profile
        elif assumed == "zero":
            assumed = LatencyProfile.zeros()
        elif isinstance(assumed, dict):
            assumed = LatencyProfile.from_dict(assumed)
        else:
            raise ConfigError("assumed_profile must be a latency object, 'matched' or 'zero'")
        return cls(profile=profile, assumed_profile=assumed, **d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["profile"] = self.profile.to_dict()
        d["assumed_profile"] = self.assumed_profile.to_dict()
        return d


@dataclass(frozen=True)
class SimReport:
    temporal_misalignment: float
    tracking_rmse: float
    release_time_error: float
    jerk_metric: float
    output_lag: float
    actuator_skew: float
    t_release_reference: float
    t_release_robot: float
    t_release_gripper: float
    n_commands: int
    empty_chunks: int
    details: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("details")
        return d


# -- simulation ------------------------------------------------------------


def _ticks(x: float) -> int:
    return int(round(x / TICK))


def _upward_crossings(t: np.ndarray, y: np.ndarray, level: float) -> list[float]:
    below = y < level
    idx = np.flatnonzero(below[:-1] & ~below[1:])
    out = []
    for i in idx:
        y0, y1 = y[i], y[i + 1]
        a = 0.0 if y1 == y0 else (level - y0) / (y1 - y0)
        out.append(float(t[i] + a * (t[i + 1] - t[i])))
    return out


def _signed_lag(t_ref, ref, t_meas, meas, max_lag):
    """Lag of ``meas`` behind ``ref`` in [-max_lag, max_lag] (positive = late)."""
    late, s_late, _, _ = _lag_core(t_ref, ref, t_meas, meas, max_lag, TICK)
    early, s_early, _, _ = _lag_core(t_meas, meas, t_ref, ref, max_lag, TICK)
    return (late, s_late) if s_late >= s_early else (-early, s_early)


class _Tracker:
    """First-order lag following a transport-delayed setpoint, integrated lazily."""

    def __init__(self, setpoints: np.ndarray, x0, delay: int, tau: float):
        self.sp = setpoints
        self.delay = delay
        self.tau = tau
        self.out = np.empty_like(setpoints)
        self.state = np.array(x0, dtype=float)
        self.x0 = self.state.copy()
        self.done = 0

    def effective(self, lo: int, hi: int) -> np.ndarray:
        idx = np.arange(lo, hi) - self.delay
        out = self.sp[np.clip(idx, 0, None)].copy()
        out[idx < 0] = self.x0
        return out

    def advance_to(self, m: int) -> None:
        if m <= self.done:
            return
        seg = kernels.first_order_track(self.state, self.effective(self.done, m), TICK, self.tau)
        self.out[self.done : m] = seg
        self.state = seg[-1].copy()
        self.done = m


def simulate(reference: Reference | TossProfile, cfg: SimConfig) -> SimReport:
    ref = reference.reference if isinstance(reference, TossProfile) else reference
    if ref.duration < MIN_REFERENCE_DURATION - 1e-9:
        raise ValueError(f"reference covers {ref.duration:.3f} s, need at least {MIN_REFERENCE_DURATION} s")
    t_rel_ref = ref.release_time()
    rng = np.random.default_rng(cfg.seed)
    true, assumed = cfg.profile, cfg.assumed_profile

    t0 = float(ref.traj.t[0])
    n_ref = _ticks(ref.duration) + 1
    n = n_ref + _ticks(cfg.max_lag + 0.1)
    # reference on the tick grid; held after its end
    ref_poses = [ref.traj.at(t0 + min(i, n_ref - 1) * TICK) for i in range(n_ref)]
    ref_pos = np.array([p.translation for p in ref_poses])
    ref_w = np.interp(t0 + np.arange(n_ref) * TICK, ref.width_t, ref.width)

    def ref_index(i: int) -> int:
        return min(max(i, 0), n_ref - 1)

    period = max(1, _ticks(1.0 / cfg.freq))
    dt = period * TICK
    L_cam, L_prop = _ticks(true.l_camera), _ticks(true.l_proprio)
    L_inf = _ticks(cfg.inference_delay)
    L_rob, L_grip = _ticks(true.l_robot_exec), _ticks(true.l_gripper_exec)

    # camera captures, optionally jittered, and the tick each chunk comes out
    outputs: dict[int, list[int]] = {}
    prev = -1
    for j in range(n // period + 1):
        c = j * period
        if cfg.camera_jitter > 0:
            c += int(round(rng.normal(0.0, cfg.camera_jitter) / TICK))
        c = max(c, prev + 1)
        prev = c
        out_tick = c + L_cam + L_inf
        if out_tick < n:
            outputs.setdefault(out_tick, []).append(c)

    p0 = ref_poses[0]
    sp_robot = np.empty((n, 7))
    sp_grip = np.empty((n, 1))
    robot = _Tracker(sp_robot, list(p0.translation) + list(p0.rotation), L_rob, cfg.tracker_tau)
    grip = _Tracker(sp_grip, [ref_w[0]], L_grip, cfg.tracker_tau)
    last = {ROBOT: (-math.inf, p0), GRIPPER: (-math.inf, float(ref_w[0]))}
    dispatcher = Dispatcher()
    empty_chunks = 0
    prev_q = np.array(p0.rotation)

    def proprio_pose(t_believed: float, now: int) -> Pose:
        # the sample the robot stream labels with ``t_believed`` was really
        # captured at t_believed + assumed - true proprio latency
        c = _ticks(t_believed + assumed.l_proprio) - L_prop
        # setpoints of the current tick are not written yet
        c = min(max(c, 0), now - L_prop, now - 1)
        if c < 0:
            return p0
        robot.advance_to(c + 1)
        x = robot.out[c]
        pos = x[:3] + (rng.normal(0.0, cfg.proprio_noise, 3) if cfg.proprio_noise > 0 else 0.0)
        return Pose(tuple(pos), tuple(x[3:]))

    for i in range(n):
        now = i * TICK
        for c in outputs.get(i, ()):
            t_recv = (c + L_cam) * TICK
            t_obs = t_recv - assumed.l_camera
            anchor = proprio_pose(t_obs, i)
            ks = [ref_index(c + k * period) for k in range(cfg.action_horizon)]
            rel = [relative(anchor, ref_poses[k]) for k in ks]
            chunk = ActionChunk.regular(t_obs, rel, [float(ref_w[k]) for k in ks], dt)
            kept = trim_outdated(chunk, now, assumed)
            if kept.empty:
                empty_chunks += 1
                continue
            dispatcher.submit(plan_dispatch(kept, assumed, current_pose=anchor))
        for cmd in dispatcher.advance(now):
            last[cmd.actuator] = (cmd.t_send, cmd.pose if cmd.actuator == ROBOT else cmd.width)
        # robot setpoint
        s0, v0 = last[ROBOT]
        nxt = dispatcher.next_pending(ROBOT)
        if nxt is not None and math.isfinite(s0):
            a = min(max((now - s0) / (nxt.t_send - s0), 0.0), 1.0)
            pose = interpolate_pose(v0, nxt.pose, a)
        else:
            pose = v0
        q = np.array(pose.rotation)
        if q @ prev_q < 0:
            q = -q
        prev_q = q
        sp_robot[i, :3] = pose.translation
        sp_robot[i, 3:] = q
        # gripper setpoint
        s0, w0 = last[GRIPPER]
        nxt = dispatcher.next_pending(GRIPPER)
        if nxt is not None and math.isfinite(s0):
            a = min(max((now - s0) / (nxt.t_send - s0), 0.0), 1.0)
            sp_grip[i, 0] = w0 + a * (nxt.width - w0)
        else:
            sp_grip[i, 0] = w0
    robot.advance_to(n)
    grip.advance_to(n)

    t_sim = np.arange(n) * TICK
    t_ref = t_sim[:n_ref]
    eff_pos = robot.effective(0, n)[:, :3]
    phys_pos = robot.out[:, :3]
    phys_w = grip.out[:, 0]

    axis = int(np.argmax(ref_pos.std(axis=0)))
    lag, score = _signed_lag(t_ref, ref_pos[:, axis], t_sim, eff_pos[:, axis], cfg.max_lag)
    out_lag, out_score = _signed_lag(t_ref, ref_pos[:, axis], t_sim, phys_pos[:, axis], cfg.max_lag)

    tracking_rmse = float(np.sqrt(np.mean(np.sum((phys_pos[:n_ref] - ref_pos) ** 2, axis=1))))

    # release events on the physical outputs
    k_rel = int(np.searchsorted(t_ref, t_rel_ref - t0 - 1e-12))
    k_rel = min(k_rel, n_ref - 1)
    lo_k, hi_k = max(k_rel - 1, 0), min(k_rel + 1, n_ref - 1)
    u = ref_pos[hi_k] - ref_pos[lo_k]
    if np.linalg.norm(u) == 0:
        raise ValueError("the robot does not move at the release event")
    u /= np.linalg.norm(u)
    target = float(np.interp(t_rel_ref - t0, t_ref, ref_pos @ u))
    proj = phys_pos @ u
    rc = _upward_crossings(t_sim, proj, target)
    t_robot = rc[0] if rc else math.inf
    gc = _upward_crossings(t_sim, phys_w, ref.release_threshold)
    t_grip = gc[0] if gc else math.inf
    release_err = abs(t_grip - t_robot) if math.isfinite(t_robot) and math.isfinite(t_grip) else math.inf

    # timing error of the release step on each actuator
    skew = math.nan
    log = dispatcher.log
    g_cmds = [c for c in log if c.actuator == GRIPPER and c.width >= ref.release_threshold]
    if g_cmds:
        g = g_cmds[0]
        r = [c for c in log if c.actuator == ROBOT and abs(c.t_target - g.t_target) < 1e-9]
        if r:
            err_g = g.t_send + L_grip * TICK - g.t_target
            err_r = r[0].t_send + L_rob * TICK - r[0].t_target
            skew = abs(err_g - err_r)

    dec = phys_pos[::10]
    jerk = np.diff(dec, n=3, axis=0) / (10 * TICK) ** 3
    jerk_metric = float(np.mean(np.linalg.norm(jerk, axis=1)))

    return SimReport(
        temporal_misalignment=abs(lag),
        tracking_rmse=tracking_rmse,
        release_time_error=release_err,
        jerk_metric=jerk_metric,
        output_lag=abs(out_lag),
        actuator_skew=skew,
        t_release_reference=t_rel_ref,
        t_release_robot=t0 + t_robot,
        t_release_gripper=t0 + t_grip,
        n_commands=len(log),
        empty_chunks=empty_chunks,
        details={
            "signed_lag": lag,
            "lag_score": score,
            "output_lag_signed": out_lag,
            "output_lag_score": out_score,
            "t": t_sim + t0,
            "reference_position": ref_pos,
            "command_position": eff_pos,
            "output_position": phys_pos,
            "output_width": phys_w,
            "commands": list(log),
        },
    )


# -- sweeps ----------------------------------------------------------------

CSV_FIELDS = (
    ["index", "label", "freq", "inference_delay", "tracker_tau", "seed"]
    + [f"true_{k}" for k in ("l_camera", "l_proprio", "l_gripper_exec", "l_robot_exec")]
    + [f"assumed_{k}" for k in ("l_camera", "l_proprio", "l_gripper_exec", "l_robot_exec")]
    + list(SimReport.__dataclass_fields__)[:-1]
)


def sweep(cfgs: Sequence[SimConfig], reference: Reference | TossProfile | None = None) -> list[SimReport]:
    """Run :func:`simulate` once per config on a shared reference
    (default: the default toss)."""
    cfgs = list(cfgs)
    if not cfgs:
        return []
    ref = reference if reference is not None else toss_profile()
    return [simulate(ref, c) for c in cfgs]


def sweep_rows(cfgs: Sequence[SimConfig], reports: Sequence[SimReport]) -> list[dict]:
    rows = []
    for k, (c, r) in enumerate(zip(cfgs, reports)):
        row = {"index": k, "label": c.label, "freq": c.freq, "inference_delay": c.inference_delay, "tracker_tau": c.tracker_tau, "seed": c.seed}
        row.update({f"true_{k2}": v for k2, v in c.profile.to_dict().items()})
        row.update({f"assumed_{k2}": v for k2, v in c.assumed_profile.to_dict().items()})
        row.update(r.to_dict())
        rows.append(row)
    return rows


def write_sweep_csv(path: str | Path | None, cfgs: Sequence[SimConfig], reports: Sequence[SimReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in sweep_rows(cfgs, reports):
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
