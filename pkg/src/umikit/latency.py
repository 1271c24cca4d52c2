"""Latency measurement: camera, proprioception, and execution latencies.

Execution latency is recovered from an end-to-end lag between a commanded
probe signal and the measured response, minus the proprioception latency
that the measurement path adds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import (
    AmbiguityError,
    ClockSkewError,
    InsufficientOverlapError,
    LowConfidenceError,
    MeasurementInconsistencyError,
)
from .se3 import PoseTrajectory
from .streams import TimedStream

MIN_SCORE = 0.8


@dataclass(frozen=True)
class LatencyProfile:
    """Measured per-hardware latencies, seconds."""

    l_camera: float = 0.0
    l_proprio: float = 0.0
    l_gripper_exec: float = 0.0
    l_robot_exec: float = 0.0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.l_camera < self.l_proprio:
            warnings.warn(
                f"camera latency {self.l_camera} is below proprioception latency {self.l_proprio}",
                stacklevel=3,
            )

    @classmethod
    def zeros(cls) -> LatencyProfile:
        return cls()

    @classmethod
    def from_dict(cls, d: dict) -> LatencyProfile:
        return cls(**{k: float(d.get(k, 0.0)) for k in ("l_camera", "l_proprio", "l_gripper_exec", "l_robot_exec")})

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def max_exec(self) -> float:
        return max(self.l_robot_exec, self.l_gripper_exec)


@dataclass(frozen=True)
class RobustLatency:
    """Median of repeated measurements plus their spread (max - min)."""

    value: float
    spread: float
    n: int

    def __float__(self) -> float:
        return self.value


def _robust(samples: Sequence[float]) -> RobustLatency:
    a = np.asarray(samples, dtype=float)
    return RobustLatency(float(np.median(a)), float(a.max() - a.min()), len(a))


def camera_latency(qr_decodes: Iterable[tuple[float, float]], l_display: float) -> RobustLatency:
    """Camera pipeline latency from decoded on-screen clock readings.

    Each decode is ``(t_recv, t_display)``; the per-frame latency is
    ``t_recv - t_display - l_display``.
    """
    decodes = list(qr_decodes)
    if not decodes:
        raise ValueError("need at least one QR decode")
    vals = []
    for i, (t_recv, t_display) in enumerate(decodes):
        raw = t_recv - t_display
        if raw < 0:
            raise ClockSkewError(f"decode {i}: receive time precedes displayed time by {-raw:.6f} s", index=i)
        vals.append(t_recv - t_display - l_display)
    out = _robust(vals)
    if out.value < 0:
        raise MeasurementInconsistencyError(f"display latency {l_display} exceeds measured delay", median=out.value)
    return out


def proprio_latency(t_robot: float, t_recv: float) -> float:
    """Latency of a hardware-timestamped proprioception message."""
    d = t_recv - t_robot
    if d < 0:
        raise ClockSkewError(f"received {-d:.6f} s before the robot timestamp", t_robot=t_robot, t_recv=t_recv)
    return d


def proprio_latency_batch(pairs: Iterable[tuple[float, float]]) -> RobustLatency:
    """Median over ``(t_robot, t_recv)`` pairs."""
    vals = [proprio_latency(a, b) for a, b in pairs]
    if not vals:
        raise ValueError("empty batch")
    return _robust(vals)


def half_rtt(rtt) -> float:
    """Half a round-trip time; the median is used for a batch of pings."""
    a = np.atleast_1d(np.asarray(rtt, dtype=float))
    if a.size == 0 or (a < 0).any():
        raise ValueError("round-trip times must be non-negative")
    return float(np.median(a)) / 2.0


def exec_latency(l_e2e: float, l_obs: float) -> float:
    d = l_e2e - l_obs
    if d < 0:
        raise MeasurementInconsistencyError(
            f"end-to-end latency {l_e2e} is below observation latency {l_obs}", l_e2e=l_e2e, l_obs=l_obs
        )
    return d


# -- probe signals ---------------------------------------------------------


@dataclass(frozen=True)
class ProbeSignal:
    """A commanded test waveform together with its sampled stream."""

    stream: TimedStream
    waveform: str
    base_freq: float
    amplitude: float
    offset: float = 0.0
    f_end: float | None = None
    duration: float = 0.0
    phase: float = 0.0

    def _phase(self, t):
        if self.waveform == "sine":
            return 2 * np.pi * self.base_freq * t + self.phase
        k = (self.f_end - self.base_freq) / self.duration
        return 2 * np.pi * (self.base_freq * t + 0.5 * k * t * t) + self.phase

    def evaluate(self, t) -> np.ndarray:
        """Analytic value at arbitrary times; held at the first value for ``t < 0``."""
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return self.offset + self.amplitude * np.sin(self._phase(t))

    def instantaneous_frequency(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.waveform == "sine":
            return np.full_like(t, self.base_freq)
        return self.base_freq + (self.f_end - self.base_freq) * t / self.duration

    @property
    def longest_period(self) -> float:
        f = self.base_freq if self.f_end is None else min(self.base_freq, self.f_end)
        return 1.0 / f

    @property
    def t(self) -> np.ndarray:
        return self.stream.t

    @property
    def values(self) -> np.ndarray:
        return self.stream.values


def generate_probe(
    kind: str = "chirp",
    freq: float = 0.5,
    duration: float = 10.0,
    rate: float = 100.0,
    amplitude: float = 1.0,
    offset: float = 0.0,
    f_end: float = 3.0,
    phase: float | None = 0.0,
    seed: int = 0,
    stream_id: str = "probe",
) -> ProbeSignal:
    """Sine or linear-chirp probe sampled at ``rate``.

    ``phase=None`` draws the initial phase from ``seed``.
    """
    if kind not in ("sine", "chirp"):
        raise ValueError(f"probe kind must be 'sine' or 'chirp', got {kind!r}")
    if freq <= 0 or duration <= 0 or rate <= 0 or amplitude <= 0:
        raise ValueError("freq, duration, rate and amplitude must be positive")
    top = freq if kind == "sine" else max(freq, f_end)
    if kind == "chirp" and f_end <= 0:
        raise ValueError("f_end must be positive")
    if rate < 10 * top:
        raise ValueError(f"sampling rate {rate} Hz is below 10x the highest probe frequency {top} Hz")
    if phase is None:
        phase = float(np.random.default_rng(seed).uniform(0, 2 * np.pi))
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    probe = ProbeSignal(
        TimedStream(t, np.zeros(n), "value", 0.0, stream_id, rate),
        kind,
        float(freq),
        float(amplitude),
        float(offset),
        float(f_end) if kind == "chirp" else None,
        float(duration),
        float(phase),
    )
    return ProbeSignal(
        TimedStream(t, probe.evaluate(t), "value", 0.0, stream_id, rate),
        probe.waveform,
        probe.base_freq,
        probe.amplitude,
        probe.offset,
        probe.f_end,
        probe.duration,
        probe.phase,
    )


def synthetic_response(
    probe: ProbeSignal,
    exec_latency: float,
    obs_latency: float = 0.0,
    tau: float = 0.0,
    noise: float = 0.0,
    seed: int = 0,
    rate: float | None = None,
    stream_id: str = "measured",
) -> TimedStream:
    """Measured stream of an actuator that follows ``probe`` after a transport
    delay (and an optional first-order lag), reported with ``obs_latency``.

    ``noise`` is the Gaussian standard deviation as a fraction of amplitude.
    """
    rate = rate or probe.stream.native_rate()
    t0, t1 = float(probe.t[0]), float(probe.t[-1])
    t_phys = np.arange(int(round((t1 - t0) * rate)) + 1) / rate + t0
    if tau > 0:
        fine = 1e-4
        tf = np.arange(t0 - exec_latency, t1 + fine, fine)
        cmd = probe.evaluate(tf)
        y = kernels.first_order_track([cmd[0]], cmd, fine, tau)
        resp = np.interp(t_phys - exec_latency, tf, y)
    else:
        resp = probe.evaluate(t_phys - exec_latency)
    if noise > 0:
        resp = resp + np.random.default_rng(seed).normal(0.0, noise * probe.amplitude, len(resp))
    return TimedStream(t_phys + obs_latency, resp, "value", obs_latency, stream_id, rate)


# -- lag estimation --------------------------------------------------------


@dataclass(frozen=True)
class LagEstimate:
    l_e2e: float
    score: float
    method: str
    lags: np.ndarray
    ncc: np.ndarray

    def __iter__(self):
        return iter((self.l_e2e, self.score))

    def to_dict(self) -> dict:
        return {"l_e2e": self.l_e2e, "score": self.score, "method": self.method}


def lag_grid(max_lag: float, resolution: float) -> np.ndarray:
    if max_lag < 0 or resolution <= 0:
        raise ValueError("max_lag must be >= 0 and resolution > 0")
    n = int(math.floor(max_lag / resolution + 1e-9)) + 1
    return np.arange(n) * resolution


def parabolic_peak(y: np.ndarray, k: int) -> tuple[float, float]:
    """Sub-sample offset in [-0.5, 0.5] and value of the vertex through ``y[k-1:k+2]``."""
    if k <= 0 or k >= len(y) - 1:
        return 0.0, float(y[k])
    a, b, c = float(y[k - 1]), float(y[k]), float(y[k + 1])
    den = a - 2 * b + c
    if den >= 0:
        return 0.0, b
    delta = max(-0.5, min(0.5, 0.5 * (a - c) / den))
    return delta, b - 0.25 * (a - c) * delta


def _lag_core(t_ref, ref, t_meas, meas, max_lag, resolution, min_period=None):
    t_ref = np.asarray(t_ref, dtype=float)
    t_meas = np.asarray(t_meas, dtype=float)
    if len(t_meas) < 2 or len(t_ref) < 2:
        raise InsufficientOverlapError("signals need at least two samples each")
    hi = min(t_ref[-1], t_meas[-1] - max_lag)
    lo = max(t_ref[0], t_meas[0])
    win = (t_ref >= lo) & (t_ref <= hi)
    overlap = hi - lo
    need = 3 * min_period if min_period else 0.0
    if win.sum() < 8 or overlap < need:
        raise InsufficientOverlapError(
            f"overlap of {max(overlap, 0.0):.3f} s after trimming max_lag is too short (need {need:.3f} s)",
            overlap=max(overlap, 0.0),
            required=need,
        )
    lags = lag_grid(max_lag, resolution)
    ncc = kernels.ncc_lag_grid(t_ref[win], np.asarray(ref, dtype=float)[win], t_meas, meas, lags)
    k = int(np.argmax(ncc))
    delta, peak = parabolic_peak(ncc, k)
    lag = min(max(lags[k] + delta * resolution, 0.0), max_lag)
    return float(lag), float(min(peak, 1.0)), lags, ncc


def estimate_lag(
    commanded: ProbeSignal | TimedStream,
    measured: TimedStream,
    max_lag: float,
    resolution: float = 0.001,
    min_score: float = MIN_SCORE,
) -> LagEstimate:
    """End-to-end lag of ``measured`` behind ``commanded``.

    Maximizes normalized cross-correlation over a lag grid in
    ``[0, max_lag]``, then refines the peak with a parabola through its
    neighbours. Timestamps are used as recorded (receive time for the
    measurement), so the result includes the measurement path latency.
    """
    period = None
    if isinstance(commanded, ProbeSignal):
        if commanded.waveform == "sine" and max_lag >= 0.5 / commanded.base_freq:
            raise ValueError(
                f"max_lag {max_lag} s is ambiguous for a {commanded.base_freq} Hz sine "
                "(must be below half a period); use a chirp probe"
            )
        period = commanded.longest_period
        stream = commanded.stream
    else:
        stream = commanded
    lag, score, lags, ncc = _lag_core(stream.t, stream.values, measured.t, measured.values, max_lag, resolution, period)
    if score < min_score:
        raise LowConfidenceError(f"peak correlation {score:.3f} below {min_score}", lag=lag, score=score)
    return LagEstimate(lag, score, "ncc-grid+parabolic", lags, ncc)


def robot_exec_latency(
    desired: PoseTrajectory,
    measured: PoseTrajectory,
    max_lag: float,
    resolution: float = 0.001,
    min_score: float = MIN_SCORE,
) -> LagEstimate:
    """Lag of a measured end-effector trajectory behind the desired one.

    Each translation axis with meaningful motion is aligned separately and
    the per-axis lags are averaged with their peak correlations as weights.
    Rotation does not participate.
    """
    pd, pm = desired.positions(), measured.positions()
    spread = pd.std(axis=0)
    if spread.max() <= 0:
        raise LowConfidenceError("desired trajectory does not move")
    results = []
    for axis in range(3):
        if spread[axis] < 0.01 * spread.max():
            continue
        lag, score, lags, ncc = _lag_core(desired.t, pd[:, axis], measured.t, pm[:, axis], max_lag, resolution)
        if score < min_score:
            raise LowConfidenceError(f"axis {axis}: peak correlation {score:.3f} below {min_score}", axis=axis, score=score)
        results.append((lag, score, ncc))
    lag_vals = [r[0] for r in results]
    if max(lag_vals) - min(lag_vals) > 2 * resolution:
        raise AmbiguityError("translation axes disagree on the lag", lags=lag_vals)
    w = np.array([r[1] for r in results])
    lag = float(np.dot(w, lag_vals) / w.sum())
    ncc = np.average(np.stack([r[2] for r in results]), axis=0, weights=w)
    return LagEstimate(lag, float(w.min()), "ncc-grid+parabolic/axis-weighted", lag_grid(max_lag, resolution), ncc)
