"""Gripper width: marker distance to meters, and per-gripper min/max calibration."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from ..errors import CalibrationError
from ..scheduler import GRIPPER_STROKE
from ..streams import TimedStream

log = logging.getLogger(__name__)

MIN_CYCLES = 5


@dataclass(frozen=True)
class MarkerCalibration:
    """Affine map from marker-center pixel distance to finger width."""

    slope: float = 1e-4
    offset: float = 0.0

    def __call__(self, px: float) -> float:
        return self.slope * px + self.offset

    @classmethod
    def from_dict(cls, d: dict) -> MarkerCalibration:
        return cls(float(d["slope"]), float(d.get("offset", 0.0)))

    def to_dict(self) -> dict:
        return {"slope": self.slope, "offset": self.offset}


@dataclass(frozen=True)
class GripperCalibration:
    serial: str
    width_min: float
    width_max: float

    def __post_init__(self):
        if not 0 <= self.width_min < self.width_max <= GRIPPER_STROKE + 1e-9:
            raise CalibrationError(
                f"gripper {self.serial}: calibrated range [{self.width_min}, {self.width_max}] "
                f"is not inside the {GRIPPER_STROKE} m stroke",
                serial=self.serial,
            )

    def clip(self, w):
        return np.clip(w, self.width_min, self.width_max)

    def to_dict(self) -> dict:
        return {"serial": self.serial, "width_min": self.width_min, "width_max": self.width_max}

    @classmethod
    def from_dict(cls, d: dict) -> GripperCalibration:
        return cls(str(d["serial"]), float(d["width_min"]), float(d["width_max"]))


def width_from_markers(left_px, right_px, cal: MarkerCalibration) -> float:
    """Finger width from the two marker centers, clamped to the stroke."""
    if left_px is None or right_px is None:
        raise ValueError("both marker centers are required; bridge gaps by interpolation")
    d = float(np.hypot(right_px[0] - left_px[0], right_px[1] - left_px[1]))
    w = cal(d)
    if not 0.0 <= w <= GRIPPER_STROKE:
        log.debug("clamping width %.6f m to stroke", w)
        w = min(max(w, 0.0), GRIPPER_STROKE)
    return w


def widths_from_marker_stream(markers: TimedStream, cal: MarkerCalibration) -> tuple[TimedStream, int]:
    """Convert a marker stream to a width stream, dropping undetected samples.

    Returns the width stream and the number of clamp events.
    """
    if markers.kind != "markers":
        raise TypeError(f"expected a markers stream, got {markers.kind}")
    m = markers.values
    ok = ~np.isnan(m).any(axis=(1, 2))
    d = np.hypot(m[ok, 1, 0] - m[ok, 0, 0], m[ok, 1, 1] - m[ok, 0, 1])
    raw = cal.slope * d + cal.offset
    w = np.clip(raw, 0.0, GRIPPER_STROKE)
    clamps = int((w != raw).sum())
    if clamps:
        log.info("%s: %d width samples clamped to [0, %.3f] m", markers.stream_id, clamps, GRIPPER_STROKE)
    out = TimedStream(markers.t[ok], w, "width", markers.latency, markers.stream_id, markers.rate, None, dict(markers.meta))
    return out, clamps


def _extrema(w: np.ndarray, prominence: float) -> tuple[np.ndarray, np.ndarray]:
    # mirror the whole signal at both ends so an open/close that starts or
    # ends the recording gets its full prominence
    n = len(w)
    padded = np.concatenate([w[:0:-1], w, w[-2::-1]])
    hi, _ = find_peaks(padded, prominence=prominence)
    lo, _ = find_peaks(-padded, prominence=prominence)
    keep = lambda idx: idx[(idx >= n - 1) & (idx < 2 * n - 1)] - (n - 1)  # noqa: E731
    return keep(hi), keep(lo)


def calibrate_gripper(recording: TimedStream, serial: str | None = None, min_cycles: int = MIN_CYCLES) -> GripperCalibration:
    """Min/max finger width from a recording of repeated open-close cycles.

    Extrema are found with a prominence filter at a third of the signal's
    robust range; the calibration is the median of the minima and of the
    maxima.
    """
    w = np.asarray(recording.values, dtype=float)
    serial = serial or str(recording.meta.get("serial", recording.stream_id))
    if len(w) < 3:
        raise CalibrationError(f"gripper {serial}: recording too short", serial=serial)
    lo_q, hi_q = np.percentile(w, [2, 98])
    prominence = max((hi_q - lo_q) / 3.0, 1e-6)
    maxima, minima = _extrema(w, prominence)
    if len(maxima) < min_cycles or len(minima) < min_cycles:
        raise CalibrationError(
            f"gripper {serial}: found {len(maxima)} openings and {len(minima)} closings, need {min_cycles} each",
            serial=serial,
            maxima=int(len(maxima)),
            minima=int(len(minima)),
        )
    return GripperCalibration(serial, float(np.median(w[minima])), float(np.median(w[maxima])))
