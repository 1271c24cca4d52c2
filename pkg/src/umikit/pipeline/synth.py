"""Seeded synthetic scene corpus for exercising the ingestion pipeline.

Each scene holds one mapping pass, one calibration recording per gripper
(six open/close cycles seen through noisy markers) and demonstrations:
paired sessions of both grippers plus one recording without a partner.
Some demonstrations deliberately leave the default robot's reach, height
band or speed limit so the filter has something to reject.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..se3 import PoseTrajectory
from ..streams import TimedStream, write_streams
from ..synthetic import lissajous_trajectory, perturb
from .filtering import KinematicModel

DEFAULT_SERIALS = ("C3441328", "C3441329")
POSE_RATE = 30.0
MARKER_SLOPE = 1e-4
DEFAULT_MODEL = KinematicModel(reach_min=0.2, reach_max=0.9, z_min=0.0, z_max=0.8, v_max=1.5, a_max=15.0)
EXPORT_CONFIG = {"freq": 10.0, "obs_horizon": 2, "action_horizon": 6, "repr": "relative"}

# kinds of demonstration motion; "ok" stays inside DEFAULT_MODEL
_VIOLATIONS = ("ok", "ok", "ok", "reach", "ok", "speed", "ok", "workspace-z")


def _markers(widths: np.ndarray, rng: np.random.Generator, px_noise: float, dropout: float) -> np.ndarray:
    d = widths / MARKER_SLOPE
    cx, cy = 1352.0, 2000.0
    m = np.empty((len(widths), 2, 2))
    m[:, 0, 0] = cx - d / 2
    m[:, 1, 0] = cx + d / 2
    m[:, :, 1] = cy
    m += rng.normal(0.0, px_noise / math.sqrt(2), m.shape)
    drop = rng.random(len(widths)) < dropout
    # keep the first and last sample so the width stream spans the recording
    drop[[0, -1]] = False
    m[drop] = np.nan
    return m


def _demo_motion(kind: str, side: int, t0: float, duration: float, rng: np.random.Generator, frame_id: str) -> PoseTrajectory:
    y = -0.2 if side == 0 else 0.2
    center = [0.45, y, 0.3]
    amp = [0.08, 0.06, 0.05]
    freqs = [0.2, 0.27, 0.23]
    if kind == "reach":
        center[0] = 0.85
        amp[0] = 0.12
    elif kind == "workspace-z":
        center[2] = 0.04
        amp[2] = 0.08
    elif kind == "speed":
        amp = [0.25, 0.1, 0.05]
        freqs = [1.3, 0.27, 0.23]
    traj = lissajous_trajectory(
        duration, POSE_RATE, center=center, amplitude=amp, freqs=freqs, phase=float(rng.uniform(0, 2 * np.pi)), t0=t0, frame_id=frame_id
    )
    return perturb(traj, rng, pos_level=5e-5, rot_level_deg=0.01)


def _demo_widths(t: np.ndarray, w_min: float, w_max: float, rng: np.random.Generator) -> np.ndarray:
    # one grasp: open, close around the object, reopen
    tau = t - t[0]
    dur = tau[-1]
    t_close, t_open = dur * rng.uniform(0.25, 0.4), dur * rng.uniform(0.65, 0.8)
    s = 1.0 / (1.0 + np.exp(-(tau - t_close) / 0.08)) - 1.0 / (1.0 + np.exp(-(tau - t_open) / 0.08))
    w_grasp = w_min + 0.2 * (w_max - w_min)
    return w_max - s * (w_max - w_grasp)


def make_corpus(out: str | Path, n_scenes: int = 3, seed: int = 0, serials=DEFAULT_SERIALS, n_pairs: int = 8) -> dict:
    """Write ``n_scenes`` scene folders under ``out`` and return the truth.

    Per scene: 1 mapping + 2 calibration + ``2 * n_pairs + 1`` demo
    recordings. Also writes ``model.json``, ``export.json`` and
    ``truth.json`` next to the scenes.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    serials = tuple(serials)
    # physical grippers: their true width range does not change across scenes
    truth_cal = {
        s: {"width_min": float(rng.uniform(0.0015, 0.004)), "width_max": float(rng.uniform(0.075, 0.079))} for s in serials
    }
    truth = {"seed": seed, "calibration": truth_cal, "scenes": {}}
    for k in range(n_scenes):
        scene_id = f"scene_{k:02d}"
        frame = f"map:{scene_id}"
        sdir = out / scene_id
        sdir.mkdir(exist_ok=True)
        recs = []

        mp = lissajous_trajectory(10.0, POSE_RATE, t0=10.0, frame_id=frame)
        write_streams(
            sdir / "mapping.jsonl",
            [TimedStream.from_trajectory(mp, stream_id="mapping")],
            {"serial": serials[0], "role": "mapping"},
        )
        recs.append({"path": "mapping.jsonl", "serial": serials[0], "role": "mapping"})

        for s in serials:
            rate = 60.0
            t = np.arange(0.0, 6.0 + 1e-9, 1.0 / rate)
            lo, hi = truth_cal[s]["width_min"], truth_cal[s]["width_max"]
            phase = rng.uniform(-0.2, 0.2)
            w = (lo + hi) / 2 + (hi - lo) / 2 * np.cos(2 * np.pi * t + phase)
            m = _markers(w, rng, px_noise=1.0, dropout=0.02)
            name = f"calib_{s}.jsonl"
            write_streams(sdir / name, [TimedStream(t, m, "markers", 0.0, f"calib_{s}", rate)], {"serial": s, "role": "calibration"})
            recs.append({"path": name, "serial": s, "role": "calibration"})

        demos = {}
        t_sess = 100.0
        for p in range(n_pairs):
            kind = _VIOLATIONS[(p + k) % len(_VIOLATIONS)]
            arm_bad = int(rng.integers(0, 2))
            duration = float(rng.uniform(4.0, 6.0))
            for side, s in enumerate(serials):
                start = t_sess + float(rng.uniform(0.0, 0.01))
                motion = kind if side == arm_bad else "ok"
                traj = _demo_motion(motion, side, start, duration, rng, frame)
                name = f"demo_{p:02d}_{s}.jsonl"
                _write_demo(sdir / name, traj, s, truth_cal[s], rng)
                recs.append({"path": name, "serial": s, "role": "demo"})
                demos[name] = {"motion": motion, "session": p}
            t_sess += duration + 10.0

        # one recording without a partner; in the last scene it is also
        # relocalized into the wrong map
        s = serials[k % len(serials)]
        wrong = k == n_scenes - 1 and n_scenes > 1
        traj = _demo_motion("ok", k % len(serials), t_sess, 4.0, rng, f"map:scene_{(k + 1) % n_scenes:02d}" if wrong else frame)
        name = f"demo_{n_pairs:02d}_{s}.jsonl"
        _write_demo(sdir / name, traj, s, truth_cal[s], rng)
        recs.append({"path": name, "serial": s, "role": "demo"})
        demos[name] = {"motion": "ok", "session": None, "wrong_frame": wrong}

        manifest = {
            "scene_id": scene_id,
            "map_frame_id": frame,
            "gripper_serials": list(serials),
            "marker_calibration": {"slope": MARKER_SLOPE, "offset": 0.0},
            "recordings": recs,
        }
        with open(sdir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")
        truth["scenes"][scene_id] = {"demos": demos, "n_recordings": len(recs)}

    _dump(out / "model.json", DEFAULT_MODEL.to_dict())
    _dump(out / "export.json", EXPORT_CONFIG)
    _dump(out / "truth.json", truth)
    return truth


def _write_demo(path: Path, traj: PoseTrajectory, serial: str, cal: dict, rng: np.random.Generator) -> None:
    w = _demo_widths(traj.t, cal["width_min"], cal["width_max"], rng)
    m = _markers(w, rng, px_noise=1.0, dropout=0.02)
    streams = [
        TimedStream(traj.t, traj.poses, "pose", 0.0, path.stem, POSE_RATE, traj.frame_id),
        TimedStream(traj.t, m, "markers", 0.0, path.stem, POSE_RATE),
    ]
    write_streams(path, streams, {"serial": serial, "role": "demo"})


def _dump(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")
