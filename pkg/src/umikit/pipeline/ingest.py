"""Scene ingestion: calibrate grippers, load demos, pair them into episodes.

A scene directory looks like::

    <scene>/manifest.json        scene_id, map_frame_id, gripper_serials,
                                 marker_calibration, [recordings]
    <scene>/mapping.jsonl        map-building pass (consumed upstream)
    <scene>/calib_<serial>.jsonl open/close cycles, marker or width samples
    <scene>/demo_*.jsonl         one demonstration of one gripper

Each demo file holds the gripper trajectory already relocalized into the
scene map (``pose`` samples, header ``frame_id``) plus either ``markers`` or
``width`` samples. This is the contract a SLAM + marker-detection front end
must satisfy. Recording paths are stored relative to the scene's parent
directory so results do not depend on where the corpus lives.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import CalibrationError, ConfigError
from ..streams import TimedStream, read_streams
from .calibration import GripperCalibration, MarkerCalibration, calibrate_gripper, widths_from_marker_stream
from .episodes import Episode, Recording, SessionManifest, Verdict, pair_bimanual

log = logging.getLogger(__name__)

MIN_DEMO_SAMPLES = 3


@dataclass
class SceneIngest:
    manifest: SessionManifest
    calibrations: dict[str, GripperCalibration]
    episodes: list[Episode]
    recordings: list[dict] = field(default_factory=list)


def _infer_recordings(scene: Path) -> list[dict]:
    recs = []
    for p in sorted(scene.glob("*.jsonl")):
        name = p.name
        with open(p, encoding="utf-8") as fh:
            head = json.loads(fh.readline() or "{}")
        if name == "mapping.jsonl":
            role = "mapping"
        elif name.startswith("calib_"):
            role = "calibration"
        elif name.startswith("demo_"):
            role = "demo"
        else:
            continue
        serial = head.get("serial") or (name[len("calib_") : -len(".jsonl")] if role == "calibration" else "")
        recs.append({"path": name, "serial": serial, "role": role})
    return recs


def _marker_cal(cfg: dict, serial: str) -> MarkerCalibration:
    mc = cfg.get("marker_calibration", {"slope": 1e-4, "offset": 0.0})
    if "slope" not in mc:
        if serial not in mc:
            raise ConfigError(f"no marker calibration for gripper {serial}")
        mc = mc[serial]
    return MarkerCalibration.from_dict(mc)


def _widths(streams: dict[str, TimedStream], cfg: dict, serial: str) -> TimedStream:
    if "width" in streams:
        return streams["width"]
    if "markers" in streams:
        w, _ = widths_from_marker_stream(streams["markers"], _marker_cal(cfg, serial))
        return w
    raise ValueError("recording has neither width nor marker samples")


def load_manifest(scene_dir: str | Path) -> tuple[SessionManifest, dict]:
    scene = Path(scene_dir)
    with open(scene / "manifest.json", encoding="utf-8") as fh:
        cfg = json.load(fh)
    rec_cfg = cfg.get("recordings") or _infer_recordings(scene)
    recs = []
    for r in rec_cfg:
        _, streams = read_streams(scene / r["path"])
        main = streams.get("pose") or streams.get("markers") or streams.get("width") or next(iter(streams.values()), None)
        t0 = float(main.t[0]) if main is not None and len(main) else 0.0
        t1 = float(main.t[-1]) if main is not None and len(main) else 0.0
        recs.append(Recording(f"{scene.name}/{r['path']}", str(r.get("serial", "")), r["role"], t0, t1))
    manifest = SessionManifest(
        str(cfg.get("scene_id", scene.name)), tuple(cfg["gripper_serials"]), tuple(recs), str(cfg["map_frame_id"])
    )
    return manifest, cfg


def ingest_scene(scene_dir: str | Path) -> SceneIngest:
    scene = Path(scene_dir)
    manifest, cfg = load_manifest(scene)
    status: dict[str, dict] = {}

    def mark(rec: Recording, state: str, reason: str | None = None, **extra):
        status[rec.path] = {"path": rec.path, "serial": rec.serial, "role": rec.role, "status": state, "reason": reason, **extra}

    def local(rec: Recording) -> Path:
        return scene.parent / rec.path

    calibrations: dict[str, GripperCalibration] = {}
    for rec in manifest.recordings:
        if rec.role == "mapping":
            mark(rec, "mapping")
        elif rec.role == "calibration":
            try:
                _, streams = read_streams(local(rec))
                calibrations[rec.serial] = calibrate_gripper(_widths(streams, cfg, rec.serial), rec.serial)
                mark(rec, "calibration")
            except (CalibrationError, ValueError) as exc:
                log.warning("%s: calibration failed: %s", rec.path, exc)
                mark(rec, "rejected", getattr(exc, "code", "calibration-insufficient"), message=str(exc))

    loaded: dict[str, tuple] = {}
    usable = []
    for rec in manifest.demos():
        try:
            _, streams = read_streams(local(rec))
            if "pose" not in streams:
                raise ValueError("no pose samples")
            traj = streams["pose"].trajectory()
            if traj.frame_id != manifest.map_frame_id:
                mark(rec, "rejected", "frame-mismatch", message=f"trajectory frame {traj.frame_id!r} is not the scene map")
                continue
            if len(traj) < MIN_DEMO_SAMPLES:
                mark(rec, "rejected", "too-short")
                continue
            widths = _widths(streams, cfg, rec.serial)
            if len(widths) < 2:
                mark(rec, "rejected", "no-width")
                continue
        except ValueError as exc:
            mark(rec, "rejected", "unreadable", message=str(exc))
            continue
        loaded[rec.path] = (traj, widths)
        usable.append(rec)

    usable_manifest = SessionManifest(
        manifest.scene_id,
        manifest.gripper_serials,
        tuple(r for r in manifest.recordings if r.role != "demo") + tuple(usable),
        manifest.map_frame_id,
    )
    pairing = pair_bimanual(usable_manifest)
    groups = [(r,) for r in pairing.singles] + list(pairing.pairs)
    groups.sort(key=lambda g: (g[0].t_start, g[0].path))
    episodes = []
    for k, group in enumerate(groups):
        eid = f"{manifest.scene_id}/ep{k:03d}"
        serials = tuple(r.serial for r in group)
        trajs = tuple(loaded[r.path][0] for r in group)
        widths = tuple(loaded[r.path][1] for r in group)
        verdict = Verdict.ok()
        missing = [s for s in serials if s not in calibrations]
        if missing:
            verdict = Verdict.rejected("missing-calibration", stage="ingest", serials=missing)
        ep = Episode(eid, manifest.scene_id, serials, trajs, widths, tuple(r.path for r in group), verdict)
        lo, hi = ep.coverage()
        if verdict.accepted and hi <= lo:
            ep = ep.with_verdict(Verdict.rejected("no-overlap", stage="ingest"))
        episodes.append(ep)
        for r in group:
            mark(r, "paired" if len(group) == 2 else "single", episode=eid)
    for r in pairing.unpaired:
        mark(r, "unpaired")
    recordings = [status[r.path] for r in manifest.recordings]
    return SceneIngest(manifest, calibrations, episodes, recordings)


# -- work store ------------------------------------------------------------


@dataclass
class WorkStore:
    """Ingested scenes plus episode verdicts, persisted between CLI steps."""

    scenes: list[dict]
    episodes: list[Episode]

    @property
    def calibrations(self) -> dict[str, GripperCalibration]:
        out = {}
        for s in self.scenes:
            for serial, c in s["calibrations"].items():
                # later scenes override: calibration is redone per scene
                out[serial] = GripperCalibration.from_dict(c)
        return out

    def recordings(self) -> list[dict]:
        return [r for s in self.scenes for r in s["recordings"]]

    @classmethod
    def from_ingests(cls, ingests: list[SceneIngest]) -> WorkStore:
        scenes = [
            {
                "scene_id": si.manifest.scene_id,
                "map_frame_id": si.manifest.map_frame_id,
                "gripper_serials": list(si.manifest.gripper_serials),
                "calibrations": {s: c.to_dict() for s, c in sorted(si.calibrations.items())},
                "recordings": si.recordings,
            }
            for si in ingests
        ]
        return cls(scenes, [e for si in ingests for e in si.episodes])

    def save(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"version": 1, "scenes": self.scenes, "episodes": [e.to_dict() for e in self.episodes]}, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> WorkStore:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(d["scenes"], [Episode.from_dict(e) for e in d["episodes"]])
