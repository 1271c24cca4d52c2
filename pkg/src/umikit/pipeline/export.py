"""Export accepted episodes as fixed-rate (observation, action) samples.

Layout::

    <out>/manifest.json            config, per-episode verdicts, counts
    <out>/episodes/<id>.jsonl      one training sample per line

Everything except ``manifest["metadata"]`` is a pure function of the inputs.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .. import __version__
from ..errors import ConfigError
from ..se3 import ActionRepr, PoseTrajectory, decode_actions, encode_actions, inter_gripper_pose, relative_proprioception
from ..streams import sample_at
from .calibration import GripperCalibration
from .episodes import Episode


@dataclass(frozen=True)
class ExportConfig:
    freq: float = 10.0
    obs_horizon: int = 2
    action_horizon: int = 6
    repr: ActionRepr = ActionRepr.RELATIVE_TRAJECTORY
    global_frame: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "repr", ActionRepr(self.repr))
        if self.freq <= 0 or self.obs_horizon < 1 or self.action_horizon < 1:
            raise ConfigError("freq must be positive and horizons at least 1")

    @property
    def dt(self) -> float:
        return 1.0 / self.freq

    @property
    def window(self) -> float:
        """Time spanned by one sample's observation history plus its actions."""
        return (self.obs_horizon - 1 + self.action_horizon - 1) * self.dt

    @classmethod
    def from_dict(cls, d: dict) -> ExportConfig:
        known = {"freq", "obs_horizon", "action_horizon", "repr", "global_frame"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown export config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["repr"] = self.repr.value
        return d


def sample_count(duration: float, cfg: ExportConfig) -> int:
    if duration < cfg.window - 1e-9:
        return 0
    return int(math.floor((duration - cfg.window) / cfg.dt + 1e-9)) + 1


def _frame_ref(recording: str, traj: PoseTrajectory, t: float) -> str:
    k = int(np.argmin(np.abs(traj.t - t)))
    return f"{Path(recording).stem}#{k}"


def episode_samples(ep: Episode, cfg: ExportConfig, calibrations: Mapping[str, GripperCalibration]) -> list[dict]:
    lo, hi = ep.coverage()
    n = sample_count(hi - lo, cfg)
    dt = cfg.dt
    out = []
    for k in range(n):
        t_obs = lo + (cfg.obs_horizon - 1 + k) * dt
        obs_t = [lo + (k + j) * dt for j in range(cfg.obs_horizon)]
        obs_t[-1] = t_obs
        act_t = [t_obs + j * dt for j in range(cfg.action_horizon)]
        grippers = []
        for g, (serial, traj, widths) in enumerate(zip(ep.serials, ep.trajs, ep.widths)):
            cal = calibrations[serial]
            hist = [traj.at(t) for t in obs_t]
            anchor = hist[-1]
            rel_hist = relative_proprioception(PoseTrajectory(np.array(obs_t), tuple(hist), traj.frame_id))
            targets = [traj.at(t) for t in act_t]
            entry = {
                "serial": serial,
                "frame": _frame_ref(ep.recordings[g] if g < len(ep.recordings) else serial, traj, t_obs),
                "anchor": anchor.to_list(),
                "ee_history": [p.to_list() for p in rel_hist.poses],
                "width_history": [float(cal.clip(sample_at(widths, t))) for t in obs_t],
                "action_poses": [p.to_list() for p in encode_actions(targets, anchor, cfg.repr)],
                "action_widths": [float(cal.clip(sample_at(widths, t))) for t in act_t],
            }
            if ep.bimanual:
                other = ep.trajs[1 - g]
                entry["inter_gripper"] = [inter_gripper_pose(p, other.at(t)).to_list() for p, t in zip(hist, obs_t)]
            grippers.append(entry)
        out.append({"t_obs": t_obs, "obs_t": obs_t, "action_t": act_t, "grippers": grippers})
    return out


def export_dataset(
    episodes: Iterable[Episode],
    config: ExportConfig | dict,
    out_dir: str | Path,
    calibrations: Mapping[str, GripperCalibration],
    recordings: Iterable[dict] = (),
    metadata: dict | None = None,
) -> dict:
    """Write the dataset and return its manifest.

    Only accepted episodes are exported; rejected ones are listed with their
    verdicts. Absolute actions need ``config.global_frame``.
    """
    cfg = config if isinstance(config, ExportConfig) else ExportConfig.from_dict(config)
    if cfg.repr is ActionRepr.ABSOLUTE and not cfg.global_frame:
        raise ConfigError("absolute actions need a declared global frame (set 'global_frame')")
    episodes = sorted(episodes, key=lambda e: e.episode_id)
    out = Path(out_dir)
    (out / "episodes").mkdir(parents=True, exist_ok=True)
    ep_entries = []
    total = 0
    for ep in episodes:
        entry = {
            "episode_id": ep.episode_id,
            "scene_id": ep.scene_id,
            "serials": list(ep.serials),
            "recordings": list(ep.recordings),
            "verdict": ep.verdict.to_dict(),
            "n_samples": 0,
        }
        if ep.verdict.accepted:
            if cfg.repr is ActionRepr.ABSOLUTE and ep.trajs[0].frame_id != cfg.global_frame:
                raise ConfigError(
                    f"episode {ep.episode_id} is in frame {ep.trajs[0].frame_id!r}, not the declared global frame {cfg.global_frame!r}"
                )
            missing = [s for s in ep.serials if s not in calibrations]
            if missing:
                raise ConfigError(f"episode {ep.episode_id}: no gripper calibration for {missing}")
            samples = episode_samples(ep, cfg, calibrations)
            fname = f"episodes/{ep.episode_id.replace('/', '__')}.jsonl"
            with open(out / fname, "w", encoding="utf-8") as fh:
                for s in samples:
                    fh.write(json.dumps(s) + "\n")
            entry["file"] = fname
            entry["n_samples"] = len(samples)
            total += len(samples)
        ep_entries.append(entry)
    accepted = sum(e["verdict"]["status"] == "accepted" for e in ep_entries)
    manifest = {
        "config": cfg.to_dict(),
        "episodes": ep_entries,
        "recordings": sorted(recordings, key=lambda r: r["path"]),
        "calibrations": {s: c.to_dict() for s, c in sorted(calibrations.items())},
        "counts": {
            "episodes": len(ep_entries),
            "accepted": accepted,
            "rejected": len(ep_entries) - accepted,
            "samples": total,
        },
        "metadata": metadata if metadata is not None else {"created_unix": time.time(), "umikit_version": __version__},
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


@dataclass
class Dataset:
    manifest: dict
    samples: dict[str, list[dict]]

    def decoded_actions(self, episode_id: str, index: int, gripper: int = 0):
        """Absolute action poses of one sample, rebuilt from its anchor."""
        from ..se3 import Pose

        g = self.samples[episode_id][index]["grippers"][gripper]
        enc = [Pose.from_list(p) for p in g["action_poses"]]
        return decode_actions(enc, Pose.from_list(g["anchor"]), ActionRepr(self.manifest["config"]["repr"]))


def load_dataset(path: str | Path) -> Dataset:
    root = Path(path)
    with open(root / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    samples = {}
    for e in manifest["episodes"]:
        if "file" not in e:
            continue
        with open(root / e["file"], encoding="utf-8") as fh:
            samples[e["episode_id"]] = [json.loads(line) for line in fh if line.strip()]
    return Dataset(manifest, samples)
