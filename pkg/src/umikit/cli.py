"""``umi`` command line.

Exit codes: 0 success, 1 domain error (JSON object on stderr), 2 usage
error. Machine-readable results go to ``--out`` files (or stdout when no
file is given); a short human summary goes to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import UmiError

DEFAULT_WORK = "umi-work.json"

SCHEMAS = {
    "stream": {
        "format": "JSONL",
        "header": {"stream_id": "string", "latency": "seconds", "rate": "Hz|null", "frame_id": "string|null", "...": "free metadata (serial, role)"},
        "sample": {"t": "receive time, seconds", "one of": {"pose": "[x, y, z, qw, qx, qy, qz]", "width": "meters", "frame": "string", "markers": "[[u0, v0], [u1, v1]] | null", "value": "number"}},
    },
    "scene-manifest": {
        "scene_id": "string",
        "map_frame_id": "string",
        "gripper_serials": "[string], first is the left gripper",
        "marker_calibration": "{slope: m/px, offset: m} or {serial: {slope, offset}}",
        "recordings": "optional [{path, serial, role: mapping|calibration|demo}]; inferred from file names when absent",
    },
    "latency-profile": {"l_camera": "s", "l_proprio": "s", "l_gripper_exec": "s", "l_robot_exec": "s"},
    "kinematic-model": {
        "base_pose": "[x, y, z, qw, qx, qy, qz] in the map frame",
        "reach_min": "m",
        "reach_max": "m",
        "z_min": "m (base frame)",
        "z_max": "m (base frame)",
        "v_max": "m/s",
        "a_max": "m/s^2",
        "per_arm": "optional [model, model] for bimanual episodes",
    },
    "export-config": {"freq": "Hz", "obs_horizon": "int", "action_horizon": "int", "repr": "relative|delta|absolute", "global_frame": "string, required for absolute"},
    "dataset": {
        "manifest.json": {"config": "export-config", "episodes": "[{episode_id, verdict, n_samples, file}]", "recordings": "[{path, status, reason}]", "calibrations": "{serial: {width_min, width_max}}", "counts": "{episodes, accepted, rejected, samples}", "metadata": "timestamps and version; not part of the reproducible payload"},
        "episodes/<id>.jsonl": "one sample per line: {t_obs, obs_t, action_t, grippers: [{serial, frame, anchor, ee_history, width_history, action_poses, action_widths, inter_gripper?}]}",
    },
    "sim-config": {
        "profile": "latency-profile (true)",
        "assumed_profile": "latency-profile | 'matched' | 'zero'",
        "freq": "Hz",
        "inference_delay": "s",
        "tracker_tau": "s",
        "action_horizon": "int",
        "max_lag": "s",
        "camera_jitter": "s",
        "proprio_noise": "m",
        "seed": "int",
        "label": "string",
        "toss": "optional toss parameters {travel, v_peak, direction, start, pre_hold, post_hold, pitch, width_closed, width_open, rate}",
    },
    "sweep": {"configs": "[sim-config]", "toss": "optional shared toss parameters"},
    "sim-report": {
        "temporal_misalignment": "s",
        "tracking_rmse": "m",
        "release_time_error": "s",
        "jerk_metric": "m/s^3",
        "output_lag": "s",
        "actuator_skew": "s",
    },
    "work-store": {"version": 1, "scenes": "[{scene_id, map_frame_id, gripper_serials, calibrations, recordings}]", "episodes": "[episode]"},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _load_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- subcommands -----------------------------------------------------------


def cmd_calibrate_latency(a) -> int:
    from .latency import estimate_lag, exec_latency, robot_exec_latency
    from .streams import read_streams

    _, cmd = read_streams(a.commanded)
    _, meas = read_streams(a.measured)
    if "pose" in cmd and "pose" in meas:
        # capture-time trajectories would hide the measurement latency; the
        # end-to-end lag is taken on receive timestamps
        c, m = cmd["pose"], meas["pose"]
        from .se3 import PoseTrajectory

        est = robot_exec_latency(
            PoseTrajectory(c.t, c.values, "cmd"), PoseTrajectory(m.t, m.values, "cmd"), a.max_lag, a.resolution, a.min_score
        )
    else:
        kind = next((k for k in ("value", "width") if k in cmd and k in meas), None)
        if kind is None:
            raise UmiError("commanded and measured files share no numeric stream kind")
        est = estimate_lag(cmd[kind], meas[kind], a.max_lag, a.resolution, a.min_score)
    result = est.to_dict()
    if a.obs_latency is not None:
        result["l_obs"] = a.obs_latency
        result["l_exec"] = exec_latency(est.l_e2e, a.obs_latency)
    _emit(result, a.out)
    if a.out:
        line = f"end-to-end lag {est.l_e2e * 1e3:.1f} ms (score {est.score:.3f})"
        if "l_exec" in result:
            line += f", execution latency {result['l_exec'] * 1e3:.1f} ms"
        print(line)
    return 0


def cmd_ingest(a) -> int:
    from .pipeline.ingest import WorkStore, ingest_scene

    ingests = [ingest_scene(d) for d in a.scenes]
    store = WorkStore.from_ingests(ingests)
    store.save(a.work)
    for si in ingests:
        states: dict[str, int] = {}
        for r in si.recordings:
            states[r["status"]] = states.get(r["status"], 0) + 1
        print(f"{si.manifest.scene_id}: {len(si.episodes)} episodes; " + ", ".join(f"{k} {v}" for k, v in sorted(states.items())))
    return 0


def cmd_filter(a) -> int:
    from .pipeline.filtering import KinematicModel, kinematic_filter
    from .pipeline.ingest import WorkStore

    spec = _load_json(a.model)
    if "per_arm" in spec:
        model = [KinematicModel.from_dict(m) for m in spec["per_arm"]]
    else:
        model = KinematicModel.from_dict(spec)
    store = WorkStore.load(a.work)
    store.episodes = [e.with_verdict(kinematic_filter(e, model)) for e in store.episodes]
    store.save(a.work)
    verdicts = {e.episode_id: e.verdict.to_dict() for e in store.episodes}
    if a.out:
        _emit(verdicts, a.out)
    n_ok = sum(e.verdict.accepted for e in store.episodes)
    print(f"{n_ok} of {len(store.episodes)} episodes accepted")
    for e in store.episodes:
        if not e.verdict.accepted:
            print(f"  {e.episode_id}: {e.verdict}")
    return 0


def cmd_export(a) -> int:
    from .pipeline.export import export_dataset
    from .pipeline.ingest import WorkStore

    store = WorkStore.load(a.work)
    manifest = export_dataset(store.episodes, _load_json(a.config), a.out, store.calibrations, store.recordings())
    c = manifest["counts"]
    print(f"exported {c['samples']} samples from {c['accepted']} accepted episodes ({c['rejected']} rejected) to {a.out}")
    return 0


def cmd_eval_traj(a) -> int:
    from .evaluation import ate, inter_gripper_rpe
    from .streams import read_stream

    def traj(path):
        return read_stream(path, "pose").trajectory()

    est, gt = traj(a.est), traj(a.gt)
    rep = ate(est, gt, max_dt=a.max_dt)
    out = {"ate": rep.to_dict()}
    if a.pair:
        est2, gt2 = traj(a.pair[0]), traj(a.pair[1])
        out["ate_second"] = ate(est2, gt2, max_dt=a.max_dt).to_dict()
        out["rpe"] = inter_gripper_rpe(est, est2, gt, gt2, max_dt=a.max_dt).to_dict()
    _emit(out, a.out)
    if a.out:
        print(f"ATE {rep.pos_mean * 1e3:.2f} mm / {rep.rot_mean:.2f} deg over {rep.n} poses")
    return 0


def _sim_inputs(cfg_dict: dict, seed: int | None):
    from .sim import SimConfig, toss_profile

    toss = toss_profile(cfg_dict.get("toss") or {})
    cfg = SimConfig.from_dict(cfg_dict)
    if seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=seed)
    return toss, cfg


def cmd_simulate(a) -> int:
    from .sim import simulate

    toss, cfg = _sim_inputs(_load_json(a.config), a.seed)
    rep = simulate(toss, cfg)
    _emit({"config": cfg.to_dict(), "toss": toss.params.to_dict(), "report": rep.to_dict()}, a.out)
    if a.out:
        print(
            f"misalignment {rep.temporal_misalignment * 1e3:.1f} ms, release error {rep.release_time_error * 1e3:.1f} ms, "
            f"tracking rmse {rep.tracking_rmse * 1e3:.1f} mm"
        )
    return 0


def cmd_sweep(a) -> int:
    from dataclasses import replace

    from .sim import SimConfig, sweep, toss_profile, write_sweep_csv

    spec = _load_json(a.configs)
    if isinstance(spec, list):
        spec = {"configs": spec}
    toss = toss_profile(spec.get("toss") or {})
    cfgs = [SimConfig.from_dict(c) for c in spec["configs"]]
    if a.seed is not None:
        cfgs = [replace(c, seed=a.seed) for c in cfgs]
    reports = sweep(cfgs, toss)
    text = write_sweep_csv(a.out, cfgs, reports)
    if a.out:
        print(f"{len(reports)} configurations written to {a.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth(a) -> int:
    from .pipeline.synth import make_corpus

    truth = make_corpus(a.out, n_scenes=a.scenes, seed=a.seed)
    n = sum(s["n_recordings"] for s in truth["scenes"].values())
    print(f"wrote {len(truth['scenes'])} scenes, {n} recordings to {a.out}")
    return 0


# -- entry points ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="umi", description="Latency calibration, demonstration pipeline and deployment simulation.")
    p.add_argument("--version", action="version", version=f"umi {__version__}")
    p.add_argument("--schema", metavar="TYPE", choices=sorted(SCHEMAS), help="print the format documentation of TYPE and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("calibrate-latency", help="end-to-end lag between a commanded and a measured stream")
    s.add_argument("--commanded", required=True)
    s.add_argument("--measured", required=True)
    s.add_argument("--max-lag", type=float, required=True)
    s.add_argument("--resolution", type=float, default=0.001)
    s.add_argument("--min-score", type=float, default=0.8)
    s.add_argument("--obs-latency", type=float, help="measurement path latency; reports l_exec = l_e2e - l_obs")
    s.add_argument("--out")
    s.set_defaults(func=cmd_calibrate_latency)

    s = sub.add_parser("ingest", help="calibrate grippers, pair demos and store episodes")
    s.add_argument("scenes", nargs="+", metavar="scene-dir")
    s.add_argument("--work", default=DEFAULT_WORK)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("filter", help="kinematic feasibility filter")
    s.add_argument("--model", required=True)
    s.add_argument("--work", default=DEFAULT_WORK)
    s.add_argument("--out", help="also write the verdicts as JSON")
    s.set_defaults(func=cmd_filter)

    s = sub.add_parser("export", help="write the training dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--work", default=DEFAULT_WORK)
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("eval-traj", help="ATE (and inter-gripper RPE with --pair)")
    s.add_argument("--est", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--pair", nargs=2, metavar=("EST2", "GT2"))
    s.add_argument("--max-dt", type=float, default=0.010)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval_traj)

    s = sub.add_parser("simulate", help="run one deployment simulation")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run simulations for a list of configs and write CSV")
    s.add_argument("--configs", required=True)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("synth", help="write a synthetic scene corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--scenes", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if a.schema:
        _emit({a.schema: SCHEMAS[a.schema]}, None)
        return 0
    if not a.command:
        parser.print_usage(sys.stderr)
        print("umi: error: a command is required", file=sys.stderr)
        return 2
    try:
        return a.func(a)
    except UmiError as exc:
        err = exc.to_dict()
    except (OSError, ValueError, KeyError, TypeError) as exc:
        # ValueError covers malformed JSON and rejected inputs
        err = {"error": "invalid-input", "message": f"{type(exc).__name__}: {exc}"}
    json.dump(err, sys.stderr, sort_keys=True, default=str)
    sys.stderr.write("\n")
    return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
