import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import sawtooth

from oracles import brute_force_verdict
from umikit.errors import CalibrationError, ConfigError, FrameMismatchError, GeometryError, PairingAmbiguityError
from umikit.pipeline.calibration import (
    GripperCalibration,
    MarkerCalibration,
    calibrate_gripper,
    width_from_markers,
    widths_from_marker_stream,
)
from umikit.pipeline.episodes import Episode, Recording, SessionManifest, Verdict, inter_gripper_stream, pair_bimanual
from umikit.pipeline.export import ExportConfig, export_dataset, load_dataset, sample_count
from umikit.pipeline.filtering import KinematicModel, check_trajectory, kinematic_filter
from umikit.pipeline.ingest import WorkStore, ingest_scene
from umikit.pipeline.mirror import mirror_reflect
from umikit.pipeline.synth import DEFAULT_MODEL, make_corpus
from umikit.se3 import IDENTITY, Pose, PoseTrajectory
from umikit.streams import TimedStream
from umikit.synthetic import lissajous_trajectory, random_pose

# -- calibration -----------------------------------------------------------


def triangle(cycles, lo=0.002, hi=0.078, rate=60.0, period=2.0):
    t = np.arange(0, cycles * period + 1e-9, 1 / rate)
    w = lo + (hi - lo) * (sawtooth(2 * np.pi * t / period, 0.5) + 1) / 2
    return TimedStream(t, w, "width", stream_id="g")


def test_calibrate_ideal_triangle():
    cal = calibrate_gripper(triangle(5), "g")
    assert cal.width_min == pytest.approx(0.002, abs=1e-12)
    assert cal.width_max == pytest.approx(0.078, abs=1e-12)


def test_calibrate_noisy_triangle():
    s = triangle(5)
    for seed in range(10):
        noisy = TimedStream(s.t, s.values + np.random.default_rng(seed).normal(0, 0.0005, len(s)), "width")
        cal = calibrate_gripper(noisy, "g")
        assert abs(cal.width_min - 0.002) <= 0.0005
        assert abs(cal.width_max - 0.078) <= 0.0005


def test_calibrate_too_few_cycles():
    with pytest.raises(CalibrationError):
        calibrate_gripper(triangle(4), "g")
    with pytest.raises(CalibrationError):
        GripperCalibration("g", 0.05, 0.01)


def test_width_from_markers():
    cal = MarkerCalibration(1e-4, 0.0)
    assert width_from_markers((100, 50), (100, 50), cal) == 0.0
    assert width_from_markers((0, 0), (800, 0), cal) == pytest.approx(0.08)
    assert width_from_markers((0, 0), (900, 0), cal) == 0.08
    with pytest.raises(ValueError):
        width_from_markers(None, (1, 1), cal)


def test_marker_stream_reconstructs_sine():
    t = np.arange(0, 5, 1 / 60)
    w = 0.04 + 0.035 * np.sin(2 * np.pi * 0.7 * t)
    d = w / 1e-4
    m = np.zeros((len(t), 2, 2))
    m[:, 0, 0] = 1000 - d / 2
    m[:, 1, 0] = 1000 + d / 2
    m[:, :, 1] = 700.0
    m[7] = np.nan
    out, clamps = widths_from_marker_stream(TimedStream(t, m, "markers"), MarkerCalibration(1e-4))
    assert clamps == 0 and len(out) == len(t) - 1
    assert np.max(np.abs(out.values - np.delete(w, 7))) <= 1e-6


# -- pairing ---------------------------------------------------------------


def manifest(*recs):
    mapping = Recording("map", "A", "mapping")
    return SessionManifest("s", ("A", "B"), (mapping, *recs), "map:s")


def rec(name, serial, t0, t1):
    return Recording(name, serial, "demo", t0, t1)


def test_pair_identical():
    res = pair_bimanual(manifest(rec("a1", "A", 0, 10), rec("b1", "B", 0, 10)))
    assert [(a.path, b.path) for a, b in res.pairs] == [("a1", "b1")]
    assert not res.unpaired


def test_pair_interleaved_and_unpaired():
    res = pair_bimanual(
        manifest(
            rec("a1", "A", 0, 10),
            rec("b1", "B", 0.4, 10.2),
            rec("a2", "A", 20, 30),
            rec("b2", "B", 19.8, 30.5),
            rec("a3", "A", 50, 55),
        )
    )
    assert [(a.path, b.path) for a, b in res.pairs] == [("a1", "b1"), ("a2", "b2")]
    assert [r.path for r in res.unpaired] == ["a3"]


def test_pair_ambiguous():
    with pytest.raises(PairingAmbiguityError):
        pair_bimanual(manifest(rec("a1", "A", 0, 10), rec("b1", "B", 0, 5), rec("b2", "B", 5.5, 10)))


def test_pair_single_gripper():
    m = SessionManifest("s", ("A",), (Recording("map", "A", "mapping"), rec("a1", "A", 0, 1)), "map:s")
    res = pair_bimanual(m)
    assert [r.path for r in res.singles] == ["a1"]


# -- inter-gripper stream --------------------------------------------------


def circle(phi, r=0.3, omega=0.8, n=200):
    t = np.arange(n) / 30.0
    poses = tuple(
        Pose.from_axis_angle((0, 0, 1), omega * tk + phi, translation=(r * math.cos(omega * tk + phi), r * math.sin(omega * tk + phi), 0.4))
        for tk in t
    )
    return PoseTrajectory(t, poses, "map:s")


def test_inter_gripper_analytic_circles():
    phi, r = 0.7, 0.3
    s = inter_gripper_stream(circle(0.0), circle(phi))
    # both grippers face along their radius, so the relative pose is constant
    expected = Pose.from_axis_angle((0, 0, 1), phi, translation=(r * (math.cos(phi) - 1), r * math.sin(phi), 0.0))
    assert len(s) == 200
    assert all(p.isclose(expected, atol=1e-6) for p in s.values)


def test_inter_gripper_identical_and_common_transform(rng):
    tr = lissajous_trajectory(3.0, 30.0, frame_id="map:s")
    assert all(p.isclose(IDENTITY) for p in inter_gripper_stream(tr, tr).values)
    g = random_pose(rng)
    a = inter_gripper_stream(circle(0.0), circle(1.0))
    b = inter_gripper_stream(circle(0.0).transformed(g), circle(1.0).transformed(g))
    assert all(x.isclose(y, atol=1e-9) for x, y in zip(a.values, b.values))
    with pytest.raises(FrameMismatchError):
        inter_gripper_stream(tr, PoseTrajectory(tr.t, tr.poses, "map:other"))


# -- kinematic filter ------------------------------------------------------

MODEL = KinematicModel(reach_min=0.2, reach_max=0.9, v_max=2.0, a_max=20.0)


def straight(p0, p1, duration, n=21):
    t = np.linspace(0, duration, n)
    poses = tuple(Pose.from_translation(*(np.asarray(p0) + (np.asarray(p1) - np.asarray(p0)) * k / (n - 1))) for k in range(n))
    return PoseTrajectory(t, poses)


def test_filter_examples():
    assert check_trajectory(straight((0.5, 0, 0), (0.5, 0, 0), 1.0), MODEL).accepted
    assert check_trajectory(straight((1.2, 0, 0), (1.2, 0, 0), 1.0), MODEL).reason == "reach"
    v = check_trajectory(straight((0.3, -0.5, 0), (0.3, 0.5, 0), 0.2), MODEL)
    assert v.reason == "speed" and v.detail["value"] == pytest.approx(5.0)
    short = PoseTrajectory(np.array([0.0, 0.1]), (IDENTITY, IDENTITY))
    assert check_trajectory(short, MODEL).reason == "insufficient-data"


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1), st.integers(2, 40))
def test_filter_matches_brute_force(seed, n):
    r = np.random.default_rng(seed)
    t = np.cumsum(r.uniform(0.02, 0.1, n))
    pts = np.array([0.5, 0.0, 0.3]) + np.cumsum(r.normal(0, 0.05, (n, 3)), axis=0)
    traj = PoseTrajectory(t, tuple(Pose.from_translation(*x) for x in pts))
    model = KinematicModel(
        base_pose=random_pose(r, 0.1), reach_min=0.1, reach_max=float(r.uniform(0.5, 1.2)), z_min=-0.5, z_max=0.8, v_max=float(r.uniform(0.5, 3)), a_max=float(r.uniform(5, 40))
    )
    assert check_trajectory(traj, model).reason == brute_force_verdict(traj, model)


def episode(eid, traj, frame="map:s"):
    traj = PoseTrajectory(traj.t, traj.poses, frame)
    w = TimedStream(traj.t, np.full(len(traj), 0.04), "width", stream_id="A")
    return Episode(eid, "s", ("A",), (traj,), (w,), (f"{eid}.jsonl",))


def test_filter_order_independent_and_bimanual():
    ok = episode("e0", lissajous_trajectory(3.0, 30.0, center=(0.5, 0, 0.3), amplitude=(0.05, 0.05, 0.05)))
    bad = episode("e1", straight((1.2, 0, 0), (1.2, 0, 0), 1.0))
    fast = episode("e2", straight((0.3, -0.5, 0), (0.3, 0.5, 0), 0.2))
    eps = [ok, bad, fast]
    verdicts = {e.episode_id: str(kinematic_filter(e, MODEL)) for e in eps}
    assert verdicts == {"e0": "accepted", "e1": "rejected(reach)", "e2": "rejected(speed)"}
    for perm in ([2, 0, 1], [1, 2, 0]):
        assert {eps[i].episode_id: str(kinematic_filter(eps[i], MODEL)) for i in perm} == verdicts
    pair = Episode("p", "s", ("A", "B"), (ok.trajs[0], bad.trajs[0]), ok.widths * 2)
    v = kinematic_filter(pair, [MODEL, MODEL])
    assert v.reason == "reach" and v.detail["arm"] == 1
    assert kinematic_filter(pair, [MODEL, KinematicModel(reach_max=2.0)]).accepted
    pre = ok.with_verdict(Verdict.rejected("missing-calibration", stage="ingest"))
    assert kinematic_filter(pre, MODEL).reason == "missing-calibration"


# -- mirror ----------------------------------------------------------------

L_RECT, R_RECT = (0, 10, 16, 12), (40, 10, 16, 12)


def test_mirror_uniform_unchanged():
    img = np.full((32, 64, 3), 77, np.uint8)
    assert np.array_equal(mirror_reflect(img, L_RECT, R_RECT), img)


def test_mirror_gradient():
    img = np.zeros((32, 64), np.int32)
    img[:, :] = np.arange(64)[None, :]
    out = mirror_reflect(img, L_RECT, R_RECT)
    # the right rect now holds the left crop flipped: values 15..0
    assert out[10, 40:56].tolist() == list(range(15, -1, -1))
    assert out[10, 0:16].tolist() == list(range(55, 39, -1))
    assert np.array_equal(out[:, 16:40], img[:, 16:40])


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_mirror_involution_and_multiset(seed):
    r = np.random.default_rng(seed)
    h, w = int(r.integers(4, 40)), int(r.integers(8, 80))
    img = r.integers(0, 256, (h, w, 3), dtype=np.uint8)
    rw, rh = int(r.integers(1, w // 2 + 1)), int(r.integers(1, h + 1))
    lx, rx = int(r.integers(0, w // 2 - rw + 1)), int(r.integers(w // 2, w - rw + 1))
    ly, ry = int(r.integers(0, h - rh + 1)), int(r.integers(0, h - rh + 1))
    once = mirror_reflect(img, (lx, ly, rw, rh), (rx, ry, rw, rh))
    assert np.array_equal(mirror_reflect(once, (lx, ly, rw, rh), (rx, ry, rw, rh)), img)
    assert np.array_equal(np.sort(once, axis=None), np.sort(img, axis=None))


def test_mirror_geometry_errors():
    img = np.zeros((32, 64), np.uint8)
    with pytest.raises(GeometryError):
        mirror_reflect(img, (0, 0, 10, 10), (5, 0, 10, 10))
    with pytest.raises(GeometryError):
        mirror_reflect(img, (0, 0, 10, 10), (40, 0, 12, 10))
    with pytest.raises(GeometryError):
        mirror_reflect(img, (0, 0, 10, 10), (60, 0, 10, 10))


# -- export ----------------------------------------------------------------

CALS = {"A": GripperCalibration("A", 0.002, 0.078), "B": GripperCalibration("B", 0.003, 0.077)}


def test_export_sample_count_formula(tmp_path):
    ep = episode("s/ep000", lissajous_trajectory(4.37, 30.0))
    cfg = ExportConfig(10.0, 2, 6)
    m = export_dataset([ep], cfg, tmp_path, CALS, metadata={})
    expected = math.floor((4.37 - cfg.window) / 0.1) + 1
    assert cfg.window == pytest.approx(0.6)
    assert m["counts"]["samples"] == expected == sample_count(4.37, cfg)
    assert sample_count(0.5, cfg) == 0


def test_export_empty(tmp_path):
    m = export_dataset([], ExportConfig(), tmp_path, CALS, metadata={})
    assert m["counts"] == {"episodes": 0, "accepted": 0, "rejected": 0, "samples": 0}
    assert (tmp_path / "manifest.json").exists()
    rej = episode("s/ep000", lissajous_trajectory(3.0, 30.0)).with_verdict(Verdict.rejected("reach"))
    m = export_dataset([rej], ExportConfig(), tmp_path / "r", CALS, metadata={})
    assert m["counts"]["rejected"] == 1 and "file" not in m["episodes"][0]


def test_export_roundtrip_and_reconstruction(tmp_path):
    traj = lissajous_trajectory(5.0, 30.0)
    ep = episode("s/ep000", traj)
    m = export_dataset([ep], ExportConfig(), tmp_path, CALS, metadata={})
    ds = load_dataset(tmp_path)
    assert ds.manifest == json.loads((tmp_path / "manifest.json").read_text())
    samples = ds.samples["s/ep000"]
    assert len(samples) == m["counts"]["samples"]
    with open(tmp_path / m["episodes"][0]["file"]) as fh:
        assert [json.loads(line) for line in fh] == samples
    for k in (0, len(samples) // 2, len(samples) - 1):
        for pose, t in zip(ds.decoded_actions("s/ep000", k), samples[k]["action_t"]):
            assert np.allclose(pose.translation, traj.at(t).translation, atol=1e-6)


def test_export_bimanual_and_widths_clipped(tmp_path):
    a = lissajous_trajectory(3.0, 30.0, frame_id="map:s")
    b = lissajous_trajectory(3.0, 30.0, center=(0.5, 0.3, 0.3), frame_id="map:s")
    wide = TimedStream(a.t, np.full(len(a), 0.08), "width")
    ep = Episode("s/ep000", "s", ("A", "B"), (a, b), (wide, wide), ("a", "b"))
    export_dataset([ep], ExportConfig(), tmp_path, CALS, metadata={})
    s = load_dataset(tmp_path).samples["s/ep000"][0]
    assert [g["serial"] for g in s["grippers"]] == ["A", "B"]
    assert s["grippers"][0]["action_widths"][0] == 0.078
    assert s["grippers"][1]["width_history"][0] == 0.077
    assert len(s["grippers"][0]["inter_gripper"]) == 2


def test_export_absolute_needs_frame(tmp_path):
    ep = episode("s/ep000", lissajous_trajectory(3.0, 30.0))
    with pytest.raises(ConfigError):
        export_dataset([ep], ExportConfig(repr="absolute"), tmp_path, CALS)
    m = export_dataset([ep], ExportConfig(repr="absolute", global_frame="map:s"), tmp_path, CALS, metadata={})
    assert m["counts"]["accepted"] == 1
    with pytest.raises(ConfigError):
        ExportConfig.from_dict({"freq": 10, "bogus": 1})


# -- ingest ----------------------------------------------------------------


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    truth = make_corpus(root, n_scenes=3, seed=0)
    ingests = [ingest_scene(root / sid) for sid in sorted(truth["scenes"])]
    return root, truth, ingests


def test_ingest_accounts_for_every_recording(corpus):
    root, truth, ingests = corpus
    store = WorkStore.from_ingests(ingests)
    paths = [r["path"] for r in store.recordings()]
    on_disk = sorted(f"{p.parent.name}/{p.name}" for p in root.glob("scene_*/*.jsonl"))
    assert sorted(paths) == on_disk and len(paths) == 60
    statuses = {r["status"] for r in store.recordings()}
    assert statuses <= {"mapping", "calibration", "paired", "single", "unpaired", "rejected"}
    rejected = [r for r in store.recordings() if r["status"] == "rejected"]
    assert [r["reason"] for r in rejected] == ["frame-mismatch"]


def test_ingest_calibration_matches_generator(corpus):
    _, truth, ingests = corpus
    for si in ingests:
        for serial, cal in si.calibrations.items():
            assert abs(cal.width_min - truth["calibration"][serial]["width_min"]) <= 0.0005
            assert abs(cal.width_max - truth["calibration"][serial]["width_max"]) <= 0.0005


def test_filter_verdicts_on_corpus_match_generator(corpus):
    _, truth, ingests = corpus
    for si in ingests:
        demos = truth["scenes"][si.manifest.scene_id]["demos"]
        for ep in si.episodes:
            v = kinematic_filter(ep, DEFAULT_MODEL)
            motions = [demos[p.split("/", 1)[1]]["motion"] for p in ep.recordings]
            bad = [m for m in motions if m != "ok"]
            assert v.accepted == (not bad)
            if bad:
                assert v.reason == bad[0]
            for traj in ep.trajs:
                assert check_trajectory(traj, DEFAULT_MODEL).reason == brute_force_verdict(traj, DEFAULT_MODEL)


def test_workstore_roundtrip(corpus, tmp_path):
    _, _, ingests = corpus
    store = WorkStore.from_ingests(ingests)
    store.save(tmp_path / "w.json")
    back = WorkStore.load(tmp_path / "w.json")
    assert back.scenes == json.loads(json.dumps(store.scenes))
    assert [e.to_dict() for e in back.episodes] == [e.to_dict() for e in store.episodes]
    assert set(back.calibrations) == {"C3441328", "C3441329"}
