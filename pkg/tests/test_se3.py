import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from strategies import poses, quaternions, trajectories
from umikit.errors import OutOfRangeError
from umikit.se3 import (
    IDENTITY,
    ActionRepr,
    Pose,
    PoseTrajectory,
    accumulate_deltas,
    angular_distance,
    compose,
    convert_actions,
    decode_actions,
    encode_actions,
    inter_gripper_pose,
    interpolate_pose,
    inverse,
    quat_from_matrix,
    quat_to_matrix,
    relative,
    relative_proprioception,
    relative_trajectory,
    slerp,
    to_delta,
)
from umikit.synthetic import random_pose, random_trajectory

RZ90 = Pose.from_axis_angle((0, 0, 1), math.pi / 2)


def mat(p: Pose) -> np.ndarray:
    """Independent 4x4 built with scipy (scalar-last quaternions)."""
    w, x, y, z = p.rotation
    m = np.eye(4)
    m[:3, :3] = Rotation.from_quat([x, y, z, w]).as_matrix()
    m[:3, 3] = p.translation
    return m


def assert_pose_close(a: Pose, b: Pose, atol=1e-9):
    assert np.allclose(a.translation, b.translation, atol=atol)
    assert angular_distance(a.rotation, b.rotation) < max(atol, 1e-7)


# -- compose / inverse -----------------------------------------------------


def test_compose_identity_and_inverse(rng):
    p = random_pose(rng)
    assert_pose_close(compose(IDENTITY, p), p)
    assert_pose_close(compose(p, inverse(p)), IDENTITY)


def test_compose_rotation_then_translation():
    out = compose(RZ90, Pose.from_translation(1, 0, 0))
    assert np.allclose(out.translation, (0, 1, 0), atol=1e-12)
    assert angular_distance(out.rotation, RZ90.rotation) < 1e-12
    assert np.allclose(mat(out), mat(RZ90) @ mat(Pose.from_translation(1, 0, 0)), atol=1e-12)


def test_inverse_examples(rng):
    assert_pose_close(inverse(IDENTITY), IDENTITY)
    assert np.allclose(inverse(Pose.from_translation(1, 2, 3)).translation, (-1, -2, -3))
    for _ in range(20):
        p = random_pose(rng)
        assert np.allclose(mat(inverse(p)), np.linalg.inv(mat(p)), atol=1e-12)


@given(poses(), poses())
def test_compose_matches_matrix_product(a, b):
    assert np.allclose(mat(compose(a, b)), mat(a) @ mat(b), atol=1e-9)


@given(poses(), poses(), poses())
def test_compose_associative(a, b, c):
    assert_pose_close(compose(compose(a, b), c), compose(a, compose(b, c)), atol=1e-9)


@given(poses())
def test_unit_norm_and_canonical_sign(p):
    q = np.array(p.rotation)
    assert abs(np.linalg.norm(q) - 1) < 1e-9
    assert q[0] >= 0
    for r in (inverse(p), compose(p, p)):
        assert abs(np.linalg.norm(r.rotation) - 1) < 1e-9


@given(poses())
def test_inverse_roundtrip(p):
    assert_pose_close(compose(p, inverse(p)), IDENTITY, atol=1e-9)


@given(quaternions())
def test_matrix_quaternion_roundtrip(q):
    assert angular_distance(quat_from_matrix(quat_to_matrix(q)), q) < 1e-7


def test_pose_list_roundtrip(rng):
    p = random_pose(rng)
    assert Pose.from_list(p.to_list()) == p
    assert Pose.from_matrix(p.matrix()).isclose(p)


# -- relative / delta ------------------------------------------------------


def test_relative_trajectory_examples():
    tr = PoseTrajectory(np.array([0.0, 1.0]), (IDENTITY, Pose.from_translation(1, 0, 0)))
    rel = relative_trajectory(tr, 0)
    assert rel.poses[0] == IDENTITY
    assert np.allclose(rel.poses[1].translation, (1, 0, 0))
    assert rel.frame_id == "relative:0.0"

    tr = PoseTrajectory(np.array([0.0, 1.0]), (RZ90, Pose.from_translation(1, 0, 0)))
    rel = relative_trajectory(tr, 0)
    assert np.allclose(rel.poses[1].translation, (0, -1, 0), atol=1e-12)
    expected = Pose.from_axis_angle((0, 0, 1), -math.pi / 2)
    assert angular_distance(rel.poses[1].rotation, expected.rotation) < 1e-12


def test_relative_trajectory_errors():
    tr = PoseTrajectory(np.array([0.0]), (IDENTITY,))
    with pytest.raises(IndexError):
        relative_trajectory(tr, 1)
    with pytest.raises(ValueError):
        relative_trajectory(PoseTrajectory(np.zeros(0), ()), 0)


@given(trajectories(), st.data())
def test_relative_base_is_identity(tr, data):
    k = data.draw(st.integers(0, len(tr) - 1))
    assert relative_trajectory(tr, k).poses[k] == IDENTITY


def test_to_delta_examples():
    const = [Pose.from_translation(1, 2, 3)] * 4
    assert all(d.isclose(IDENTITY) for d in to_delta(const))
    steps = [Pose.from_translation(0.1 * k, 0, 0) for k in range(5)]
    for d in to_delta(steps):
        assert np.allclose(d.translation, (0.1, 0, 0))
    assert len(to_delta(steps)) == 4
    with pytest.raises(ValueError):
        to_delta(steps[:1])


def test_accumulate_examples(rng):
    base = random_pose(rng)
    assert accumulate_deltas([], base) == [base]
    out = accumulate_deltas([IDENTITY] * 3, base)
    assert all(p.isclose(base) for p in out)


def test_deltas_reproduce_relative_trajectory(rng):
    tr = random_trajectory(rng, 20)
    acc = accumulate_deltas(to_delta(tr), IDENTITY)
    rel = relative_trajectory(tr, 0)
    for a, b in zip(acc, rel.poses):
        assert_pose_close(a, b, 1e-9)


@given(trajectories())
def test_delta_roundtrip(tr):
    for a, b in zip(accumulate_deltas(to_delta(tr), tr.poses[0]), tr.poses):
        assert_pose_close(a, b, 1e-9)


@given(trajectories(), poses())
def test_frame_invariance(tr, g):
    moved = tr.transformed(g)
    for a, b in zip(relative_trajectory(tr, 0).poses, relative_trajectory(moved, 0).poses):
        assert_pose_close(a, b, 1e-9)
    for a, b in zip(to_delta(tr), to_delta(moved)):
        assert_pose_close(a, b, 1e-9)


def test_absolute_not_invariant(rng):
    tr = random_trajectory(rng, 10)
    g = random_pose(rng)
    moved = tr.transformed(g)
    diffs = [np.linalg.norm(np.subtract(a.translation, b.translation)) for a, b in zip(tr.poses, moved.poses)]
    assert max(diffs) > 1e-3
    for a, b in zip(tr.poses, moved.poses):
        assert_pose_close(compose(g, a), b)


# -- proprioception and inter-gripper --------------------------------------


def test_relative_proprioception_examples():
    one = PoseTrajectory(np.array([0.0]), (Pose.from_translation(1, 1, 1),))
    assert relative_proprioception(one).poses == (IDENTITY,)
    two = PoseTrajectory(np.array([0.0, 0.1]), (IDENTITY, Pose.from_translation(0, 0, 0.05)))
    rel = relative_proprioception(two)
    assert np.allclose(rel.poses[0].translation, (0, 0, -0.05))
    assert rel.poses[-1] == IDENTITY
    const = PoseTrajectory(np.array([0.0, 0.1]), (RZ90, RZ90))
    assert all(p.isclose(IDENTITY) for p in relative_proprioception(const).poses)
    with pytest.raises(ValueError):
        relative_proprioception(PoseTrajectory(np.zeros(0), ()))


@given(poses(), poses(), poses())
def test_inter_gripper_frame_invariance(left, right, g):
    a = inter_gripper_pose(left, right)
    b = inter_gripper_pose(compose(g, left), compose(g, right))
    assert_pose_close(a, b, 1e-9)


def test_inter_gripper_examples(rng):
    p = random_pose(rng)
    assert inter_gripper_pose(p, p).isclose(IDENTITY)
    out = inter_gripper_pose(IDENTITY, Pose.from_translation(0.3, 0, 0))
    assert np.allclose(out.translation, (0.3, 0, 0))


# -- interpolation ---------------------------------------------------------


def test_interpolate_examples():
    a, b = IDENTITY, Pose.from_translation(1, 0, 0)
    assert interpolate_pose(a, b, 0.0) == a
    assert interpolate_pose(a, b, 1.0) == b
    assert np.allclose(interpolate_pose(a, b, 0.5).translation, (0.5, 0, 0))
    half = interpolate_pose(IDENTITY, RZ90, 0.5)
    assert angular_distance(half.rotation, Pose.from_axis_angle((0, 0, 1), math.pi / 4).rotation) < 1e-12
    with pytest.raises(ValueError):
        interpolate_pose(a, b, 1.5)


def test_slerp_matches_scipy(rng):
    from scipy.spatial.transform import Slerp

    for _ in range(20):
        q0, q1 = random_pose(rng).rotation, random_pose(rng).rotation
        alpha = float(rng.uniform())
        rots = Rotation.from_quat([[*q0[1:], q0[0]], [*q1[1:], q1[0]]])
        x, y, z, w = Slerp([0, 1], rots)([alpha]).as_quat()[0]
        assert angular_distance(slerp(q0, q1, alpha), (w, x, y, z)) < 1e-7


@given(quaternions(), st.floats(0, 1))
def test_slerp_shortest_arc(q, alpha):
    neg = tuple(-c for c in q)
    out = slerp(q, neg, alpha)
    assert abs(np.linalg.norm(out) - 1) < 1e-9
    assert angular_distance(out, q) <= math.pi / 2 + 1e-9


@given(poses(), poses(), st.floats(0, 1))
def test_interpolate_unit_norm_and_bounded(a, b, alpha):
    p = interpolate_pose(a, b, alpha)
    assert abs(np.linalg.norm(p.rotation) - 1) < 1e-9
    total = angular_distance(a.rotation, b.rotation)
    assert angular_distance(a.rotation, p.rotation) <= total + 1e-7


def test_trajectory_at_and_range():
    tr = PoseTrajectory(np.array([0.0, 1.0]), (IDENTITY, RZ90))
    assert tr.at(1.0) == RZ90
    p = tr.at(0.25)
    assert abs(math.degrees(angular_distance(p.rotation, IDENTITY.rotation)) - 22.5) < 1e-9
    with pytest.raises(OutOfRangeError):
        tr.at(1.01)
    with pytest.raises(ValueError):
        PoseTrajectory(np.array([0.0, 0.0]), (IDENTITY, IDENTITY))


# -- action representations ------------------------------------------------


@pytest.mark.parametrize("repr", list(ActionRepr))
def test_encode_decode_roundtrip(rng, repr):
    base = random_pose(rng)
    targets = [random_pose(rng) for _ in range(6)]
    enc = encode_actions(targets, base, repr)
    for a, b in zip(decode_actions(enc, base, repr), targets):
        assert_pose_close(a, b, 1e-9)


def test_convert_between_all_representations(rng):
    base = random_pose(rng)
    targets = [random_pose(rng) for _ in range(5)]
    for src in ActionRepr:
        for dst in ActionRepr:
            out = convert_actions(encode_actions(targets, base, src), base, src, dst)
            ref = encode_actions(targets, base, dst)
            for a, b in zip(out, ref):
                assert_pose_close(a, b, 1e-9)


def test_delta_first_step_relative_to_base(rng):
    base = random_pose(rng)
    targets = [random_pose(rng) for _ in range(3)]
    enc = encode_actions(targets, base, ActionRepr.DELTA)
    assert_pose_close(enc[0], relative(base, targets[0]))
    assert_pose_close(enc[1], relative(targets[0], targets[1]))
