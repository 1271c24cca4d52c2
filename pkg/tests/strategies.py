"""Hypothesis strategies shared by the property tests."""

import numpy as np
from hypothesis import strategies as st

from umikit.se3 import Pose, PoseTrajectory

finite = st.floats(-5.0, 5.0, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite)


@st.composite
def quaternions(draw):
    q = np.array(draw(st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 4)))
    if np.linalg.norm(q) < 1e-3:
        q = np.array([1.0, 0.0, 0.0, 0.0])
    return tuple(q / np.linalg.norm(q))


@st.composite
def poses(draw):
    return Pose(draw(vec3), draw(quaternions()))


@st.composite
def trajectories(draw, min_size=2, max_size=12):
    ps = draw(st.lists(poses(), min_size=min_size, max_size=max_size))
    return PoseTrajectory(np.arange(len(ps)) * 0.1, tuple(ps), "world")
