import math

import numpy as np
import pytest

from hybridplan.errors import InvalidParameterError
from hybridplan.geometry import (
    Trajectory,
    resample_uniform,
    trajectory_from_positions,
)


def straight(n=81, speed=2.0, dt=0.1) -> Trajectory:
    t = dt * np.arange(n)
    return Trajectory(t, speed * t, np.zeros(n), np.zeros(n), np.full(n, speed))


def test_properties():
    traj = straight()
    assert len(traj) == 81
    assert traj.dt == pytest.approx(0.1)
    assert traj.duration == pytest.approx(8.0)
    assert traj.xy.shape == (81, 2)
    assert traj.pose_at(10).x == pytest.approx(2.0)
    points = traj.points
    assert len(points) == 81
    assert Trajectory.from_points(points) == traj


@pytest.mark.parametrize(
    "columns",
    [
        ([0.0], [0.0], [0.0], [0.0], [1.0]),
        ([0.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0]),
        ([0.0, 0.1, 0.3], [0.0] * 3, [0.0] * 3, [0.0] * 3, [1.0] * 3),
        ([0.0, 0.1], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0], [1.0, -1.0]),
        ([0.0, 0.1], [0.0, 1.0], [0.0], [0.0, 0.0], [1.0, 1.0]),
        ([0.0, 0.1], [0.0, float("nan")], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0]),
    ],
)
def test_invalid(columns):
    with pytest.raises(InvalidParameterError):
        Trajectory(*columns)


def test_heading_normalized():
    traj = Trajectory([0, 1], [0, 1], [0, 0], [1.5 * math.pi, 0.0], [1, 1])
    assert traj.heading[0] == pytest.approx(-0.5 * math.pi)


def test_from_positions_straight():
    xy = np.stack([0.2 * np.arange(11), np.zeros(11)], axis=1)
    traj = trajectory_from_positions(xy, 0.1, start_time=3.0)
    np.testing.assert_allclose(traj.speed, 2.0)
    np.testing.assert_allclose(traj.heading, 0.0)
    np.testing.assert_allclose(traj.accel, 0.0, atol=1e-9)
    np.testing.assert_allclose(traj.curvature, 0.0)
    assert traj.start_time == 3.0

    traj = trajectory_from_positions(xy, 0.1, initial_speed=1.0)
    assert traj.speed[0] == 1.0
    assert traj.accel[0] == pytest.approx(10.0)


def test_from_positions_standing():
    traj = trajectory_from_positions(np.zeros((5, 2)), 0.1, initial_heading=0.7)
    np.testing.assert_allclose(traj.heading, 0.7)
    np.testing.assert_allclose(traj.speed, 0.0)


def test_from_positions_invalid():
    with pytest.raises(InvalidParameterError):
        trajectory_from_positions([[0.0, 0.0]], 0.1)


def test_resample_keeps_endpoints():
    traj = straight()
    resampled = resample_uniform(traj, 0.2)
    assert len(resampled) == 41
    assert resampled.t[-1] == traj.t[-1]
    assert resampled.x[-1] == pytest.approx(traj.x[-1])
    np.testing.assert_allclose(resampled.x, 2.0 * resampled.t)


def test_resample_heading_shortest_arc():
    traj = Trajectory([0.0, 1.0], [0.0, 1.0], [0.0, 0.0], [3.1, -3.1], [1.0, 1.0])
    resampled = resample_uniform(traj, 0.5)
    assert abs(abs(resampled.heading[1]) - math.pi) < 1e-6


@pytest.mark.parametrize("step", [0.0, 9.0, 0.3])
def test_resample_invalid(step):
    with pytest.raises(InvalidParameterError):
        resample_uniform(straight(), step)


def test_replace_and_dict():
    traj = straight()
    slower = traj.replace(speed=np.ones(81))
    np.testing.assert_allclose(traj.speed, 2.0)
    np.testing.assert_allclose(slower.speed, 1.0)
    moved = traj.replace(start_time=4.0)
    assert moved.start_time == 4.0
    assert Trajectory.from_dict(moved.to_dict()) == moved
