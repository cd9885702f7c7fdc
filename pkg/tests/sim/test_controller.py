import numpy as np
import pytest

from hybridplan.errors import InvalidParameterError
from hybridplan.geometry import Pose2D, trajectory_from_positions
from hybridplan.sim import ControllerGains, PlantState, step_plant, track_trajectory

GAINS = ControllerGains()


def straight(speed=5.0, n=81, dt=0.1, start_time=0.0, y=0.0):
    x = speed * dt * np.arange(n)
    return trajectory_from_positions(
        np.stack([x, np.full(n, y)], axis=1),
        dt,
        speeds=np.full(n, speed),
        initial_heading=0.0,
        start_time=start_time,
    )


def test_gains_invalid():
    with pytest.raises(InvalidParameterError):
        ControllerGains(lookahead_base=0.0)
    with pytest.raises(InvalidParameterError):
        ControllerGains(accel_min=1.0)
    with pytest.raises(InvalidParameterError):
        ControllerGains(steering_rate_max=0.0)


def test_on_path_at_speed():
    state = PlantState(Pose2D(0.0, 0.0, 0.0), speed=5.0)
    accel, rate = track_trajectory(state, straight(), GAINS)
    assert accel == pytest.approx(0.0, abs=1e-9)
    assert rate == pytest.approx(0.0, abs=1e-9)


def test_speed_error_feedback():
    state = PlantState(Pose2D(0.0, 0.0, 0.0), speed=4.0)
    accel, _ = track_trajectory(state, straight(), GAINS)
    assert accel == pytest.approx(GAINS.speed_gain)
    slow = PlantState(Pose2D(0.0, 0.0, 0.0), speed=0.0)
    accel, _ = track_trajectory(slow, straight(speed=8.0), GAINS)
    assert accel == GAINS.accel_max


def test_steers_back_to_path():
    left = PlantState(Pose2D(0.0, 0.5, 0.0), speed=5.0)
    _, rate = track_trajectory(left, straight(), GAINS)
    assert -GAINS.steering_rate_max <= rate < 0.0
    right = PlantState(Pose2D(0.0, -0.5, 0.0), speed=5.0)
    _, rate = track_trajectory(right, straight(), GAINS)
    assert 0.0 < rate <= GAINS.steering_rate_max


def test_reads_reference_at_plant_time():
    traj = straight(start_time=2.0)
    state = PlantState(Pose2D(5.0, 0.0, 0.0), speed=5.0, time=3.0)
    accel, _ = track_trajectory(state, traj, GAINS)
    assert accel == pytest.approx(0.0, abs=1e-9)


def test_brakes_past_the_end():
    traj = straight(n=11)
    state = PlantState(Pose2D(6.0, 0.0, 0.0), speed=3.0, steering=0.1, time=2.0)
    accel, rate = track_trajectory(state, traj, GAINS)
    assert accel == -GAINS.stop_decel
    assert rate < 0.0
    stopped = PlantState(Pose2D(6.0, 0.0, 0.0), speed=0.0, time=2.0)
    assert track_trajectory(stopped, traj, GAINS)[0] == 0.0


def test_stationary_trajectory_holds():
    traj = straight(speed=0.0)
    state = PlantState(Pose2D(0.0, 0.0, 0.0), speed=0.0)
    assert track_trajectory(state, traj, GAINS) == (0.0, 0.0)


def test_closed_loop_converges():
    traj = straight(n=201)
    state = PlantState(Pose2D(0.0, 0.4, 0.0), speed=5.0)
    for _ in range(800):
        state = step_plant(state, track_trajectory(state, traj, GAINS), 0.01)
    assert abs(state.pose.y) < 0.05
    assert state.speed == pytest.approx(5.0, abs=0.05)
    assert state.pose.x == pytest.approx(40.0, abs=0.5)
