import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from hybridplan.errors import InvalidParameterError
from hybridplan.geometry import Polyline, Trajectory, project_points, to_local_frame
from hybridplan.sim.plant import DELTA_MAX, PlantState

__all__ = ["ControllerGains", "track_trajectory"]


@dataclass(frozen=True)
class ControllerGains:
    lookahead_base: float = 2.0
    lookahead_time: float = 0.4
    steering_gain: float = 8.0
    speed_gain: float = 1.5
    accel_min: float = -6.0
    accel_max: float = 3.0
    steering_rate_max: float = 1.0
    delta_max: float = DELTA_MAX
    stop_decel: float = 2.0

    def __post_init__(self):
        if not (self.lookahead_base > 0.0 and self.lookahead_time >= 0.0):
            raise InvalidParameterError(
                "lookahead must be positive: %r, %r"
                % (self.lookahead_base, self.lookahead_time)
            )
        if not self.accel_min < 0.0 < self.accel_max:
            raise InvalidParameterError(
                "expect accel_min < 0 < accel_max: %r, %r"
                % (self.accel_min, self.accel_max)
            )
        if not (self.steering_rate_max > 0.0 and self.delta_max > 0.0):
            raise InvalidParameterError("steering limits must be positive")


def _clip(value: float, low: float, high: float) -> float:
    return min(max(value, low), high)


def _steering_rate(s: PlantState, target: float, gains: ControllerGains) -> float:
    target = _clip(target, -gains.delta_max, gains.delta_max)
    rate = gains.steering_gain * (target - s.steering)
    return _clip(rate, -gains.steering_rate_max, gains.steering_rate_max)


def track_trajectory(
    s: PlantState, traj: Trajectory, gains: ControllerGains
) -> Tuple[float, float]:
    """Pure-pursuit steering toward a speed-scaled lookahead point and
    proportional speed control with the trajectory acceleration as feed
    forward

    Speed and acceleration references are read at the plant time. Past the
    end of the trajectory the vehicle brakes to a stop with straight wheels.

    :returns: ``(accel, steering_rate)`` within the actuator limits
    """
    xy = traj.xy
    keep = np.concatenate([[True], np.hypot(*np.diff(xy, axis=0).T) > 1e-6])
    xy = xy[keep]
    position = (s.pose.x, s.pose.y)
    elapsed = s.time - traj.start_time

    if len(xy) >= 2:
        path = Polyline(xy)
        station = float(project_points(path, [position])[0][0])
        beyond = station >= path.length - 1e-6 and elapsed >= traj.duration
    else:
        path, station, beyond = None, 0.0, True
    if beyond:
        accel = -min(gains.stop_decel, s.speed / 0.1) if s.speed > 0.0 else 0.0
        return _clip(accel, gains.accel_min, 0.0), _steering_rate(s, 0.0, gains)

    v_ref = float(np.interp(elapsed, traj.t, traj.speed))
    a_ref = float(np.interp(elapsed, traj.t, traj.accel))
    accel = a_ref + gains.speed_gain * (v_ref - s.speed)
    accel = _clip(accel, gains.accel_min, gains.accel_max)

    lookahead = gains.lookahead_base + gains.lookahead_time * s.speed
    target = path.point_at(station + lookahead)
    local = to_local_frame(s.pose, target)
    distance = math.hypot(local[0], local[1])
    if distance < 1e-6:
        return accel, _steering_rate(s, s.steering, gains)
    curvature = 2.0 * local[1] / (distance * distance)
    steering = math.atan(s.wheelbase * curvature)
    return accel, _steering_rate(s, steering, gains)
