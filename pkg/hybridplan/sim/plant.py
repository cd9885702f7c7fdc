"""Kinematic bicycle plant with the pose at the rear axle"""

import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from hybridplan.errors import InvalidParameterError
from hybridplan.geometry import EgoState, Pose2D

__all__ = ["DELTA_MAX", "PlantState", "step_plant"]

DELTA_MAX = 0.6


@dataclass(frozen=True)
class PlantState:
    """Vehicle state; ``accel`` and ``steering_rate`` hold the last command"""

    pose: Pose2D
    speed: float = 0.0
    steering: float = 0.0
    wheelbase: float = 2.5
    accel: float = 0.0
    steering_rate: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        if self.speed < 0.0:
            raise InvalidParameterError("plant speed must be >= 0: %r" % self.speed)
        if not self.wheelbase > 0.0:
            raise InvalidParameterError(
                "wheelbase must be positive: %r" % self.wheelbase
            )

    @property
    def curvature(self) -> float:
        return math.tan(self.steering) / self.wheelbase

    def ego_state(self) -> EgoState:
        """Ego state seen by the planner; lateral and angular channels follow
        from the bicycle kinematics"""
        curvature = self.curvature
        curvature_rate = self.steering_rate / (
            self.wheelbase * math.cos(self.steering) ** 2
        )
        return EgoState(
            pose=self.pose,
            vel_lon=self.speed,
            vel_lat=0.0,
            vel_ang=self.speed * curvature,
            acc_lon=self.accel,
            acc_lat=self.speed * self.speed * curvature,
            acc_ang=self.accel * curvature + self.speed * curvature_rate,
            timestamp=self.time,
        )


def _derivative(state: np.ndarray, accel: float, curvature: float) -> np.ndarray:
    _, _, heading, speed = state
    if speed <= 0.0 and accel < 0.0:
        accel = 0.0
    speed = max(speed, 0.0)
    return np.array(
        [
            speed * math.cos(heading),
            speed * math.sin(heading),
            speed * curvature,
            accel,
        ]
    )


def step_plant(
    s: PlantState,
    cmd: Tuple[float, float],
    dt: float,
    *,
    delta_max: float = DELTA_MAX,
) -> PlantState:
    """Advance by ``dt`` with a fourth-order Runge-Kutta step

    :param cmd: ``(accel, steering_rate)``; the steering is integrated first
        and clamped to ``delta_max``, then held over the step
    """
    if not dt > 0.0:
        raise InvalidParameterError("dt must be positive: %r" % dt)
    accel, steering_rate = float(cmd[0]), float(cmd[1])
    steering = min(max(s.steering + steering_rate * dt, -delta_max), delta_max)
    curvature = math.tan(steering) / s.wheelbase
    state = np.array([s.pose.x, s.pose.y, s.pose.heading, s.speed])
    k1 = _derivative(state, accel, curvature)
    k2 = _derivative(state + 0.5 * dt * k1, accel, curvature)
    k3 = _derivative(state + 0.5 * dt * k2, accel, curvature)
    k4 = _derivative(state + dt * k3, accel, curvature)
    x, y, heading, speed = state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return replace(
        s,
        pose=Pose2D(x, y, heading),
        speed=max(float(speed), 0.0),
        steering=steering,
        accel=accel,
        steering_rate=steering_rate,
        time=s.time + dt,
    )
