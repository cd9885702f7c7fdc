import math
from dataclasses import dataclass

import numpy as np

from hybridplan.errors import InvalidParameterError

__all__ = [
    "EgoState",
    "FrenetCoord",
    "Pose2D",
    "normalize_angle",
    "normalize_angles",
    "to_local_frame",
    "to_world_frame",
]

TWO_PI = 2.0 * math.pi


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]"""
    wrapped = math.fmod(angle + math.pi, TWO_PI)
    if wrapped <= 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


def normalize_angles(angles) -> np.ndarray:
    """Vectorized :func:`normalize_angle`"""
    angles = np.asarray(angles, dtype=float)
    wrapped = np.fmod(angles + math.pi, TWO_PI)
    wrapped = np.where(wrapped <= 0.0, wrapped + TWO_PI, wrapped)
    return wrapped - math.pi


def _check_finite(owner: str, **fields):
    for name, value in fields.items():
        if not math.isfinite(value):
            raise InvalidParameterError(
                "%s.%s is not finite: %r" % (owner, name, value)
            )


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        _check_finite("Pose2D", x=self.x, y=self.y, heading=self.heading)
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "heading", normalize_angle(float(self.heading)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class EgoState:
    pose: Pose2D
    vel_lon: float = 0.0
    vel_lat: float = 0.0
    vel_ang: float = 0.0
    acc_lon: float = 0.0
    acc_lat: float = 0.0
    acc_ang: float = 0.0
    timestamp: float = 0.0

    def __post_init__(self):
        _check_finite(
            "EgoState",
            vel_lon=self.vel_lon,
            vel_lat=self.vel_lat,
            vel_ang=self.vel_ang,
            acc_lon=self.acc_lon,
            acc_lat=self.acc_lat,
            acc_ang=self.acc_ang,
            timestamp=self.timestamp,
        )

    @property
    def speed(self) -> float:
        return math.hypot(self.vel_lon, self.vel_lat)


@dataclass(frozen=True)
class FrenetCoord:
    s: float
    d: float
    heading_err: float = 0.0


def to_local_frame(pose: Pose2D, points) -> np.ndarray:
    """Express world points (..., 2) in the frame of ``pose``"""
    points = np.asarray(points, dtype=float)
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    dx = points[..., 0] - pose.x
    dy = points[..., 1] - pose.y
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)


def to_world_frame(pose: Pose2D, points) -> np.ndarray:
    """Inverse of :func:`to_local_frame`"""
    points = np.asarray(points, dtype=float)
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    x = points[..., 0]
    y = points[..., 1]
    return np.stack([pose.x + c * x - s * y, pose.y + s * x + c * y], axis=-1)
