from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np

from hybridplan.errors import InvalidParameterError
from hybridplan.geometry.path import circumscribed_curvature, resample_uniform
from hybridplan.geometry.pose import Pose2D, normalize_angles

__all__ = [
    "Trajectory",
    "TrajectoryPoint",
    "trajectory_from_positions",
]

DT_TOLERANCE = 1e-9
FIELDS = ("t", "x", "y", "heading", "speed", "accel", "curvature")


@dataclass(frozen=True)
class TrajectoryPoint:
    pose: Pose2D
    t: float
    speed: float
    accel: float = 0.0
    curvature: float = 0.0


class Trajectory:
    """Uniformly timed sequence of poses with speed, acceleration and curvature

    Times are relative to the plan start; ``start_time`` places the plan on
    the simulation clock.
    """

    def __init__(
        self,
        t,
        x,
        y,
        heading,
        speed,
        accel=None,
        curvature=None,
        *,
        start_time: float = 0.0,
    ):
        t = np.array(t, dtype=float)
        size = len(t)
        if accel is None:
            accel = np.zeros(size)
        if curvature is None:
            curvature = np.zeros(size)
        columns = [t]
        for name, column in zip(FIELDS[1:], (x, y, heading, speed, accel, curvature)):
            column = np.array(column, dtype=float)
            if column.shape != (size,):
                raise InvalidParameterError(
                    "trajectory field %s has shape %r, expect (%d,)"
                    % (name, column.shape, size)
                )
            columns.append(column)
        if size < 2:
            raise InvalidParameterError("trajectory needs at least 2 points")
        for name, column in zip(FIELDS, columns):
            if not np.all(np.isfinite(column)):
                raise InvalidParameterError("trajectory field %s is not finite" % name)
        steps = np.diff(t)
        if np.any(steps <= 0.0):
            raise InvalidParameterError("trajectory times not strictly increasing")
        if np.max(np.abs(steps - steps[0])) > DT_TOLERANCE:
            raise InvalidParameterError("trajectory times not uniformly spaced")
        if np.min(columns[4]) < 0.0:
            raise InvalidParameterError(
                "negative trajectory speed: %r" % float(np.min(columns[4]))
            )
        columns[3] = normalize_angles(columns[3])
        for column in columns:
            column.setflags(write=False)
        (
            self._t,
            self._x,
            self._y,
            self._heading,
            self._speed,
            self._accel,
            self._curvature,
        ) = columns
        self.start_time = float(start_time)

    t = property(lambda self: self._t)
    x = property(lambda self: self._x)
    y = property(lambda self: self._y)
    heading = property(lambda self: self._heading)
    speed = property(lambda self: self._speed)
    accel = property(lambda self: self._accel)
    curvature = property(lambda self: self._curvature)

    @property
    def dt(self) -> float:
        return float(self._t[1] - self._t[0])

    @property
    def duration(self) -> float:
        return float(self._t[-1] - self._t[0])

    @property
    def xy(self) -> np.ndarray:
        return np.stack([self._x, self._y], axis=1)

    def __len__(self) -> int:
        return len(self._t)

    def __repr__(self):
        return "Trajectory(%d points, dt=%g, start_time=%g)" % (
            len(self),
            self.dt,
            self.start_time,
        )

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.start_time == other.start_time and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in FIELDS
        )

    def pose_at(self, index: int) -> Pose2D:
        return Pose2D(self._x[index], self._y[index], self._heading[index])

    @property
    def points(self) -> List[TrajectoryPoint]:
        return list(self.iter_points())

    def iter_points(self) -> Iterator[TrajectoryPoint]:
        for i in range(len(self)):
            yield TrajectoryPoint(
                pose=self.pose_at(i),
                t=float(self._t[i]),
                speed=float(self._speed[i]),
                accel=float(self._accel[i]),
                curvature=float(self._curvature[i]),
            )

    @classmethod
    def from_points(
        cls, points: Sequence[TrajectoryPoint], *, start_time: float = 0.0
    ) -> "Trajectory":
        return cls(
            [p.t for p in points],
            [p.pose.x for p in points],
            [p.pose.y for p in points],
            [p.pose.heading for p in points],
            [p.speed for p in points],
            [p.accel for p in points],
            [p.curvature for p in points],
            start_time=start_time,
        )

    def max_abs_curvature(self) -> float:
        return float(np.max(np.abs(self._curvature)))

    def replace(self, **columns) -> "Trajectory":
        values = {name: getattr(self, name) for name in FIELDS}
        values.update(columns)
        start_time = values.pop("start_time", self.start_time)
        return Trajectory(*(values[name] for name in FIELDS), start_time=start_time)

    def to_dict(self) -> dict:
        data = {"start_time": self.start_time}
        for name in FIELDS:
            data[name] = getattr(self, name)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Trajectory":
        return cls(
            *(data[name] for name in FIELDS), start_time=data.get("start_time", 0.0)
        )


def _forward_difference(values: np.ndarray, dt: float) -> np.ndarray:
    diff = np.diff(values) / dt
    return np.append(diff, diff[-1])


def trajectory_from_positions(
    xy,
    dt: float,
    *,
    speeds: Optional[Sequence[float]] = None,
    initial_heading: Optional[float] = None,
    initial_speed: Optional[float] = None,
    start_time: float = 0.0,
) -> Trajectory:
    """Rebuild heading, speed, acceleration and curvature from positions
    sampled every ``dt`` seconds

    :param speeds: Use these speeds instead of finite differences
    :param initial_heading: Heading for leading points that do not move
    :param initial_speed: Speed of the first point, default is the first
        finite-difference speed
    """
    xy = np.asarray(xy, dtype=float)
    if xy.ndim != 2 or xy.shape[1] != 2 or len(xy) < 2:
        raise InvalidParameterError(
            "expect (n >= 2, 2) positions, got %r" % (xy.shape,)
        )
    step = np.diff(xy, axis=0)
    dist = np.hypot(step[:, 0], step[:, 1])
    raw_heading = np.arctan2(step[:, 1], step[:, 0])
    moving = dist > 1e-6
    if initial_heading is not None:
        current = float(initial_heading)
    elif moving.any():
        current = float(raw_heading[np.argmax(moving)])
    else:
        current = 0.0
    heading = np.empty(len(xy))
    for i in range(len(dist)):
        if moving[i]:
            current = raw_heading[i]
        heading[i] = current
    heading[-1] = heading[-2]
    if speeds is None:
        speed = np.append(dist / dt, dist[-1] / dt)
        speed[1:-1] = 0.5 * (dist[:-1] + dist[1:]) / dt
        if initial_speed is not None:
            speed[0] = initial_speed
    else:
        speed = np.asarray(speeds, dtype=float)
    accel = _forward_difference(speed, dt)
    curvature = circumscribed_curvature(xy)
    t = dt * np.arange(len(xy))
    return Trajectory(
        t,
        xy[:, 0],
        xy[:, 1],
        heading,
        np.maximum(speed, 0.0),
        accel,
        curvature,
        start_time=start_time,
    )


@resample_uniform.register
def _(traj: Trajectory, step: float) -> Trajectory:
    duration = traj.duration
    if not step > 0.0:
        raise InvalidParameterError("step must be positive: %r" % step)
    if step > duration + DT_TOLERANCE:
        raise InvalidParameterError(
            "step larger than total extent: %r > %r" % (step, duration)
        )
    count = round(duration / step)
    if abs(count * step - duration) > DT_TOLERANCE:
        raise InvalidParameterError(
            "duration %r is not a multiple of step %r" % (duration, step)
        )
    t = traj.t[0] + step * np.arange(count + 1)
    t[-1] = traj.t[-1]
    heading = np.interp(t, traj.t, np.unwrap(traj.heading))
    return Trajectory(
        t,
        np.interp(t, traj.t, traj.x),
        np.interp(t, traj.t, traj.y),
        heading,
        np.interp(t, traj.t, traj.speed),
        np.interp(t, traj.t, traj.accel),
        np.interp(t, traj.t, traj.curvature),
        start_time=traj.start_time,
    )
