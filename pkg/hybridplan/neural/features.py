"""Ego-frame encoding of the recent ego history and the planner path"""

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from hybridplan.errors import ColdStartError, InvalidParameterError
from hybridplan.geometry import (
    EgoState,
    Polyline,
    Pose2D,
    Trajectory,
    normalize_angles,
    project_points,
    project_to_path,
    to_local_frame,
    to_world_frame,
    trajectory_from_positions,
)

__all__ = [
    "FEATURE_SIZE",
    "HISTORY_CHANNELS",
    "HISTORY_FRAMES",
    "HISTORY_SPACING",
    "HISTORY_WINDOW",
    "PATH_POINTS",
    "PATH_SPACING",
    "FeatureVector",
    "decode_waypoints",
    "encode_features",
    "extend_planner_path",
    "history_times",
]

HISTORY_FRAMES = 10
HISTORY_SPACING = 0.2
HISTORY_WINDOW = 2.0
HISTORY_CHANNELS = 9
PATH_POINTS = 40
PATH_SPACING = 1.0
FEATURE_SIZE = HISTORY_FRAMES * HISTORY_CHANNELS + PATH_POINTS * 2

TIME_TOLERANCE = 1e-6


@dataclass(frozen=True)
class FeatureVector:
    """History frames (10, 9) ordered oldest first and path waypoints
    (40, 2), both in the current ego frame"""

    history: np.ndarray
    path: np.ndarray

    def __post_init__(self):
        history = np.array(self.history, dtype=float)
        path = np.array(self.path, dtype=float)
        if history.shape != (HISTORY_FRAMES, HISTORY_CHANNELS):
            raise InvalidParameterError(
                "history block has shape %r, expect %r"
                % (history.shape, (HISTORY_FRAMES, HISTORY_CHANNELS))
            )
        if path.shape != (PATH_POINTS, 2):
            raise InvalidParameterError(
                "path block has shape %r, expect %r" % (path.shape, (PATH_POINTS, 2))
            )
        if not (np.all(np.isfinite(history)) and np.all(np.isfinite(path))):
            raise InvalidParameterError("feature vector is not finite")
        history.setflags(write=False)
        path.setflags(write=False)
        object.__setattr__(self, "history", history)
        object.__setattr__(self, "path", path)

    def __len__(self) -> int:
        return FEATURE_SIZE

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.history.ravel(), self.path.ravel()])

    @classmethod
    def from_array(cls, values) -> "FeatureVector":
        values = np.asarray(values, dtype=float)
        if values.shape != (FEATURE_SIZE,):
            raise InvalidParameterError(
                "feature array has shape %r, expect (%d,)"
                % (values.shape, FEATURE_SIZE)
            )
        split = HISTORY_FRAMES * HISTORY_CHANNELS
        return cls(
            values[:split].reshape(HISTORY_FRAMES, HISTORY_CHANNELS),
            values[split:].reshape(PATH_POINTS, 2),
        )


def history_times(now: float) -> np.ndarray:
    """Sample times of the history frames, oldest first, ending at ``now``"""
    return now - HISTORY_SPACING * np.arange(HISTORY_FRAMES - 1, -1, -1)


def _history_block(history: Sequence[EgoState]) -> np.ndarray:
    current = history[-1]
    stamps = np.array([state.timestamp for state in history])
    if np.any(np.diff(stamps) <= 0.0):
        raise InvalidParameterError("history timestamps not strictly increasing")
    if stamps[-1] - stamps[0] < HISTORY_WINDOW - TIME_TOLERANCE:
        raise ColdStartError(
            "cold start: history covers %.2f s, need %.1f s"
            % (stamps[-1] - stamps[0], HISTORY_WINDOW)
        )
    table = np.array(
        [
            (
                state.pose.x,
                state.pose.y,
                state.pose.heading,
                state.vel_lon,
                state.vel_lat,
                state.vel_ang,
                state.acc_lon,
                state.acc_lat,
                state.acc_ang,
            )
            for state in history
        ]
    )
    table[:, 2] = np.unwrap(table[:, 2])
    times = history_times(current.timestamp)
    frames = np.stack(
        [np.interp(times, stamps, table[:, c]) for c in range(HISTORY_CHANNELS)],
        axis=1,
    )
    frames[:, :2] = to_local_frame(current.pose, frames[:, :2])
    frames[:, 2] = normalize_angles(frames[:, 2] - current.pose.heading)
    return frames


def _path_block(
    pose: Pose2D, planner_path: Union[Trajectory, Polyline]
) -> np.ndarray:
    points = (
        planner_path.xy if isinstance(planner_path, Trajectory) else (
            planner_path.vertices
        )
    )
    points = np.asarray(points, dtype=float)
    keep = np.concatenate([[True], np.hypot(*np.diff(points, axis=0).T) > 1e-6])
    points = points[keep]
    if len(points) < 2:
        # stationary plan: continue straight ahead
        c, s = math.cos(pose.heading), math.sin(pose.heading)
        points = np.array([[pose.x, pose.y], [pose.x + c, pose.y + s]])
    path = Polyline(points)
    start = project_to_path(path, (pose.x, pose.y)).s
    stations = start + PATH_SPACING * np.arange(1, PATH_POINTS + 1)
    return to_local_frame(pose, path.point_at(stations))


def encode_features(
    history: Sequence[EgoState], planner_path: Union[Trajectory, Polyline]
) -> FeatureVector:
    """Encode the last 2 s of ego states and the planner path

    :param history: Ego states ordered by timestamp, the last one is the
        current state
    :param planner_path: Path ahead, extrapolated along its end segment when
        shorter than 40 m
    :raises ColdStartError: When the history covers less than 2 s
    """
    if not history:
        raise ColdStartError("cold start: empty history")
    current = history[-1]
    return FeatureVector(
        _history_block(history), _path_block(current.pose, planner_path)
    )


def extend_planner_path(
    trajectory: Trajectory,
    centerline: Polyline,
    min_length: float = PATH_POINTS * PATH_SPACING + 5.0,
) -> Polyline:
    """Geometric path of ``trajectory`` continued along ``centerline`` at its
    final lateral offset until it is at least ``min_length`` long"""
    points = trajectory.xy
    keep = np.concatenate([[True], np.hypot(*np.diff(points, axis=0).T) > 1e-6])
    points = points[keep]
    stations, offsets, _ = project_points(centerline, points[-1:])
    travelled = float(np.sum(np.hypot(*np.diff(points, axis=0).T)))
    missing = max(min_length - travelled, 0.0)
    extra = stations[0] + PATH_SPACING * np.arange(
        1, int(math.ceil(missing / PATH_SPACING)) + 2
    )
    tail = centerline.offset_points(extra, np.full(len(extra), offsets[0]))
    return Polyline(np.concatenate([points, tail]))


def decode_waypoints(ego: EgoState, waypoints, dt: float = 0.1) -> Trajectory:
    """World-frame trajectory of ego-frame waypoints, led by the current pose

    Headings, speeds and curvature are finite differences of the positions.
    """
    waypoints = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    xy = np.concatenate([[ego.pose.position], to_world_frame(ego.pose, waypoints)])
    return trajectory_from_positions(
        xy,
        dt,
        initial_heading=ego.pose.heading,
        initial_speed=max(ego.vel_lon, 0.0),
        start_time=ego.timestamp,
    )
