import math
from functools import singledispatch
from typing import Tuple

import numpy as np

from hybridplan.errors import (
    DegeneratePathError,
    FrenetRangeError,
    InvalidParameterError,
)
from hybridplan.geometry.pose import FrenetCoord, Pose2D, normalize_angle

__all__ = [
    "Polyline",
    "circumscribed_curvature",
    "curvature_profile",
    "frenet_to_cartesian",
    "project_points",
    "project_to_path",
    "resample_uniform",
]

STATION_EPS = 1e-9


class Polyline:
    """Piecewise linear path with cumulative arc length per vertex

    :param vertices: Array-like of shape (n, 2), n >= 2, without consecutive
        duplicates
    """

    def __init__(self, vertices):
        vertices = np.array(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2 or len(vertices) < 2:
            raise DegeneratePathError(
                "degenerate path: expect (n >= 2, 2) vertices, got %r"
                % (vertices.shape,)
            )
        if not np.all(np.isfinite(vertices)):
            raise DegeneratePathError("degenerate path: non-finite vertex")
        seg = np.diff(vertices, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths <= 0.0):
            index = int(np.argmin(lengths))
            raise DegeneratePathError(
                "degenerate path: duplicate vertices at index %d" % (index + 1)
            )
        vertices.setflags(write=False)
        stations = np.concatenate([[0.0], np.cumsum(lengths)])
        stations.setflags(write=False)
        self._vertices = vertices
        self._stations = stations
        self._seg = seg
        self._seg_lengths = lengths
        self._seg_headings = np.arctan2(seg[:, 1], seg[:, 0])

    def __len__(self) -> int:
        return len(self._vertices)

    def __repr__(self):
        return "Polyline(%d vertices, length=%.3f)" % (len(self), self.length)

    def __eq__(self, other):
        if not isinstance(other, Polyline):
            return NotImplemented
        return np.array_equal(self._vertices, other._vertices)

    @property
    def vertices(self) -> np.ndarray:
        return self._vertices

    @property
    def stations(self) -> np.ndarray:
        return self._stations

    @property
    def length(self) -> float:
        return float(self._stations[-1])

    @property
    def segment_headings(self) -> np.ndarray:
        return self._seg_headings

    def segment_index(self, s):
        """Index of the segment carrying station ``s`` (vectorized)"""
        index = np.searchsorted(self._stations, s, side="right") - 1
        return np.clip(index, 0, len(self._seg) - 1)

    def point_at(self, s):
        """Position at station ``s``; stations beyond the ends extrapolate the
        end segments linearly"""
        s = np.asarray(s, dtype=float)
        index = self.segment_index(s)
        ratio = (s - self._stations[index]) / self._seg_lengths[index]
        return self._vertices[index] + ratio[..., None] * self._seg[index]

    def heading_at(self, s):
        return self._seg_headings[self.segment_index(np.asarray(s, dtype=float))]

    @property
    def vertex_headings(self) -> np.ndarray:
        """Tangent per vertex, the mean of the adjoining segment headings,
        unwrapped"""
        headings = np.unwrap(self._seg_headings)
        return np.concatenate(
            [[headings[0]], 0.5 * (headings[:-1] + headings[1:]), [headings[-1]]]
        )

    def smooth_heading_at(self, s):
        """Tangent interpolated between vertex tangents, not normalized"""
        return np.interp(s, self._stations, self.vertex_headings)

    def offset_points(self, s, d) -> np.ndarray:
        """Points at stations ``s`` shifted by ``d`` along the left normal of
        the interpolated tangent"""
        s = np.asarray(s, dtype=float)
        heading = self.smooth_heading_at(s)
        base = self.point_at(s)
        d = np.asarray(d, dtype=float)
        normal = np.stack([-np.sin(heading), np.cos(heading)], axis=-1)
        return base + d[..., None] * normal

    def to_list(self):
        return self._vertices.tolist()


def project_points(
    path: Polyline, points
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest-point projection of many points

    :param points: Array-like of shape (m, 2)
    :returns: stations, signed lateral offsets (left positive) and the
        segment index of every point
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    start = path.vertices[:-1]
    seg = path._seg
    seg_len2 = path._seg_lengths**2
    rel = points[:, None, :] - start[None, :, :]
    ratio = np.clip(np.einsum("msd,sd->ms", rel, seg) / seg_len2, 0.0, 1.0)
    foot = start[None] + ratio[..., None] * seg[None]
    delta = points[:, None, :] - foot
    dist2 = np.einsum("msd,msd->ms", delta, delta)
    index = np.argmin(dist2, axis=1)
    rows = np.arange(len(points))
    best_ratio = ratio[rows, index]
    stations = path.stations[index] + best_ratio * path._seg_lengths[index]
    near = delta[rows, index]
    cross = seg[index, 0] * near[:, 1] - seg[index, 1] * near[:, 0]
    offsets = np.sign(cross) * np.sqrt(dist2[rows, index])
    return stations, offsets, index


def project_to_path(path: Polyline, point, heading: float = 0.0) -> FrenetCoord:
    """Project a point onto a path

    Ties between equally near segments resolve to the first one along the path.
    """
    if not isinstance(path, Polyline):
        path = Polyline(path)
    stations, offsets, index = project_points(path, [point])
    tangent = path.segment_headings[index[0]]
    return FrenetCoord(
        s=float(stations[0]),
        d=float(offsets[0]),
        heading_err=normalize_angle(heading - tangent),
    )


def frenet_to_cartesian(path: Polyline, fr: FrenetCoord) -> Pose2D:
    if fr.s < -STATION_EPS or fr.s > path.length + STATION_EPS:
        raise FrenetRangeError(
            "station out of range: %r, length: %r" % (fr.s, path.length)
        )
    s = min(max(fr.s, 0.0), path.length)
    tangent = float(path.heading_at(s))
    base = path.point_at(s)
    x = base[0] - math.sin(tangent) * fr.d
    y = base[1] + math.cos(tangent) * fr.d
    return Pose2D(x, y, tangent + fr.heading_err)


def circumscribed_curvature(points) -> np.ndarray:
    """Signed curvature of the circle through every vertex triple

    Zero-length neighbours give zero curvature. Endpoints copy their
    neighbour. Left turns are positive.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 3:
        return np.zeros(len(points))
    ab = points[1:-1] - points[:-2]
    bc = points[2:] - points[1:-1]
    ca = points[2:] - points[:-2]
    cross = ab[:, 0] * bc[:, 1] - ab[:, 1] * bc[:, 0]
    denom = np.hypot(*ab.T) * np.hypot(*bc.T) * np.hypot(*ca.T)
    inner = np.divide(
        2.0 * cross, denom, out=np.zeros_like(cross), where=denom > 1e-12
    )
    return np.concatenate([[inner[0]], inner, [inner[-1]]])


def curvature_profile(path: Polyline):
    """Circumscribed-circle curvature per vertex, 1/m"""
    if not isinstance(path, Polyline):
        path = Polyline(path)
    if len(path) < 3:
        raise InvalidParameterError(
            "curvature needs at least 3 vertices, got %d" % len(path)
        )
    return circumscribed_curvature(path.vertices)


def uniform_stations(extent: float, step: float) -> np.ndarray:
    if not step > 0.0:
        raise InvalidParameterError("step must be positive: %r" % step)
    if step > extent + STATION_EPS:
        raise InvalidParameterError(
            "step larger than total extent: %r > %r" % (step, extent)
        )
    count = int(math.floor(extent / step + STATION_EPS))
    stations = step * np.arange(count + 1)
    if extent - stations[-1] > STATION_EPS * max(1.0, extent):
        stations = np.append(stations, extent)
    else:
        stations[-1] = extent
    return stations


@singledispatch
def resample_uniform(obj, step: float):
    """Resample a :class:`Polyline` by arc length or a
    :class:`~hybridplan.geometry.trajectory.Trajectory` by time"""
    raise TypeError("cannot resample %s" % type(obj).__name__)


@resample_uniform.register
def _(path: Polyline, step: float) -> Polyline:
    stations = uniform_stations(path.length, step)
    x = np.interp(stations, path.stations, path.vertices[:, 0])
    y = np.interp(stations, path.stations, path.vertices[:, 1])
    return Polyline(np.stack([x, y], axis=1))
