import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from hybridplan.errors import InvalidParameterError, NonConvexObstacleError
from hybridplan.geometry.pose import Pose2D

__all__ = [
    "Footprint",
    "as_convex_polygon",
    "footprint_collides",
    "footprint_polygon",
    "footprint_polygons",
    "footprints_hit_polygon",
    "footprints_hit_track",
    "polygons_intersect",
    "transform_polygon",
]

WINDING_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Footprint:
    """Vehicle rectangle; poses refer to the centre of the rear axle"""

    length: float = 4.0
    width: float = 1.8
    rear_axle_to_rear: float = 0.8
    wheelbase: float = 2.5

    def __post_init__(self):
        for name in ("length", "width", "rear_axle_to_rear", "wheelbase"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise InvalidParameterError(
                    "footprint %s must be positive: %r" % (name, value)
                )
        if self.rear_axle_to_rear >= self.length:
            raise InvalidParameterError(
                "rear_axle_to_rear %r must be shorter than length %r"
                % (self.rear_axle_to_rear, self.length)
            )

    @property
    def front_from_axle(self) -> float:
        return self.length - self.rear_axle_to_rear

    def local_corners(self) -> np.ndarray:
        back = -self.rear_axle_to_rear
        front = self.front_from_axle
        half = 0.5 * self.width
        return np.array(
            [[back, -half], [front, -half], [front, half], [back, half]]
        )


def transform_polygon(polygon, x: float, y: float, heading: float) -> np.ndarray:
    polygon = np.asarray(polygon, dtype=float)
    c, s = math.cos(heading), math.sin(heading)
    rotation = np.array([[c, -s], [s, c]])
    return polygon @ rotation.T + np.array([x, y])


def footprint_polygon(pose: Pose2D, fp: Footprint) -> np.ndarray:
    """Counter-clockwise corners of the footprint rectangle at ``pose``"""
    return transform_polygon(fp.local_corners(), pose.x, pose.y, pose.heading)


def footprint_polygons(x, y, heading, fp: Footprint) -> np.ndarray:
    """Corners for many poses, shape (n, 4, 2)"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    heading = np.asarray(heading, dtype=float)
    corners = fp.local_corners()
    c = np.cos(heading)[:, None]
    s = np.sin(heading)[:, None]
    px = x[:, None] + c * corners[None, :, 0] - s * corners[None, :, 1]
    py = y[:, None] + s * corners[None, :, 0] + c * corners[None, :, 1]
    return np.stack([px, py], axis=-1)


def as_convex_polygon(polygon) -> np.ndarray:
    """Validate a convex polygon with at least 3 vertices

    :raises NonConvexObstacleError: When edge turns change sign or the
        boundary winds around more than once
    """
    polygon = np.asarray(polygon, dtype=float)
    if polygon.ndim != 2 or polygon.shape[1] != 2 or len(polygon) < 3:
        raise NonConvexObstacleError(
            "non-convex obstacle: expect (n >= 3, 2) vertices, got %r"
            % (polygon.shape,)
        )
    edges = np.roll(polygon, -1, axis=0) - polygon
    nxt = np.roll(edges, -1, axis=0)
    turns = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    scale = max(1.0, float(np.max(np.abs(polygon))))
    significant = turns[np.abs(turns) > 1e-12 * scale * scale]
    if len(significant) == 0 or (
        np.any(significant > 0) and np.any(significant < 0)
    ):
        raise NonConvexObstacleError("non-convex obstacle: %r" % polygon.tolist())
    dots = edges[:, 0] * nxt[:, 0] + edges[:, 1] * nxt[:, 1]
    winding = abs(float(np.sum(np.arctan2(turns, dots))))
    if abs(winding - 2.0 * math.pi) > WINDING_TOLERANCE:
        raise NonConvexObstacleError(
            "non-convex obstacle: boundary turns %.2f rad, expect 2 pi: %r"
            % (winding, polygon.tolist())
        )
    return polygon


def _edge_normals(polygons: np.ndarray) -> np.ndarray:
    edges = np.roll(polygons, -1, axis=-2) - polygons
    return np.stack([-edges[..., 1], edges[..., 0]], axis=-1)


def _separated(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Separating-axis test over batches, shapes (..., n, 2) and (..., m, 2)

    Touching shapes are not separated.
    """
    axes = np.concatenate([_edge_normals(a), _edge_normals(b)], axis=-2)
    proj_a = np.einsum("...vd,...ad->...va", a, axes)
    proj_b = np.einsum("...vd,...ad->...va", b, axes)
    gap = np.maximum(
        proj_b.min(axis=-2) - proj_a.max(axis=-2),
        proj_a.min(axis=-2) - proj_b.max(axis=-2),
    )
    return np.any(gap > 0.0, axis=-1)


def polygons_intersect(a, b) -> bool:
    a = as_convex_polygon(a)
    b = as_convex_polygon(b)
    return not bool(_separated(a, b))


def footprint_collides(
    pose: Pose2D, fp: Footprint, obstacles: Iterable[Sequence]
) -> bool:
    rectangle = footprint_polygon(pose, fp)
    for obstacle in obstacles:
        if polygons_intersect(rectangle, obstacle):
            return True
    return False


def footprints_hit_track(rectangles: np.ndarray, track: np.ndarray) -> np.ndarray:
    """Per-step overlap between ego rectangles (n, 4, 2) and an agent track
    (n, k, 2)

    :returns: Boolean array of shape (n,)
    """
    return ~_separated(np.asarray(rectangles), np.asarray(track))


def footprints_hit_polygon(rectangles: np.ndarray, polygon) -> np.ndarray:
    """Per-step overlap between ego rectangles (n, 4, 2) and one static
    polygon"""
    polygon = np.asarray(polygon, dtype=float)
    track = np.broadcast_to(polygon, (len(rectangles),) + polygon.shape)
    return ~_separated(np.asarray(rectangles), track)
