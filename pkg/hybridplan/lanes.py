"""Lane network, shortest routes and the drivable corridor along a route

The corridor is expressed in lateral offsets of the *rear axle* relative to
the route centerline, left positive, already shrunk by half the vehicle
width. A rear-axle offset inside the limits keeps the footprint inside the
lane bounds on straight segments.
"""

from dataclasses import dataclass, field, replace
from logging import getLogger as get_logger
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from hybridplan.errors import (
    DiscontinuousRouteError,
    ImpassableCorridorError,
    LaneGraphError,
    NoRouteError,
)
from hybridplan.geometry import (
    Footprint,
    Polyline,
    project_points,
    resample_uniform,
)

__all__ = [
    "DrivableCorridor",
    "Lane",
    "LaneGraph",
    "Route",
    "corridor_along",
    "route_centerline",
    "route_speed_limit",
    "shortest_route",
]

logger = get_logger(__name__)

STATION_SPACING = 0.5
JUNCTION_MERGE_TOLERANCE = 1e-6
JUNCTION_GAP_LIMIT = 0.5
PATH_COST_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Lane:
    id: str
    centerline: Polyline
    left_bound: Polyline
    right_bound: Polyline
    speed_limit: float
    successors: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "successors", tuple(self.successors))
        if not self.speed_limit > 0.0:
            raise LaneGraphError(
                "lane %r has non-positive speed limit: %r"
                % (self.id, self.speed_limit)
            )

    @property
    def length(self) -> float:
        return self.centerline.length


class LaneGraph:
    """Read-only lane network

    Edges point from a lane to each successor and weigh the successor's
    centerline length.
    """

    def __init__(self, lanes: Iterable[Lane]):
        table: Dict[str, Lane] = {}
        for lane in lanes:
            if lane.id in table:
                raise LaneGraphError("duplicate lane id: %r" % lane.id)
            table[lane.id] = lane
        graph = nx.DiGraph()
        graph.add_nodes_from(table)
        for lane in table.values():
            for successor in lane.successors:
                if successor == lane.id:
                    raise LaneGraphError("lane %r lists itself as successor" % lane.id)
                if successor not in table:
                    raise LaneGraphError(
                        "lane %r has unknown successor: %r" % (lane.id, successor)
                    )
                graph.add_edge(lane.id, successor, weight=table[successor].length)
        self._lanes = MappingProxyType(table)
        self._graph = nx.freeze(graph)

    @property
    def lanes(self) -> Mapping[str, Lane]:
        return self._lanes

    @property
    def graph(self) -> nx.DiGraph:
        return self._graph

    def __getitem__(self, lane_id: str) -> Lane:
        try:
            return self._lanes[lane_id]
        except KeyError:
            raise LaneGraphError("unknown lane id: %r" % lane_id)

    def __contains__(self, lane_id: str) -> bool:
        return lane_id in self._lanes

    def __len__(self) -> int:
        return len(self._lanes)

    def nearest_lane(self, point) -> str:
        """Lane whose centerline passes closest to ``point``; lanes whose
        interior the point projects onto win over end-point matches"""
        best_key, best_id = None, None
        for lane_id in sorted(self._lanes):
            centerline = self._lanes[lane_id].centerline
            stations, offsets, _ = project_points(centerline, [point])
            interior = 0.0 < stations[0] < centerline.length
            key = (not interior, abs(float(offsets[0])))
            if best_key is None or key < best_key:
                best_key, best_id = key, lane_id
        return best_id


@dataclass(frozen=True)
class Route:
    lane_ids: Tuple[str, ...]
    total_length: float
    lane_lengths: Tuple[float, ...] = field(default=(), compare=False)

    def lane_at(self, s: float) -> str:
        """Lane id covering route station ``s``; clamps past the ends"""
        start = 0.0
        for lane_id, length in zip(self.lane_ids, self.lane_lengths):
            start += length
            if s < start:
                return lane_id
        return self.lane_ids[-1]


def shortest_route(graph: LaneGraph, start_lane: str, goal_lane: str) -> Route:
    """Dijkstra over successor edges

    Among equally short routes the lexicographically smallest lane-id
    sequence is returned.
    """
    for lane_id in (start_lane, goal_lane):
        if lane_id not in graph:
            raise LaneGraphError("unknown lane id: %r" % lane_id)
    from_start = nx.single_source_dijkstra_path_length(graph.graph, start_lane)
    if goal_lane not in from_start:
        raise NoRouteError("no route: %r -> %r" % (start_lane, goal_lane))
    to_goal = nx.single_source_dijkstra_path_length(
        graph.graph.reverse(copy=False), goal_lane
    )
    best = from_start[goal_lane]
    lane_ids = [start_lane]
    current = start_lane
    while current != goal_lane:
        candidates = [
            successor
            for successor in graph.graph.successors(current)
            if successor in to_goal
            and abs(
                from_start[current]
                + graph.graph[current][successor]["weight"]
                + to_goal[successor]
                - best
            )
            <= PATH_COST_TOLERANCE * max(1.0, best)
        ]
        current = min(candidates)
        lane_ids.append(current)
    lengths = tuple(graph[lane_id].length for lane_id in lane_ids)
    route = Route(tuple(lane_ids), float(sum(lengths)), lengths)
    logger.debug("route %s, length %.2f m", "->".join(lane_ids), route.total_length)
    return route


def _stitch(polylines: Sequence[Polyline], route: Route, what: str) -> np.ndarray:
    chunks: List[np.ndarray] = [polylines[0].vertices]
    for index in range(1, len(polylines)):
        tail = chunks[-1][-1]
        head = polylines[index].vertices
        gap = float(np.hypot(*(head[0] - tail)))
        if gap > JUNCTION_GAP_LIMIT:
            raise DiscontinuousRouteError(
                "discontinuous route: %s gap %.3f m between %r and %r"
                % (what, gap, route.lane_ids[index - 1], route.lane_ids[index])
            )
        if gap <= JUNCTION_MERGE_TOLERANCE:
            head = head[1:]
        chunks.append(head)
    return np.concatenate(chunks)


def route_centerline(graph: LaneGraph, route: Route) -> Polyline:
    """Concatenated route centerline resampled every 0.5 m"""
    centerlines = [graph[lane_id].centerline for lane_id in route.lane_ids]
    stitched = Polyline(_stitch(centerlines, route, "centerline"))
    return resample_uniform(stitched, min(STATION_SPACING, stitched.length))


@dataclass(frozen=True)
class DrivableCorridor:
    """Admissible rear-axle lateral offsets per reference station"""

    reference: Polyline
    stations: np.ndarray
    left_limit: np.ndarray
    right_limit: np.ndarray

    def __post_init__(self):
        for name in ("stations", "left_limit", "right_limit"):
            column = np.array(getattr(self, name), dtype=float)
            column.setflags(write=False)
            object.__setattr__(self, name, column)
        if np.any(self.left_limit < self.right_limit):
            raise ImpassableCorridorError("left limit below right limit")

    def __len__(self) -> int:
        return len(self.stations)

    def limits_at(self, s) -> Tuple[np.ndarray, np.ndarray]:
        """Linearly interpolated limits, clamped to the end stations"""
        return (
            np.interp(s, self.stations, self.left_limit),
            np.interp(s, self.stations, self.right_limit),
        )

    def contains(self, s, d, margin: float = 0.0):
        left, right = self.limits_at(s)
        inside = (np.asarray(d) <= left - margin) & (np.asarray(d) >= right + margin)
        if np.ndim(inside) == 0:
            return bool(inside)
        return inside

    def margin_at(self, s, d):
        """Distance to the nearer limit, negative outside"""
        left, right = self.limits_at(s)
        d = np.asarray(d, dtype=float)
        return np.minimum(left - d, d - right)

    def carve(self, obstacles: Iterable, footprint: Footprint) -> "DrivableCorridor":
        """Narrow the corridor around static obstacles

        Each obstacle is passed on the side with more room. Stations where
        neither side leaves room stay as they are.
        """
        left = self.left_limit.copy()
        right = self.right_limit.copy()
        half = 0.5 * footprint.width
        for obstacle in obstacles:
            s, d, _ = project_points(self.reference, obstacle)
            lo = s.min() - footprint.front_from_axle
            hi = s.max() + footprint.rear_axle_to_rear
            mask = (self.stations >= lo) & (self.stations <= hi)
            # offsets of the rear axle that would touch the obstacle
            touch_lo = d.min() - half
            touch_hi = d.max() + half
            mask &= (right < touch_hi) & (left > touch_lo)
            if not mask.any():
                continue
            room_left = left[mask] - touch_hi
            room_right = touch_lo - right[mask]
            if room_left.min() >= room_right.min():
                passable = mask.copy()
                passable[mask] = room_left > 0.0
                right[passable] = touch_hi
            else:
                passable = mask.copy()
                passable[mask] = room_right > 0.0
                left[passable] = touch_lo
            if not passable[mask].all():
                logger.warning(
                    "obstacle blocks corridor at stations %.1f..%.1f m", lo, hi
                )
        return replace(self, left_limit=left, right_limit=right)


def _ray_distances(
    origins: np.ndarray, directions: np.ndarray, bound: np.ndarray
) -> np.ndarray:
    """Distance along each ray to its first crossing with ``bound``, NaN
    when the ray misses"""
    start = bound[:-1]
    edge = bound[1:] - start
    rel = start[None, :, :] - origins[:, None, :]
    dx = directions[:, None, 0]
    dy = directions[:, None, 1]
    denom = dx * edge[None, :, 1] - dy * edge[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[..., 0] * edge[None, :, 1] - rel[..., 1] * edge[None, :, 0]) / denom
        u = (rel[..., 0] * dy - rel[..., 1] * dx) / denom
    hit = (np.abs(denom) > 1e-12) & (u >= -1e-9) & (u <= 1.0 + 1e-9) & (t >= 0.0)
    t = np.where(hit, t, np.inf)
    nearest = t.min(axis=1)
    return np.where(np.isfinite(nearest), nearest, np.nan)


def _vertex_normals(path: Polyline) -> np.ndarray:
    vertex = path.vertex_headings
    return np.stack([-np.sin(vertex), np.cos(vertex)], axis=1)


def _lateral_to_bound(
    path: Polyline, normals: np.ndarray, bound: Polyline, sign: float
) -> np.ndarray:
    origins = path.vertices
    distance = _ray_distances(origins, sign * normals, bound.vertices)
    missing = np.isnan(distance)
    if missing.any():
        # beyond the stitched bound ends: nearest-point fallback
        stations, _, _ = project_points(bound, origins[missing])
        nearest = bound.point_at(stations)
        distance[missing] = np.einsum(
            "md,md->m", nearest - origins[missing], sign * normals[missing]
        )
    return sign * distance


def corridor_along(
    graph: LaneGraph,
    route: Route,
    ego_footprint: Footprint,
    *,
    centerline: Optional[Polyline] = None,
) -> DrivableCorridor:
    """Lateral limits every 0.5 m along the route centerline

    :param centerline: Reuse an already computed :func:`route_centerline`
    :raises ImpassableCorridorError: When the limits cross anywhere
    """
    if centerline is None:
        centerline = route_centerline(graph, route)
    lanes = [graph[lane_id] for lane_id in route.lane_ids]
    left_bound = Polyline(_stitch([lane.left_bound for lane in lanes], route, "left"))
    right_bound = Polyline(
        _stitch([lane.right_bound for lane in lanes], route, "right")
    )
    normals = _vertex_normals(centerline)
    half = 0.5 * ego_footprint.width
    left = _lateral_to_bound(centerline, normals, left_bound, 1.0) - half
    right = _lateral_to_bound(centerline, normals, right_bound, -1.0) + half
    width = left - right
    if np.any(width <= 0.0):
        index = int(np.argmin(width))
        raise ImpassableCorridorError(
            "impassable corridor: width %.3f m at station %.2f m"
            % (width[index], centerline.stations[index])
        )
    return DrivableCorridor(centerline, centerline.stations.copy(), left, right)


def route_speed_limit(graph: LaneGraph, route: Route, s: float) -> float:
    return graph[route.lane_at(s)].speed_limit
