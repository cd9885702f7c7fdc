"""Small worlds shared by the tests"""

import math
from typing import Optional, Sequence

import numpy as np

from hybridplan.geometry import EgoState, Polyline, Pose2D
from hybridplan.lanes import Lane, LaneGraph
from hybridplan.sim import DynamicAgent, Scenario

CAR_BOX = [[-2.25, -0.9], [2.25, -0.9], [2.25, 0.9], [-2.25, 0.9]]


def box(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def lane_from_points(
    lane_id: str,
    points,
    *,
    half_width: float = 2.0,
    speed_limit: float = 8.0,
    successors: Sequence[str] = (),
) -> Lane:
    centerline = Polyline(points)
    heading = centerline.vertex_headings
    normal = np.stack([-np.sin(heading), np.cos(heading)], axis=1)
    return Lane(
        lane_id,
        centerline,
        Polyline(centerline.vertices + half_width * normal),
        Polyline(centerline.vertices - half_width * normal),
        speed_limit,
        tuple(successors),
    )


def straight_points(x0: float, x1: float, y: float = 0.0, step: float = 1.0):
    count = max(1, int(round((x1 - x0) / step)))
    xs = np.linspace(x0, x1, count + 1)
    return np.stack([xs, np.full_like(xs, y)], axis=1)


def arc_points(start, heading: float, radius: float, angle: float, step: float = 1.0):
    """Circle arc from ``start``; positive ``angle`` turns left"""
    count = max(2, int(math.ceil(radius * abs(angle) / step)))
    phi = np.linspace(0.0, abs(angle), count + 1)
    sign = math.copysign(1.0, angle)
    local = np.stack(
        [radius * np.sin(phi), sign * radius * (1.0 - np.cos(phi))], axis=1
    )
    c, s = math.cos(heading), math.sin(heading)
    return np.asarray(start) + local @ np.array([[c, s], [-s, c]])


def chain_graph(pieces, **kwargs) -> LaneGraph:
    """Lanes ``a``, ``b``, ... from consecutive point arrays, each the successor
    of the previous one"""
    ids = [chr(ord("a") + i) for i in range(len(pieces))]
    lanes = [
        lane_from_points(
            lane_id,
            points,
            successors=ids[i + 1 : i + 2],
            **kwargs,
        )
        for i, (lane_id, points) in enumerate(zip(ids, pieces))
    ]
    return LaneGraph(lanes)


def straight_graph(lengths=(40.0, 40.0, 40.0), **kwargs) -> LaneGraph:
    edges = np.concatenate([[0.0], np.cumsum(lengths)])
    return chain_graph(
        [straight_points(lo, hi) for lo, hi in zip(edges[:-1], edges[1:])], **kwargs
    )


def s_curve_graph(**kwargs) -> LaneGraph:
    first = straight_points(0.0, 20.0)
    left = arc_points(first[-1], 0.0, 30.0, math.pi / 4)
    right = arc_points(left[-1], math.pi / 4, 30.0, -math.pi / 4)
    tail = right[-1] + np.outer(np.arange(41.0), [1.0, 0.0])
    return chain_graph([first, left, right, tail], **kwargs)


def lead_agent(
    x0: float,
    speed: float,
    *,
    y: float = 0.0,
    duration: float = 60.0,
    agent_id: str = "lead",
) -> DynamicAgent:
    return DynamicAgent(
        agent_id,
        np.array(CAR_BOX),
        np.array([[0.0, x0, y, 0.0], [duration, x0 + speed * duration, y, 0.0]]),
    )


def make_scenario(
    graph: Optional[LaneGraph] = None,
    *,
    x: float = 2.0,
    y: float = 0.0,
    heading: float = 0.0,
    speed: float = 5.0,
    obstacles=(),
    agents=(),
    duration_s: float = 10.0,
    seed: int = 0,
    name: str = "test",
) -> Scenario:
    graph = graph or straight_graph()
    ids = sorted(graph.lanes)
    return Scenario(
        lane_graph=graph,
        ego_start=EgoState(Pose2D(x, y, heading), vel_lon=speed),
        goal_lane=ids[-1],
        start_lane=ids[0],
        static_obstacles=tuple(np.asarray(o, dtype=float) for o in obstacles),
        dynamic_agents=tuple(agents),
        duration_s=duration_s,
        seed=seed,
        name=name,
    )
