"""Scenario files

A scenario is a JSON document (version 1)::

    {
      "version": 1,
      "name": "s_curve",
      "lanes": [{"id", "centerline", "left_bound", "right_bound",
                 "speed_limit", "successors"}],
      "ego_start": {"x", "y", "heading", "speed"},
      "start_lane": "a",                      # optional
      "goal_lane": "b",
      "static_obstacles": [[[x, y], ...]],
      "dynamic_agents": [{"id", "polygon", "waypoints": [{"t", "x", "y",
                          "heading"}]}],
      "duration_s": 20.0,
      "seed": 0
    }

Every schema violation raises :class:`~hybridplan.errors.ScenarioError`
carrying the JSON pointer of the offending field.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property
from logging import getLogger as get_logger
from numbers import Real
from typing import List, Optional, Sequence, Tuple

import numpy as np
from megfile import smart_glob, smart_open

import hybridplan.utils.compat_json as json
from hybridplan.errors import (
    HybridPlanError,
    ScenarioError,
    ValidationError,
)
from hybridplan.geometry import (
    EgoState,
    Footprint,
    Polyline,
    Pose2D,
    as_convex_polygon,
    project_points,
    transform_polygon,
)
from hybridplan.lanes import (
    DrivableCorridor,
    Lane,
    LaneGraph,
    Route,
    corridor_along,
    route_centerline,
    route_speed_limit,
    shortest_route,
)
from hybridplan.sampler import AgentObservation

__all__ = [
    "SCENARIO_VERSION",
    "DynamicAgent",
    "Scenario",
    "load_scenario",
    "save_scenario",
    "scenario_from_dict",
    "scenario_paths",
    "scenario_to_dict",
]

logger = get_logger(__name__)

SCENARIO_VERSION = 1


@dataclass(frozen=True)
class DynamicAgent:
    """Agent following a timed waypoint schedule

    The pose is interpolated between waypoints and held before the first and
    after the last one.

    :param polygon: Convex outline in the agent frame
    :param waypoints: Array (m, 4) of ``t, x, y, heading`` with increasing t
    """

    id: str
    polygon: np.ndarray
    waypoints: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "polygon", as_convex_polygon(self.polygon))
        waypoints = np.array(self.waypoints, dtype=float).reshape(-1, 4)
        if len(waypoints) == 0:
            raise ValidationError("agent %r has no waypoints" % self.id)
        if np.any(np.diff(waypoints[:, 0]) <= 0.0):
            raise ValidationError("agent %r waypoint times not increasing" % self.id)
        waypoints[:, 3] = np.unwrap(waypoints[:, 3])
        waypoints.setflags(write=False)
        object.__setattr__(self, "waypoints", waypoints)

    def pose_at(self, t: float) -> Pose2D:
        times = self.waypoints[:, 0]
        return Pose2D(
            *(np.interp(t, times, self.waypoints[:, c]) for c in range(1, 4))
        )

    def velocity_at(self, t: float) -> Tuple[float, float]:
        times = self.waypoints[:, 0]
        if len(times) < 2 or t < times[0] or t >= times[-1]:
            return 0.0, 0.0
        k = int(np.searchsorted(times, t, side="right")) - 1
        span = times[k + 1] - times[k]
        delta = self.waypoints[k + 1, 1:3] - self.waypoints[k, 1:3]
        return float(delta[0] / span), float(delta[1] / span)

    def polygon_at(self, t: float) -> np.ndarray:
        pose = self.pose_at(t)
        return transform_polygon(self.polygon, pose.x, pose.y, pose.heading)

    def observation_at(self, t: float) -> AgentObservation:
        pose = self.pose_at(t)
        return AgentObservation(
            id=self.id,
            polygon=transform_polygon(self.polygon, pose.x, pose.y, pose.heading),
            position=(pose.x, pose.y),
            velocity=self.velocity_at(t),
        )


@dataclass(frozen=True)
class Scenario:
    lane_graph: LaneGraph
    ego_start: EgoState
    goal_lane: str
    start_lane: Optional[str] = None
    static_obstacles: Tuple[np.ndarray, ...] = ()
    dynamic_agents: Tuple[DynamicAgent, ...] = ()
    duration_s: float = 20.0
    seed: int = 0
    name: str = "scenario"
    lanes: Tuple[Lane, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.start_lane is None:
            position = (self.ego_start.pose.x, self.ego_start.pose.y)
            object.__setattr__(
                self, "start_lane", self.lane_graph.nearest_lane(position)
            )
        object.__setattr__(
            self,
            "static_obstacles",
            tuple(as_convex_polygon(p) for p in self.static_obstacles),
        )
        object.__setattr__(self, "dynamic_agents", tuple(self.dynamic_agents))
        if not self.lanes:
            object.__setattr__(self, "lanes", tuple(self.lane_graph.lanes.values()))

    @cached_property
    def route(self) -> Route:
        return shortest_route(self.lane_graph, self.start_lane, self.goal_lane)

    @cached_property
    def centerline(self) -> Polyline:
        return route_centerline(self.lane_graph, self.route)

    def corridor(self, footprint: Footprint) -> DrivableCorridor:
        return corridor_along(
            self.lane_graph, self.route, footprint, centerline=self.centerline
        )

    def speed_limit_at(self, s: float) -> float:
        return route_speed_limit(self.lane_graph, self.route, s)

    def agents_at(self, t: float) -> List[AgentObservation]:
        return [agent.observation_at(t) for agent in self.dynamic_agents]

    def validate(self, footprint: Footprint):
        """Check that the goal is reachable and the ego starts inside the
        drivable area

        :raises ScenarioError: Naming the offending field
        """
        try:
            corridor = self.corridor(footprint)
        except ValidationError as error:
            raise ScenarioError("/goal_lane", str(error)) from None
        pose = self.ego_start.pose
        s, d, _ = project_points(corridor.reference, [(pose.x, pose.y)])
        if not corridor.contains(s[0], d[0]):
            raise ScenarioError(
                "/ego_start",
                "outside the drivable area, offset %.2f m at station %.2f m"
                % (d[0], s[0]),
            )


def _get(data, key: str, pointer: str, default=...):
    if not isinstance(data, dict):
        raise ScenarioError(pointer, "expect an object, got %s" % type(data).__name__)
    if key not in data:
        if default is ...:
            raise ScenarioError("%s/%s" % (pointer, key), "missing field")
        return default
    return data[key]


def _number(value, pointer: str, *, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, Real):
        raise ScenarioError(pointer, "expect a number, got %r" % (value,))
    value = float(value)
    if not math.isfinite(value) or (positive and value <= 0.0):
        raise ScenarioError(pointer, "invalid value %r" % value)
    return value


def _string(value, pointer: str) -> str:
    if not isinstance(value, str) or not value:
        raise ScenarioError(pointer, "expect a non-empty string, got %r" % (value,))
    return value


def _list(value, pointer: str) -> list:
    if not isinstance(value, list):
        raise ScenarioError(pointer, "expect a list, got %s" % type(value).__name__)
    return value


def _points(value, pointer: str, minimum: int) -> np.ndarray:
    rows = _list(value, pointer)
    points = []
    for index, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != 2:
            raise ScenarioError("%s/%d" % (pointer, index), "expect [x, y]")
        points.append(
            [_number(v, "%s/%d/%d" % (pointer, index, i)) for i, v in enumerate(row)]
        )
    if len(points) < minimum:
        raise ScenarioError(
            pointer, "expect at least %d points, got %d" % (minimum, len(points))
        )
    return np.array(points)


def _polyline(value, pointer: str) -> Polyline:
    try:
        return Polyline(_points(value, pointer, 2))
    except ScenarioError:
        raise
    except ValidationError as error:
        raise ScenarioError(pointer, str(error)) from None


def _convex(value, pointer: str) -> np.ndarray:
    try:
        return as_convex_polygon(_points(value, pointer, 3))
    except ScenarioError:
        raise
    except ValidationError as error:
        raise ScenarioError(pointer, str(error)) from None


def _lanes(value) -> List[Lane]:
    lanes = []
    seen = set()
    for index, item in enumerate(_list(value, "/lanes")):
        pointer = "/lanes/%d" % index
        lane_id = _string(_get(item, "id", pointer), pointer + "/id")
        if lane_id in seen:
            raise ScenarioError(pointer + "/id", "duplicate lane id %r" % lane_id)
        seen.add(lane_id)
        successors = _list(_get(item, "successors", pointer, []), pointer)
        lanes.append(
            Lane(
                id=lane_id,
                centerline=_polyline(
                    _get(item, "centerline", pointer), pointer + "/centerline"
                ),
                left_bound=_polyline(
                    _get(item, "left_bound", pointer), pointer + "/left_bound"
                ),
                right_bound=_polyline(
                    _get(item, "right_bound", pointer), pointer + "/right_bound"
                ),
                speed_limit=_number(
                    _get(item, "speed_limit", pointer),
                    pointer + "/speed_limit",
                    positive=True,
                ),
                successors=tuple(
                    _string(s, "%s/successors/%d" % (pointer, i))
                    for i, s in enumerate(successors)
                ),
            )
        )
    if not lanes:
        raise ScenarioError("/lanes", "no lanes")
    for index, lane in enumerate(lanes):
        for position, successor in enumerate(lane.successors):
            pointer = "/lanes/%d/successors/%d" % (index, position)
            if successor not in seen:
                raise ScenarioError(pointer, "unknown lane id %r" % successor)
            if successor == lane.id:
                raise ScenarioError(pointer, "lane lists itself as successor")
    return lanes


def _agent(item, pointer: str) -> DynamicAgent:
    agent_id = _string(_get(item, "id", pointer), pointer + "/id")
    polygon = _convex(_get(item, "polygon", pointer), pointer + "/polygon")
    rows = []
    for index, waypoint in enumerate(
        _list(_get(item, "waypoints", pointer), pointer + "/waypoints")
    ):
        at = "%s/waypoints/%d" % (pointer, index)
        row = [_number(_get(waypoint, key, at), "%s/%s" % (at, key)) for key in "txy"]
        row.append(_number(_get(waypoint, "heading", at, 0.0), at + "/heading"))
        rows.append(row)
    if not rows:
        raise ScenarioError(pointer + "/waypoints", "no waypoints")
    if any(b[0] <= a[0] for a, b in zip(rows, rows[1:])):
        raise ScenarioError(pointer + "/waypoints", "times not increasing")
    return DynamicAgent(agent_id, polygon, np.array(rows))


def scenario_from_dict(
    data: dict, *, footprint: Optional[Footprint] = None
) -> Scenario:
    """Build and validate a scenario from its JSON document"""
    version = _get(data, "version", "", SCENARIO_VERSION)
    if version != SCENARIO_VERSION:
        raise ScenarioError("/version", "unsupported version %r" % (version,))
    lanes = _lanes(_get(data, "lanes", ""))
    graph = LaneGraph(lanes)

    start = _get(data, "ego_start", "")
    pose = Pose2D(
        _number(_get(start, "x", "/ego_start"), "/ego_start/x"),
        _number(_get(start, "y", "/ego_start"), "/ego_start/y"),
        _number(_get(start, "heading", "/ego_start", 0.0), "/ego_start/heading"),
    )
    speed = _number(_get(start, "speed", "/ego_start", 0.0), "/ego_start/speed")
    if speed < 0.0:
        raise ScenarioError("/ego_start/speed", "negative speed %r" % speed)

    start_lane = _get(data, "start_lane", "", None)
    if start_lane is not None and _string(start_lane, "/start_lane") not in graph:
        raise ScenarioError("/start_lane", "unknown lane id %r" % start_lane)
    goal_lane = _string(_get(data, "goal_lane", ""), "/goal_lane")
    if goal_lane not in graph:
        raise ScenarioError("/goal_lane", "unknown lane id %r" % goal_lane)

    obstacles = tuple(
        _convex(item, "/static_obstacles/%d" % index)
        for index, item in enumerate(
            _list(_get(data, "static_obstacles", "", []), "/static_obstacles")
        )
    )
    agents = tuple(
        _agent(item, "/dynamic_agents/%d" % index)
        for index, item in enumerate(
            _list(_get(data, "dynamic_agents", "", []), "/dynamic_agents")
        )
    )
    seed = _get(data, "seed", "", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ScenarioError("/seed", "expect a non-negative integer, got %r" % (seed,))
    name = _get(data, "name", "", "scenario")
    scenario = Scenario(
        lane_graph=graph,
        ego_start=EgoState(pose, vel_lon=speed),
        goal_lane=goal_lane,
        start_lane=start_lane,
        static_obstacles=obstacles,
        dynamic_agents=agents,
        duration_s=_number(_get(data, "duration_s", ""), "/duration_s", positive=True),
        seed=seed,
        name=_string(name, "/name"),
        lanes=tuple(lanes),
    )
    scenario.validate(footprint or Footprint())
    return scenario


def load_scenario(path: str, *, footprint: Optional[Footprint] = None) -> Scenario:
    """Read and validate a scenario file

    :raises ScenarioError: On undecodable JSON or any schema violation
    """
    with smart_open(path, "rb") as fp:
        content = fp.read()
    try:
        data = json.loads(content)
    except json.JSONDecodeError as error:
        raise ScenarioError("", "invalid json in %r: %s" % (path, error)) from None
    try:
        scenario = scenario_from_dict(data, footprint=footprint)
    except ScenarioError:
        raise
    except HybridPlanError as error:
        raise ScenarioError("", str(error)) from None
    logger.info(
        "scenario %r loaded: %d lanes, route %s",
        scenario.name,
        len(scenario.lane_graph),
        "->".join(scenario.route.lane_ids),
    )
    return scenario


def _agent_to_dict(agent: DynamicAgent) -> dict:
    return {
        "id": agent.id,
        "polygon": agent.polygon,
        "waypoints": [
            {"t": t, "x": x, "y": y, "heading": heading}
            for t, x, y, heading in agent.waypoints
        ],
    }


def scenario_to_dict(scenario: Scenario) -> dict:
    pose = scenario.ego_start.pose
    return {
        "version": SCENARIO_VERSION,
        "name": scenario.name,
        "lanes": [
            {
                "id": lane.id,
                "centerline": lane.centerline.vertices,
                "left_bound": lane.left_bound.vertices,
                "right_bound": lane.right_bound.vertices,
                "speed_limit": lane.speed_limit,
                "successors": list(lane.successors),
            }
            for lane in scenario.lanes
        ],
        "ego_start": {
            "x": pose.x,
            "y": pose.y,
            "heading": pose.heading,
            "speed": scenario.ego_start.vel_lon,
        },
        "start_lane": scenario.start_lane,
        "goal_lane": scenario.goal_lane,
        "static_obstacles": list(scenario.static_obstacles),
        "dynamic_agents": [_agent_to_dict(a) for a in scenario.dynamic_agents],
        "duration_s": scenario.duration_s,
        "seed": scenario.seed,
    }


def save_scenario(scenario: Scenario, path: str):
    with smart_open(path, "wb") as fp:
        fp.write(json.dumps(scenario_to_dict(scenario), indent=True))


def scenario_paths(directory: str) -> Sequence[str]:
    """Scenario files of a directory in name order"""
    return sorted(smart_glob(directory.rstrip("/") + "/*.json"))
