"""Candidate paths from IDM speed policies and lateral offsets

Every candidate follows the route centerline shifted sideways and runs one
IDM speed policy. Candidates are rolled out against forecasted agents,
scored, and the best one is selected. An expected collision of the winner
within the check window replaces it with a maximum-braking manoeuvre.
"""

import math
from dataclasses import dataclass, field
from logging import getLogger as get_logger
from typing import List, Optional, Sequence, Tuple

import numpy as np

from hybridplan.cruise import LeadState
from hybridplan.errors import (
    EmptyCandidatesError,
    InvalidParameterError,
)
from hybridplan.geometry import (
    EgoState,
    Footprint,
    Polyline,
    Trajectory,
    as_convex_polygon,
    footprint_polygons,
    footprints_hit_polygon,
    footprints_hit_track,
    project_points,
    project_to_path,
    trajectory_from_positions,
)
from hybridplan.lanes import DrivableCorridor

__all__ = [
    "AgentObservation",
    "CandidatePath",
    "CandidateScore",
    "Forecast",
    "IdmParams",
    "SamplerConfig",
    "Selection",
    "find_lead",
    "forecast_agents",
    "generate_candidates",
    "idm_acceleration",
    "max_brake_trajectory",
    "score_candidate",
    "score_candidates",
    "select_candidate",
    "select_path",
]

logger = get_logger(__name__)

MIN_TARGET_SPEED = 0.1


@dataclass(frozen=True)
class IdmParams:
    a_max: float = 1.5
    b_comf: float = 2.0
    s0: float = 2.0
    T_headway: float = 1.5
    delta_exp: float = 4.0

    def __post_init__(self):
        for name in ("a_max", "b_comf", "s0", "T_headway", "delta_exp"):
            if not getattr(self, name) > 0.0:
                raise InvalidParameterError(
                    "idm %s must be positive: %r" % (name, getattr(self, name))
                )


@dataclass(frozen=True)
class SamplerConfig:
    speed_fractions: Tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    lateral_offsets_m: Tuple[float, ...] = (1.0, -1.0, 0.0)
    horizon_s: float = 8.0
    dt: float = 0.1
    collision_check_window_s: float = 2.0
    max_brake: float = 5.0
    lateral_transition_m: float = 15.0
    late_collision_factor: float = 0.5
    progress_weight: float = 0.5
    compliance_weight: float = 0.3
    comfort_weight: float = 0.2
    accel_max: float = 4.05
    jerk_max: float = 4.13
    lat_accel_max: float = 4.89
    lead_lateral_tolerance: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "speed_fractions", tuple(self.speed_fractions))
        object.__setattr__(self, "lateral_offsets_m", tuple(self.lateral_offsets_m))
        if not self.speed_fractions or any(
            not 0.0 < f <= 1.0 for f in self.speed_fractions
        ):
            raise InvalidParameterError(
                "speed fractions must lie in (0, 1]: %r" % (self.speed_fractions,)
            )
        if not self.lateral_offsets_m:
            raise InvalidParameterError("no lateral offsets")
        if self.horizon_s <= self.collision_check_window_s:
            raise InvalidParameterError(
                "horizon %r must exceed collision window %r"
                % (self.horizon_s, self.collision_check_window_s)
            )
        if self.dt <= 0.0 or self.max_brake <= 0.0:
            raise InvalidParameterError("dt and max_brake must be positive")

    @property
    def horizon_points(self) -> int:
        return int(round(self.horizon_s / self.dt))


@dataclass(frozen=True)
class CandidateScore:
    at_fault_collision: bool
    time_to_collision_s: Optional[float]
    drivable_compliance: float
    progress_m: float
    comfort: float
    total: float


@dataclass(frozen=True)
class CandidatePath:
    trajectory: Trajectory
    speed_fraction: float
    lateral_offset: float
    score: Optional[CandidateScore] = None


@dataclass(frozen=True)
class AgentObservation:
    id: str
    polygon: np.ndarray
    position: Tuple[float, float]
    velocity: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "polygon", as_convex_polygon(self.polygon))


@dataclass(frozen=True)
class Forecast:
    """Predicted polygons per agent, ``tracks[i][k]`` at time ``k * dt``"""

    dt: float
    ids: Tuple[str, ...] = ()
    tracks: Tuple[np.ndarray, ...] = ()

    def __len__(self) -> int:
        return len(self.tracks)

    def __iter__(self):
        return iter(self.tracks)

    def __getitem__(self, index: int) -> np.ndarray:
        return self.tracks[index]


@dataclass(frozen=True)
class Selection:
    index: int
    candidate: CandidatePath
    trajectory: Trajectory
    override: bool = False
    candidates: Tuple[CandidatePath, ...] = field(default=(), repr=False)


def idm_acceleration(
    v: float,
    v_target: float,
    gap: float,
    closing_speed: float,
    p: IdmParams,
    *,
    max_brake: float = SamplerConfig.max_brake,
) -> float:
    """Intelligent Driver Model acceleration clamped to ``[-max_brake, a_max]``

    :param gap: Distance to the vehicle ahead, ``math.inf`` on a free road
    :param closing_speed: Own speed minus the speed of the vehicle ahead
    """
    if not v_target > 0.0:
        raise InvalidParameterError("v_target must be positive: %r" % v_target)
    if v < 0.0:
        raise InvalidParameterError("speed must be >= 0: %r" % v)
    free = (v / v_target) ** p.delta_exp
    if math.isinf(gap):
        interaction = 0.0
    else:
        if not gap > 0.0:
            return -max_brake
        desired = (
            p.s0
            + v * p.T_headway
            + v * closing_speed / (2.0 * math.sqrt(p.a_max * p.b_comf))
        )
        interaction = (desired / gap) ** 2
    accel = p.a_max * (1.0 - free - interaction)
    return float(min(max(accel, -max_brake), p.a_max))


def forecast_agents(
    observations: Sequence[AgentObservation], horizon_s: float, dt: float
) -> Forecast:
    """Constant-velocity polygon extrapolation, ``horizon_s / dt + 1`` steps"""
    if not dt > 0.0:
        raise InvalidParameterError("dt must be positive: %r" % dt)
    steps = int(round(horizon_s / dt))
    t = dt * np.arange(steps + 1)
    tracks = []
    for agent in observations:
        shift = t[:, None] * np.asarray(agent.velocity, dtype=float)[None, :]
        tracks.append(agent.polygon[None, :, :] + shift[:, None, :])
    return Forecast(
        dt=dt,
        ids=tuple(agent.id for agent in observations),
        tracks=tuple(tracks),
    )


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _idm_profile(
    v0: float,
    v_target: float,
    s0: float,
    end_station: float,
    lead: Optional[LeadState],
    cfg: SamplerConfig,
    idm: IdmParams,
) -> Tuple[np.ndarray, np.ndarray]:
    """Speeds and stations over the horizon; the route end acts as a
    stationary vehicle"""
    n = cfg.horizon_points
    dt = cfg.dt
    speeds = np.empty(n + 1)
    stations = np.empty(n + 1)
    speeds[0] = v0
    stations[0] = s0
    for k in range(n):
        v = speeds[k]
        travelled = stations[k] - s0
        accel = idm_acceleration(
            v,
            v_target,
            max(end_station - stations[k], 1e-3),
            v,
            idm,
            max_brake=cfg.max_brake,
        )
        if lead is not None:
            gap = lead.gap + lead.speed * k * dt - travelled
            accel = min(
                accel,
                idm_acceleration(
                    v,
                    v_target,
                    max(gap, 1e-3),
                    v - lead.speed,
                    idm,
                    max_brake=cfg.max_brake,
                ),
            )
        v_next = min(max(v + accel * dt, 0.0), max(v, v_target))
        speeds[k + 1] = v_next
        stations[k + 1] = stations[k] + 0.5 * (v + v_next) * dt
    return speeds, stations


def generate_candidates(
    centerline: Polyline,
    ego: EgoState,
    lead: Optional[LeadState],
    cfg: SamplerConfig,
    idm: IdmParams,
    *,
    speed_limit: float,
) -> List[CandidatePath]:
    """One candidate per (speed fraction, lateral offset) pair

    The effective speed limit is the lead vehicle's speed when a lead
    exists. Lateral offsets are approached from the current offset with a
    smoothstep over ``cfg.lateral_transition_m``.
    """
    if not isinstance(centerline, Polyline):
        centerline = Polyline(centerline)
    if not speed_limit > 0.0:
        raise InvalidParameterError("speed limit must be positive: %r" % speed_limit)
    frenet = project_to_path(centerline, (ego.pose.x, ego.pose.y), ego.pose.heading)
    limit = speed_limit
    if lead is not None:
        limit = max(min(lead.speed, speed_limit), MIN_TARGET_SPEED)
    v0 = max(ego.vel_lon, 0.0)
    candidates = []
    for fraction in cfg.speed_fractions:
        speeds, stations = _idm_profile(
            v0,
            fraction * limit,
            frenet.s,
            centerline.length,
            lead,
            cfg,
            idm,
        )
        blend = _smoothstep((stations - frenet.s) / cfg.lateral_transition_m)
        for offset in cfg.lateral_offsets_m:
            lateral = frenet.d + (offset - frenet.d) * blend
            xy = centerline.offset_points(stations, lateral)
            trajectory = trajectory_from_positions(
                xy,
                cfg.dt,
                speeds=speeds,
                initial_heading=ego.pose.heading,
                start_time=ego.timestamp,
            )
            candidates.append(
                CandidatePath(
                    trajectory=trajectory,
                    speed_fraction=fraction,
                    lateral_offset=offset,
                )
            )
    return candidates


def _track_collisions(
    rectangles: np.ndarray, forecasts: Forecast, obstacles: Sequence
) -> np.ndarray:
    hit = np.zeros(len(rectangles), dtype=bool)
    for obstacle in obstacles:
        hit |= footprints_hit_polygon(rectangles, obstacle)
    for track in forecasts:
        steps = min(len(track), len(rectangles))
        hit[:steps] |= footprints_hit_track(rectangles[:steps], track[:steps])
    return hit


def _progress(traj: Trajectory, corridor: DrivableCorridor) -> float:
    """Distance gained along the corridor reference"""
    s, _, _ = project_points(corridor.reference, traj.xy[[0, -1]])
    return max(float(s[1] - s[0]), 0.0)


def score_candidate(
    c: CandidatePath,
    forecasts: Forecast,
    corridor: DrivableCorridor,
    cfg: SamplerConfig,
    *,
    footprint: Footprint,
    obstacles: Sequence = (),
    progress_reference: Optional[float] = None,
) -> CandidateScore:
    """Collision gate times a weighted sum of progress, drivable-area
    compliance and comfort, on a 0..100 scale

    :param obstacles: Static convex polygons
    :param progress_reference: Progress that normalizes to 1, default is the
        candidate's own progress
    """
    traj = c.trajectory
    if len(forecasts) and abs(forecasts.dt - traj.dt) > 1e-9:
        raise InvalidParameterError(
            "dt mismatch: trajectory %r, forecasts %r" % (traj.dt, forecasts.dt)
        )
    rectangles = footprint_polygons(traj.x, traj.y, traj.heading, footprint)
    hit = _track_collisions(rectangles, forecasts, obstacles)
    collision = bool(hit.any())
    ttc = float(traj.t[np.argmax(hit)]) if collision else None

    s, d, _ = project_points(corridor.reference, traj.xy)
    compliance = float(np.mean(corridor.contains(s, d)))
    progress = _progress(traj, corridor)

    jerk = np.diff(traj.accel) / traj.dt
    peaks = (
        (float(np.max(np.abs(traj.accel))), cfg.accel_max),
        (float(np.max(np.abs(jerk), initial=0.0)), cfg.jerk_max),
        (float(np.max(traj.speed**2 * np.abs(traj.curvature))), cfg.lat_accel_max),
    )
    comfort = 1.0
    for peak, limit in peaks:
        if peak > limit:
            comfort *= limit / peak

    reference = progress if progress_reference is None else progress_reference
    norm_progress = min(progress / reference, 1.0) if reference > 0.0 else 0.0
    total = 100.0 * (
        cfg.progress_weight * norm_progress
        + cfg.compliance_weight * compliance
        + cfg.comfort_weight * comfort
    )
    if collision:
        if ttc <= cfg.collision_check_window_s + 1e-9:
            total = 0.0
        else:
            total *= cfg.late_collision_factor
    return CandidateScore(
        at_fault_collision=collision,
        time_to_collision_s=ttc,
        drivable_compliance=compliance,
        progress_m=progress,
        comfort=comfort,
        total=float(total),
    )


def score_candidates(
    candidates: Sequence[CandidatePath],
    forecasts: Forecast,
    corridor: DrivableCorridor,
    cfg: SamplerConfig,
    *,
    footprint: Footprint,
    obstacles: Sequence = (),
) -> List[CandidatePath]:
    """Score a candidate set with progress normalized by its best member"""
    progress = [_progress(c.trajectory, corridor) for c in candidates]
    reference = max(progress, default=0.0)
    return [
        CandidatePath(
            trajectory=c.trajectory,
            speed_fraction=c.speed_fraction,
            lateral_offset=c.lateral_offset,
            score=score_candidate(
                c,
                forecasts,
                corridor,
                cfg,
                footprint=footprint,
                obstacles=obstacles,
                progress_reference=reference,
            ),
        )
        for c in candidates
    ]


def max_brake_trajectory(geometry: Trajectory, max_brake: float) -> Trajectory:
    """Brake at ``max_brake`` from the first speed of ``geometry`` along its
    path until standstill, extrapolating straight past the path end"""
    dt = geometry.dt
    n = len(geometry)
    speeds = np.empty(n)
    speeds[0] = geometry.speed[0]
    for k in range(n - 1):
        speeds[k + 1] = max(0.0, speeds[k] - max_brake * dt)
    travel = np.concatenate(
        [[0.0], np.cumsum(0.5 * (speeds[:-1] + speeds[1:]) * dt)]
    )
    step = np.hypot(np.diff(geometry.x), np.diff(geometry.y))
    arc = np.concatenate([[0.0], np.cumsum(step)])
    keep = np.concatenate([[True], step > 1e-9])
    arc, xy, heading = arc[keep], geometry.xy[keep], np.unwrap(geometry.heading)[keep]
    if len(arc) < 2:
        c, s = math.cos(heading[0]), math.sin(heading[0])
        xy = np.array([xy[0], xy[0] + [c, s]])
        heading = np.array([heading[0], heading[0]])
        arc = np.array([0.0, 1.0])
    beyond = np.maximum(travel - arc[-1], 0.0)
    x = np.interp(travel, arc, xy[:, 0]) + beyond * math.cos(heading[-1])
    y = np.interp(travel, arc, xy[:, 1]) + beyond * math.sin(heading[-1])
    accel = np.diff(speeds) / dt
    accel = np.append(accel, accel[-1])
    return Trajectory(
        geometry.t,
        x,
        y,
        np.interp(travel, arc, heading),
        speeds,
        accel,
        np.interp(travel, arc, geometry.curvature[keep]),
        start_time=geometry.start_time,
    )


def _rank_key(candidate: CandidatePath):
    return (
        -round(candidate.score.total, 9),
        abs(candidate.lateral_offset),
        candidate.speed_fraction,
    )


def select_candidate(candidates: Sequence[CandidatePath], cfg: SamplerConfig):
    """Highest total wins; ties prefer the smaller offset, then the slower
    policy"""
    if not candidates:
        raise EmptyCandidatesError("no candidates to select from")
    if any(c.score is None for c in candidates):
        raise InvalidParameterError("candidates must be scored before selection")
    index = min(range(len(candidates)), key=lambda i: _rank_key(candidates[i]))
    winner = candidates[index]
    score = winner.score
    override = (
        score.at_fault_collision
        and score.time_to_collision_s is not None
        and score.time_to_collision_s <= cfg.collision_check_window_s + 1e-9
    )
    trajectory = winner.trajectory
    if override:
        centered = [c for c in candidates if c.lateral_offset == 0.0] or list(
            candidates
        )
        geometry = max(centered, key=lambda c: c.speed_fraction).trajectory
        trajectory = max_brake_trajectory(geometry, cfg.max_brake)
        logger.info(
            "collision expected in %.2f s, maximum braking",
            score.time_to_collision_s,
        )
    logger.debug(
        "selected candidate %d: fraction %.1f offset %+.1f total %.2f",
        index,
        winner.speed_fraction,
        winner.lateral_offset,
        score.total,
    )
    return Selection(
        index=index,
        candidate=winner,
        trajectory=trajectory,
        override=override,
        candidates=tuple(candidates),
    )


def select_path(candidates: Sequence[CandidatePath], cfg: SamplerConfig) -> Trajectory:
    return select_candidate(candidates, cfg).trajectory


def find_lead(
    centerline: Polyline,
    ego_station: float,
    ego_footprint: Footprint,
    agents: Sequence[AgentObservation],
    cfg: SamplerConfig,
) -> Optional[LeadState]:
    """Nearest agent ahead whose centre lies within
    ``cfg.lead_lateral_tolerance`` of the path"""
    front = ego_station + ego_footprint.front_from_axle
    best: Optional[LeadState] = None
    for agent in agents:
        centre = np.mean(agent.polygon, axis=0)
        s_centre, d_centre, index = project_points(centerline, [centre])
        if abs(d_centre[0]) > cfg.lead_lateral_tolerance or s_centre[0] <= front:
            continue
        s, _, _ = project_points(centerline, agent.polygon)
        heading = centerline.segment_headings[index[0]]
        speed = float(
            agent.velocity[0] * math.cos(heading)
            + agent.velocity[1] * math.sin(heading)
        )
        lead = LeadState(gap=max(float(s.min()) - front, 0.0), speed=max(speed, 0.0))
        if best is None or lead.gap < best.gap:
            best = lead
    return best
