"""Synthetic expert demonstrations

The expert drives each scenario once along a curve-cutting path: on curves
sharper than ``curvature_threshold`` it moves ``cut_fraction`` of the way
toward the inner corridor limit, smoothed over a moving window. Its speed
approaches ``speed_fraction`` of the limit with a minimum-jerk transition
and yields to leads and the route end through the cruise planner. MPT
refines the reference and the tracking controller drives the plant.

Samples are cut from the recorded 10 Hz states at random anchor ticks.
"""

from dataclasses import dataclass, replace
from logging import getLogger as get_logger
from typing import TYPE_CHECKING, List, Optional, Sequence

import numpy as np

from hybridplan.cruise import LeadState, minimum_jerk_speed, plan_cruise_profile
from hybridplan.errors import HybridPlanError, InvalidParameterError
from hybridplan.geometry import (
    EgoState,
    Polyline,
    Trajectory,
    project_to_path,
    to_local_frame,
    trajectory_from_positions,
)
from hybridplan.geometry.path import circumscribed_curvature
from hybridplan.lanes import DrivableCorridor
from hybridplan.mpt import optimize_trajectory
from hybridplan.neural.features import (
    HISTORY_WINDOW,
    encode_features,
    extend_planner_path,
)
from hybridplan.neural.mlp import OUTPUT_WAYPOINTS
from hybridplan.neural.train import TrainingSample
from hybridplan.sampler import find_lead, forecast_agents
from hybridplan.sim.controller import track_trajectory
from hybridplan.sim.loop import make_context, pad_history, plan_cycle
from hybridplan.sim.plant import PlantState, step_plant
from hybridplan.sim.scenario import Scenario

if TYPE_CHECKING:
    from hybridplan.config import StackConfig

__all__ = [
    "ExpertConfig",
    "drive_expert",
    "expert_offsets",
    "expert_path",
    "gen_expert_data",
]

logger = get_logger(__name__)


@dataclass(frozen=True)
class ExpertConfig:
    speed_fraction: float = 0.8
    cut_fraction: float = 0.4
    curvature_threshold: float = 0.02
    smoothing_window_m: float = 10.0
    speed_transition_s: float = 4.0

    def __post_init__(self):
        if not 0.0 < self.speed_fraction <= 1.0:
            raise InvalidParameterError(
                "speed_fraction must lie in (0, 1]: %r" % self.speed_fraction
            )
        if not 0.0 <= self.cut_fraction < 1.0:
            raise InvalidParameterError(
                "cut_fraction must lie in [0, 1): %r" % self.cut_fraction
            )
        if self.smoothing_window_m < 0.0 or self.speed_transition_s <= 0.0:
            raise InvalidParameterError("invalid smoothing window or transition")


def expert_offsets(corridor: DrivableCorridor, ecfg: ExpertConfig) -> np.ndarray:
    """Lateral offset of the expert path at every corridor station"""
    curvature = circumscribed_curvature(corridor.reference.vertices)
    inside = np.where(curvature > 0.0, corridor.left_limit, corridor.right_limit)
    offsets = np.where(
        np.abs(curvature) > ecfg.curvature_threshold, ecfg.cut_fraction * inside, 0.0
    )
    spacing = corridor.reference.length / max(len(corridor) - 1, 1)
    window = int(round(ecfg.smoothing_window_m / spacing)) | 1
    if window > 1 and len(offsets) > window:
        pad = window // 2
        padded = np.concatenate(
            [np.full(pad, offsets[0]), offsets, np.full(pad, offsets[-1])]
        )
        offsets = np.convolve(padded, np.ones(window) / window, mode="valid")
    return np.clip(offsets, corridor.right_limit, corridor.left_limit)


def expert_path(corridor: DrivableCorridor, ecfg: ExpertConfig) -> Polyline:
    return Polyline(
        corridor.reference.offset_points(
            corridor.stations, expert_offsets(corridor, ecfg)
        )
    )


def _reference(
    path: Polyline, ego: EgoState, speeds: np.ndarray, dt: float
) -> Trajectory:
    start = project_to_path(path, (ego.pose.x, ego.pose.y)).s
    travel = np.concatenate([[0.0], np.cumsum(0.5 * (speeds[:-1] + speeds[1:]) * dt)])
    return trajectory_from_positions(
        path.point_at(start + travel),
        dt,
        speeds=speeds,
        initial_heading=ego.pose.heading,
        start_time=ego.timestamp,
    )


def drive_expert(
    scn: Scenario, cfg: "StackConfig", ecfg: Optional[ExpertConfig] = None
) -> List[EgoState]:
    """Ego states of one expert run at the planning rate

    The run stops early at the goal or at the first stack error.
    """
    ecfg = ecfg or cfg.expert
    sim = cfg.sim
    corridor = scn.corridor(cfg.footprint)
    centerline = scn.centerline
    path = expert_path(corridor, ecfg)
    n = cfg.mpt.horizon_points
    dt = cfg.mpt.dt
    lookahead = dt * np.arange(n + 1)
    plant = PlantState(
        pose=scn.ego_start.pose,
        speed=max(scn.ego_start.vel_lon, 0.0),
        wheelbase=cfg.footprint.wheelbase,
    )
    states: List[EgoState] = []
    prev: Optional[Trajectory] = None
    goal = scn.route.total_length - sim.goal_tolerance_m
    for tick in range(int(round(scn.duration_s * sim.plan_rate_hz)) + 1):
        t = tick * sim.plan_dt
        plant = replace(plant, time=t)
        ego = plant.ego_state()
        states.append(ego)
        station = project_to_path(centerline, (ego.pose.x, ego.pose.y)).s
        if sim.stop_at_goal and station >= goal:
            break
        agents = scn.agents_at(t)
        lead = find_lead(centerline, station, cfg.footprint, agents, cfg.sampler)
        end = LeadState(
            max(centerline.length - station - cfg.footprint.front_from_axle, 0.0), 0.0
        )
        if lead is None or end.gap < lead.gap:
            lead = end
        v_target = ecfg.speed_fraction * scn.speed_limit_at(station)
        comfortable = minimum_jerk_speed(
            ego.vel_lon, v_target, ecfg.speed_transition_s, lookahead
        )
        try:
            cruise = plan_cruise_profile(
                ego.vel_lon, lead, v_target, n, dt, cfg.cruise, a0=ego.acc_lon
            )
            speeds = np.minimum(comfortable, cruise.speeds)
            result = optimize_trajectory(
                _reference(path, ego, speeds, dt),
                corridor,
                scn.static_obstacles,
                ego,
                prev,
                cfg.mpt,
                speeds=speeds,
                forecasts=forecast_agents(agents, cfg.sampler.horizon_s, dt),
            )
        except HybridPlanError as error:
            logger.warning(
                "expert run of %r stopped at %.1f s: %s", scn.name, t, error
            )
            break
        prev = result.trajectory
        for _ in range(sim.steps_per_plan):
            command = track_trajectory(plant, prev, cfg.controller)
            plant = step_plant(
                plant, command, sim.plant_dt, delta_max=cfg.controller.delta_max
            )
    return states


def _split(total: int, parts: int) -> List[int]:
    return [total // parts + (1 if i < total % parts else 0) for i in range(parts)]


def gen_expert_data(
    scenarios: Sequence[Scenario],
    n_samples: int,
    cfg: "StackConfig",
    *,
    seed: int = 0,
) -> List[TrainingSample]:
    """Training samples cut from expert runs, spread evenly over the
    scenarios

    Scenarios whose run is shorter than the 2 s history plus the 8 s target
    are skipped with a warning.
    """
    if n_samples < 1:
        raise InvalidParameterError("n_samples must be >= 1: %r" % n_samples)
    if not scenarios:
        raise InvalidParameterError("no scenarios")
    rng = np.random.Generator(np.random.PCG64(seed))
    history_ticks = int(round(HISTORY_WINDOW * cfg.sim.plan_rate_hz))
    future_ticks = int(round(OUTPUT_WAYPOINTS * cfg.mpt.dt * cfg.sim.plan_rate_hz))
    stride = future_ticks // OUTPUT_WAYPOINTS
    samples: List[TrainingSample] = []
    for scn, count in zip(scenarios, _split(n_samples, len(scenarios))):
        if count == 0:
            continue
        states = drive_expert(scn, cfg)
        valid = np.arange(history_ticks, len(states) - future_ticks)
        if len(valid) == 0:
            logger.warning(
                "scenario %r too short for samples: %.1f s driven",
                scn.name,
                states[-1].timestamp,
            )
            continue
        anchors = rng.choice(valid, size=count, replace=count > len(valid))
        ctx = make_context(scn, cfg)
        for anchor in anchors:
            anchor = int(anchor)
            ego = states[anchor]
            history = pad_history(
                states[anchor - history_ticks : anchor + 1], cfg.sim.plan_dt
            )
            cycle = plan_cycle(ctx, ego, history, None, "sample_only")
            future = states[anchor + stride : anchor + future_ticks + 1 : stride]
            target = to_local_frame(
                ego.pose, [(state.pose.x, state.pose.y) for state in future]
            )
            baseline = to_local_frame(ego.pose, cycle.trajectory.xy[1:])
            features = encode_features(
                history, extend_planner_path(cycle.trajectory, ctx.centerline)
            )
            samples.append(TrainingSample(features, target, baseline))
        logger.info("scenario %r: %d samples", scn.name, count)
    return samples
