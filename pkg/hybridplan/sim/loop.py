"""Closed-loop simulation of the planner stack

The plant runs at 100 Hz and the stack replans at 10 Hz. One planning cycle
routes the ego, samples and scores candidates, and then depending on the
mode refines the selected candidate:

``hybrid``
    network trajectory refined by MPT, speeds from the cruise planner
``nn_only``
    network trajectory tracked as is
``optimizer_only``
    selected candidate refined by MPT with its own speeds
``sample_only``
    selected candidate tracked as is
"""

from dataclasses import asdict, dataclass, replace
from logging import getLogger as get_logger
from typing import TYPE_CHECKING, Callable, List, Optional, Sequence

from hybridplan.cruise import CruiseProfile, LeadState, plan_cruise_profile
from hybridplan.errors import HybridPlanError, InvalidParameterError
from hybridplan.geometry import EgoState, Polyline, Trajectory, project_to_path
from hybridplan.lanes import DrivableCorridor
from hybridplan.mpt import MptResult, optimize_trajectory
from hybridplan.neural.features import (
    HISTORY_WINDOW,
    decode_waypoints,
    encode_features,
    extend_planner_path,
)
from hybridplan.neural.mlp import MlpModel
from hybridplan.sampler import (
    Forecast,
    Selection,
    find_lead,
    forecast_agents,
    generate_candidates,
    score_candidates,
    select_candidate,
)
from hybridplan.sim.controller import track_trajectory
from hybridplan.sim.plant import PlantState, step_plant
from hybridplan.sim.scenario import Scenario
from hybridplan.sim.trace import (
    CandidateRecord,
    FailureRecord,
    SimTrace,
    TickRecord,
    TraceHeader,
)
from hybridplan.utils import full_error_message

if TYPE_CHECKING:
    from hybridplan.config import StackConfig

__all__ = [
    "MODES",
    "PlannerContext",
    "PlanningCycle",
    "SimConfig",
    "cycle_to_dict",
    "make_context",
    "pad_history",
    "plan_cycle",
    "run_closed_loop",
]

logger = get_logger(__name__)

MODES = ("hybrid", "nn_only", "optimizer_only", "sample_only")
NETWORK_MODES = ("hybrid", "nn_only")
MPT_MODES = ("hybrid", "optimizer_only")


@dataclass(frozen=True)
class SimConfig:
    plan_rate_hz: float = 10.0
    plant_rate_hz: float = 100.0
    goal_tolerance_m: float = 10.0
    stop_at_goal: bool = True

    def __post_init__(self):
        if not (self.plan_rate_hz > 0.0 and self.plant_rate_hz > 0.0):
            raise InvalidParameterError("rates must be positive")
        ratio = self.plant_rate_hz / self.plan_rate_hz
        if ratio < 1.0 or abs(ratio - round(ratio)) > 1e-9:
            raise InvalidParameterError(
                "plant rate %r must be a multiple of plan rate %r"
                % (self.plant_rate_hz, self.plan_rate_hz)
            )

    @property
    def plan_dt(self) -> float:
        return 1.0 / self.plan_rate_hz

    @property
    def plant_dt(self) -> float:
        return 1.0 / self.plant_rate_hz

    @property
    def steps_per_plan(self) -> int:
        return int(round(self.plant_rate_hz / self.plan_rate_hz))


@dataclass(frozen=True)
class PlannerContext:
    """Per-run constants of the planning cycle"""

    scenario: Scenario
    config: "StackConfig"
    corridor: DrivableCorridor
    centerline: Polyline
    model: Optional[MlpModel] = None


@dataclass(frozen=True)
class PlanningCycle:
    """Every intermediate product of one planning cycle"""

    mode: str
    ego: EgoState
    station: float
    speed_limit: float
    lead: Optional[LeadState]
    cruise_lead: Optional[LeadState]
    forecasts: Forecast
    selection: Selection
    planner_path: Optional[Polyline]
    nn_trajectory: Optional[Trajectory]
    cruise: Optional[CruiseProfile]
    mpt: Optional[MptResult]
    trajectory: Trajectory

    @property
    def time(self) -> float:
        return self.ego.timestamp

    @property
    def used_fallback(self) -> bool:
        return self.mpt is not None and self.mpt.used_fallback

    @property
    def qp_invoked(self) -> bool:
        return self.mpt is not None

    @property
    def mlp_invoked(self) -> bool:
        return self.mode in NETWORK_MODES


def make_context(
    scn: Scenario, cfg: "StackConfig", model: Optional[MlpModel] = None
) -> PlannerContext:
    return PlannerContext(
        scenario=scn,
        config=cfg,
        corridor=scn.corridor(cfg.footprint),
        centerline=scn.centerline,
        model=model,
    )


def pad_history(history: Sequence[EgoState], dt: float) -> List[EgoState]:
    """Prepend copies of the oldest state until the history spans 2 s"""
    history = list(history)
    oldest = history[0]
    missing = HISTORY_WINDOW - (history[-1].timestamp - oldest.timestamp)
    count = int(round(missing / dt)) if missing > 1e-9 else 0
    padding = [
        replace(oldest, timestamp=oldest.timestamp - dt * k)
        for k in range(count, 0, -1)
    ]
    return padding + history


def _cruise_lead(lead: Optional[LeadState], route_end_gap: float) -> LeadState:
    """The nearer of the real lead and a standing vehicle at the route end"""
    end = LeadState(gap=max(route_end_gap, 0.0), speed=0.0)
    if lead is None or end.gap < lead.gap:
        return end
    return lead


def plan_cycle(
    ctx: PlannerContext,
    ego: EgoState,
    history: Sequence[EgoState],
    prev: Optional[Trajectory],
    mode: str = "hybrid",
    *,
    warm_start: Optional[MptResult] = None,
) -> PlanningCycle:
    """Run the stack once for ``ego``

    :param history: Past ego states ending with ``ego``, padded to 2 s when
        shorter
    :param prev: Trajectory produced by the previous cycle
    :param warm_start: MPT result of the previous cycle
    """
    if mode not in MODES:
        raise InvalidParameterError(
            "unknown mode: %r, expect one of %r" % (mode, MODES)
        )
    cfg = ctx.config
    scn = ctx.scenario
    sampler = cfg.sampler
    t = ego.timestamp

    agents = scn.agents_at(t)
    forecasts = forecast_agents(agents, sampler.horizon_s, sampler.dt)
    station = project_to_path(ctx.centerline, (ego.pose.x, ego.pose.y)).s
    speed_limit = scn.speed_limit_at(station)
    lead = find_lead(ctx.centerline, station, cfg.footprint, agents, sampler)
    candidates = generate_candidates(
        ctx.centerline, ego, lead, sampler, cfg.idm, speed_limit=speed_limit
    )
    scored = score_candidates(
        candidates,
        forecasts,
        ctx.corridor,
        sampler,
        footprint=cfg.footprint,
        obstacles=scn.static_obstacles,
    )
    selection = select_candidate(scored, sampler)
    selected = selection.trajectory

    nn_trajectory = cruise = mpt = cruise_lead = planner_path = None
    if mode == "sample_only":
        trajectory = selected
    else:
        planner_path = extend_planner_path(selected, ctx.centerline)
        if mode in NETWORK_MODES:
            features = encode_features(
                pad_history(history, cfg.sim.plan_dt), planner_path
            )
            waypoints = ctx.model.forward(features)
            nn_trajectory = decode_waypoints(ego, waypoints, sampler.dt)
        if mode == "nn_only":
            trajectory = nn_trajectory
        else:
            speeds = None
            if mode == "hybrid" and not selection.override:
                route_end_gap = (
                    ctx.centerline.length - station - cfg.footprint.front_from_axle
                )
                cruise_lead = _cruise_lead(lead, route_end_gap)
                limit = speed_limit if lead is None else min(lead.speed, speed_limit)
                cruise = plan_cruise_profile(
                    max(ego.vel_lon, 0.0),
                    cruise_lead,
                    selection.candidate.speed_fraction * max(limit, 0.1),
                    cfg.mpt.horizon_points,
                    cfg.mpt.dt,
                    cfg.cruise,
                    a0=ego.acc_lon,
                )
            else:
                speeds = selected.speed
            mpt = optimize_trajectory(
                nn_trajectory if mode == "hybrid" else selected,
                ctx.corridor,
                scn.static_obstacles,
                ego,
                prev,
                cfg.mpt,
                cruise=cruise,
                speeds=speeds,
                forecasts=forecasts,
                planner_path=planner_path,
                fallback=selected,
                warm_start=warm_start,
            )
            trajectory = mpt.trajectory
    logger.debug(
        "t=%.1f s: station %.1f m, candidate %d%s, fallback %s",
        t,
        station,
        selection.index,
        " (override)" if selection.override else "",
        mpt is not None and mpt.used_fallback,
    )
    return PlanningCycle(
        mode=mode,
        ego=ego,
        station=station,
        speed_limit=speed_limit,
        lead=lead,
        cruise_lead=cruise_lead,
        forecasts=forecasts,
        selection=selection,
        planner_path=planner_path,
        nn_trajectory=nn_trajectory,
        cruise=cruise,
        mpt=mpt,
        trajectory=trajectory,
    )


def _tick_record(cycle: PlanningCycle, plant: PlantState, scn: Scenario):
    agents = []
    for agent in scn.dynamic_agents:
        pose = agent.pose_at(cycle.time)
        agents.append(
            {"id": agent.id, "x": pose.x, "y": pose.y, "heading": pose.heading}
        )
    return TickRecord(
        time=cycle.time,
        x=plant.pose.x,
        y=plant.pose.y,
        heading=plant.pose.heading,
        speed=plant.speed,
        steering=plant.steering,
        accel=plant.accel,
        selected=cycle.selection.index,
        override=cycle.selection.override,
        used_fallback=cycle.used_fallback,
        qp_invoked=cycle.qp_invoked,
        mlp_invoked=cycle.mlp_invoked,
        candidates=tuple(
            CandidateRecord(
                speed_fraction=c.speed_fraction,
                lateral_offset=c.lateral_offset,
                total=c.score.total,
                at_fault_collision=c.score.at_fault_collision,
            )
            for c in cycle.selection.candidates
        ),
        nn_trajectory=cycle.nn_trajectory,
        mpt_trajectory=None if cycle.mpt is None else cycle.mpt.trajectory,
        trajectory=cycle.trajectory,
        lead_gap=None if cycle.lead is None else cycle.lead.gap,
        lead_speed=None if cycle.lead is None else cycle.lead.speed,
        agents=tuple(agents),
    )


def run_closed_loop(
    scn: Scenario,
    stack_config: "StackConfig",
    mode: str = "hybrid",
    *,
    model: Optional[MlpModel] = None,
    on_cycle: Optional[Callable[[PlanningCycle], None]] = None,
) -> SimTrace:
    """Simulate ``scn`` for its duration, or until the goal is reached

    A stack error ends the run and is recorded as the trace's failure.

    :param model: Network for the modes that use it; a freshly initialized
        network seeded from the scenario when omitted
    """
    if mode not in MODES:
        raise InvalidParameterError(
            "unknown mode: %r, expect one of %r" % (mode, MODES)
        )
    cfg = stack_config
    sim = cfg.sim
    if model is None and mode in NETWORK_MODES:
        logger.warning("no trained model given, using an untrained network")
        model = MlpModel(seed=scn.seed, dropout=cfg.dropout)
    ctx = make_context(scn, cfg, model)
    start = scn.ego_start
    plant = PlantState(
        pose=start.pose,
        speed=max(start.vel_lon, 0.0),
        wheelbase=cfg.footprint.wheelbase,
    )
    trace = SimTrace(TraceHeader(scn.name, mode, scn.seed, sim.plan_dt))
    history: List[EgoState] = []
    prev: Optional[Trajectory] = None
    prev_mpt: Optional[MptResult] = None
    ticks = int(round(scn.duration_s * sim.plan_rate_hz))
    goal = scn.route.total_length - sim.goal_tolerance_m
    for tick in range(ticks + 1):
        t = tick * sim.plan_dt
        plant = replace(plant, time=t)
        ego = plant.ego_state()
        history.append(ego)
        while history[-1].timestamp - history[0].timestamp > HISTORY_WINDOW + 1e-9:
            history.pop(0)
        try:
            cycle = plan_cycle(ctx, ego, history, prev, mode, warm_start=prev_mpt)
        except HybridPlanError as error:
            logger.error("simulation aborted at %.1f s: %s", t, error)
            trace.failure = FailureRecord(t, full_error_message(error))
            break
        trace.ticks.append(_tick_record(cycle, plant, scn))
        if on_cycle is not None:
            on_cycle(cycle)
        if sim.stop_at_goal and cycle.station >= goal:
            logger.info("goal reached at %.1f s", t)
            break
        prev = cycle.trajectory
        prev_mpt = cycle.mpt
        for _ in range(sim.steps_per_plan):
            command = track_trajectory(plant, prev, cfg.controller)
            plant = step_plant(
                plant, command, sim.plant_dt, delta_max=cfg.controller.delta_max
            )
    logger.info(
        "simulation of %r in mode %s finished: %d ticks%s",
        scn.name,
        mode,
        len(trace.ticks),
        "" if trace.failure is None else ", failed",
    )
    return trace


def _trajectory(traj: Optional[Trajectory]) -> Optional[dict]:
    return None if traj is None else traj.to_dict()


def cycle_to_dict(cycle: PlanningCycle) -> dict:
    """JSON-ready dump of every intermediate product of ``cycle``"""
    selection = cycle.selection
    return {
        "time": cycle.time,
        "mode": cycle.mode,
        "station": cycle.station,
        "speed_limit": cycle.speed_limit,
        "lead": None if cycle.lead is None else asdict(cycle.lead),
        "cruise_lead": None if cycle.cruise_lead is None else asdict(cycle.cruise_lead),
        "candidates": [
            {
                "speed_fraction": c.speed_fraction,
                "lateral_offset": c.lateral_offset,
                "score": None if c.score is None else asdict(c.score),
                "trajectory": c.trajectory.to_dict(),
            }
            for c in selection.candidates
        ],
        "selected": selection.index,
        "override": selection.override,
        "selected_trajectory": selection.trajectory.to_dict(),
        "planner_path": (
            None if cycle.planner_path is None else cycle.planner_path.vertices
        ),
        "nn_trajectory": _trajectory(cycle.nn_trajectory),
        "cruise": None
        if cycle.cruise is None
        else {
            "speeds": cycle.cruise.speeds,
            "accels": cycle.cruise.accels,
            "objective": cycle.cruise.objective,
            "emergency": cycle.cruise.emergency,
        },
        "mpt": None
        if cycle.mpt is None
        else {
            "trajectory": cycle.mpt.trajectory.to_dict(),
            "used_fallback": cycle.mpt.used_fallback,
            "objective_value": cycle.mpt.objective_value,
            "kkt_residual": cycle.mpt.kkt_residual,
            "steering": cycle.mpt.steering,
            "reason": cycle.mpt.reason,
        },
        "trajectory": cycle.trajectory.to_dict(),
    }
