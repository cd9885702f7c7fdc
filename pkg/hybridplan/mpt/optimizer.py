"""Steering refinement of a reference trajectory

The quadratic program tracks the reference in lateral and heading error,
penalizes steering angle, rate and acceleration, pins the first steering
inputs to the previous plan and keeps the rear axle inside the drivable
corridor with penalized slack. The solved steering is rolled out through
the nonlinear bicycle. If the rollout touches an obstacle or leaves the
corridor, or the solver fails, the previous plan is returned unchanged. A
previous plan that itself leaves the corridor is never reused: the planner
trajectory clamped into the corridor replaces it.
"""

import math
from dataclasses import dataclass, field
from logging import getLogger as get_logger
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from hybridplan.errors import (
    CorridorMismatchError,
    InvalidParameterError,
    QpInfeasibleError,
    QpNotConvergedError,
)
from hybridplan.geometry import (
    EgoState,
    Footprint,
    Polyline,
    Trajectory,
    footprint_polygons,
    footprints_hit_polygon,
    footprints_hit_track,
    normalize_angle,
    project_points,
    project_to_path,
    resample_uniform,
    trajectory_from_positions,
)
from hybridplan.geometry.path import circumscribed_curvature
from hybridplan.lanes import DrivableCorridor
from hybridplan.mpt.dynamics import (
    ErrorState,
    linearize_error_dynamics,
    rollout_bicycle,
    stack_error_dynamics,
)
from hybridplan.mpt.qp import QpProblem, QpSolution, dump_problem, solve_qp

__all__ = [
    "MptConfig",
    "MptResult",
    "MptWeights",
    "assemble_qp",
    "build_reference",
    "cold_start_previous",
    "optimize_trajectory",
    "setup_qp",
    "steering_of",
]

logger = get_logger(__name__)

REFERENCE_SPACING = 0.5
CURVATURE_WINDOW = 5


@dataclass(frozen=True)
class MptWeights:
    w_y: float = 1.0
    w_theta: float = 0.5
    w_delta: float = 0.01
    w_delta_rate: float = 1.0
    w_delta_accel: float = 1.0

    def __post_init__(self):
        values = (
            self.w_y,
            self.w_theta,
            self.w_delta,
            self.w_delta_rate,
            self.w_delta_accel,
        )
        if min(values) < 0.0:
            raise InvalidParameterError("mpt weights must be >= 0: %r" % (values,))
        if max(values) <= 0.0:
            raise InvalidParameterError("at least one mpt weight must be positive")


@dataclass(frozen=True)
class MptConfig:
    weights: MptWeights = field(default_factory=MptWeights)
    n_fix: int = 5
    horizon_points: int = 80
    dt: float = 0.1
    footprint: Footprint = field(default_factory=Footprint)
    delta_max: float = 0.6
    slack_penalty: float = 1e4
    kkt_tol: float = 1e-6
    max_iterations: int = 2000
    corridor_margin: float = 0.2
    min_speed: float = 0.1
    relinearize_passes: int = 1
    debug_dump_dir: Optional[str] = None

    def __post_init__(self):
        if not 0 <= self.n_fix < self.horizon_points:
            raise InvalidParameterError(
                "expect 0 <= n_fix < horizon_points, got %r, %r"
                % (self.n_fix, self.horizon_points)
            )
        if not self.dt > 0.0:
            raise InvalidParameterError("dt must be positive: %r" % self.dt)
        if not 0.0 < self.delta_max < 0.5 * math.pi:
            raise InvalidParameterError(
                "delta_max must lie in (0, pi/2): %r" % self.delta_max
            )
        if self.slack_penalty <= 0.0:
            raise InvalidParameterError("slack_penalty must be positive")
        if self.relinearize_passes < 0:
            raise InvalidParameterError(
                "relinearize_passes must be >= 0: %r" % self.relinearize_passes
            )

    @property
    def wheelbase(self) -> float:
        return self.footprint.wheelbase


@dataclass(frozen=True)
class MptResult:
    trajectory: Trajectory
    used_fallback: bool
    objective_value: float
    kkt_residual: float
    steering: Optional[np.ndarray] = None
    prev_steering: Optional[np.ndarray] = None
    pinned: int = 0
    reason: Optional[str] = None
    reference: Optional[Trajectory] = field(default=None, repr=False)
    qp_solution: Optional[QpSolution] = field(default=None, repr=False)


@dataclass(frozen=True)
class QpSetup:
    problem: QpProblem
    reference: Trajectory
    prev: Trajectory
    prev_steering: np.ndarray
    pinned: int
    history: Tuple[float, ...] = ()
    bounds: Optional[DrivableCorridor] = None


def steering_of(traj: Trajectory, wheelbase: float) -> np.ndarray:
    return np.arctan(wheelbase * traj.curvature)


def _aligned_steering(
    prev: Trajectory, now: float, cfg: MptConfig
) -> Tuple[np.ndarray, Tuple[float, ...]]:
    """Previous steering shifted to the current cycle, and up to two inputs
    applied just before it"""
    steering = np.clip(steering_of(prev, cfg.wheelbase), -cfg.delta_max, cfg.delta_max)
    shift = max(int(round((now - prev.start_time) / cfg.dt)), 0)
    index = np.minimum(np.arange(cfg.horizon_points) + shift, len(steering) - 1)
    history = tuple(
        float(steering[i]) for i in (shift - 2, shift - 1) if 0 <= i < len(steering)
    )
    return steering[index], history


def _smooth(values: np.ndarray, window: int) -> np.ndarray:
    if len(values) < window:
        return values
    pad = window // 2
    padded = np.concatenate([np.full(pad, values[0]), values, np.full(pad, values[-1])])
    return np.convolve(padded, np.ones(window) / window, mode="valid")


def _dedupe(points: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    keep = np.concatenate(
        [[True], np.hypot(*np.diff(points, axis=0).T) > tol]
    )
    return points[keep]


def build_reference(
    nn_traj: Trajectory,
    speeds,
    ego: EgoState,
    *,
    planner_path: Union[Trajectory, Polyline, None] = None,
    accels=None,
) -> Trajectory:
    """Geometry of ``nn_traj`` re-timed with ``speeds``

    Points that do not progress along ``planner_path`` are dropped and the
    planner path extends the geometry past the end of ``nn_traj``.
    """
    speeds = np.asarray(speeds, dtype=float)
    points = nn_traj.xy
    if planner_path is not None:
        path_xy = (
            planner_path.xy if isinstance(planner_path, Trajectory) else (
                planner_path.vertices
            )
        )
        path_xy = _dedupe(path_xy)
        if len(path_xy) >= 2:
            guide = Polyline(path_xy)
            stations, _, _ = project_points(guide, points)
            keep = [0]
            for i in range(1, len(points)):
                if stations[i] > stations[keep[-1]] + 1e-3:
                    keep.append(i)
            points = points[keep]
            last = stations[keep[-1]]
            points = np.concatenate([points, path_xy[guide.stations > last + 1.0]])
    points = _dedupe(points)
    if len(points) < 2:
        c, s = math.cos(ego.pose.heading), math.sin(ego.pose.heading)
        points = np.array([points[0], points[0] + [c, s]])
    geometry = Polyline(points)
    if geometry.length > 2.0 * REFERENCE_SPACING:
        geometry = resample_uniform(geometry, REFERENCE_SPACING)
    start = project_to_path(geometry, (ego.pose.x, ego.pose.y)).s
    travel = np.concatenate(
        [[0.0], np.cumsum(0.5 * (speeds[:-1] + speeds[1:]) * nn_traj.dt)]
    )
    stations = start + travel
    xy = geometry.point_at(stations)
    curvature = np.interp(
        stations,
        geometry.stations,
        _smooth(circumscribed_curvature(geometry.vertices), CURVATURE_WINDOW),
    )
    if accels is None:
        accels = np.diff(speeds) / nn_traj.dt
    accels = np.asarray(accels, dtype=float)
    if len(accels) == len(speeds) - 1:
        accels = np.append(accels, accels[-1])
    return Trajectory(
        nn_traj.dt * np.arange(len(speeds)),
        xy[:, 0],
        xy[:, 1],
        geometry.smooth_heading_at(stations),
        np.maximum(speeds, 0.0),
        accels,
        curvature,
        start_time=ego.timestamp,
    )


def cold_start_previous(
    traj: Trajectory, corridor: DrivableCorridor, margin: float = 0.0
) -> Trajectory:
    """``traj`` with its lateral offsets clamped into the corridor shrunk by
    ``margin``; stations narrower than twice the margin use their middle"""
    s, d, _ = project_points(corridor.reference, traj.xy)
    left, right = corridor.limits_at(s)
    upper = left - margin
    lower = right + margin
    narrow = lower > upper
    middle = 0.5 * (left + right)
    clamped = np.clip(
        d, np.where(narrow, middle, lower), np.where(narrow, middle, upper)
    )
    xy = corridor.reference.offset_points(s, clamped)
    return trajectory_from_positions(
        xy,
        traj.dt,
        speeds=traj.speed,
        initial_heading=float(traj.heading[0]),
        start_time=traj.start_time,
    )


def _upcoming(traj: Trajectory, now: float) -> Trajectory:
    """Points of ``traj`` from ``now`` on, at least the last two"""
    first = int(round((now - traj.start_time) / traj.dt))
    first = min(max(first, 0), len(traj) - 2)
    if first == 0:
        return traj
    return Trajectory(
        traj.t[first:],
        traj.x[first:],
        traj.y[first:],
        traj.heading[first:],
        traj.speed[first:],
        traj.accel[first:],
        traj.curvature[first:],
        start_time=traj.start_time,
    )


def _corridor_exit(traj: Trajectory, corridor: DrivableCorridor) -> Optional[float]:
    s, d, _ = project_points(corridor.reference, traj.xy)
    inside = corridor.contains(s, d)
    if np.all(inside):
        return None
    return float(traj.t[np.argmin(inside)])


def _difference_rows(order: int, n: int, history: Sequence[float]):
    """Forward differences of ``[history..., delta_0..delta_{n-1}]`` as
    ``rows @ delta + offsets``"""
    stencil = np.diff(np.eye(order + 1), n=order, axis=0)[0]
    known = len(history)
    extended = np.zeros((known + n, n))
    extended[known:] = np.eye(n)
    constant = np.concatenate([np.asarray(history, dtype=float), np.zeros(n)])
    count = known + n - order
    if count <= 0:
        return np.zeros((0, n)), np.zeros(0)
    rows = sum(c * extended[j : j + count] for j, c in enumerate(stencil))
    offsets = sum(c * constant[j : j + count] for j, c in enumerate(stencil))
    return rows, offsets


def _assemble(
    reference: Trajectory,
    ego: EgoState,
    bounds: DrivableCorridor,
    prev_steering: np.ndarray,
    history: Sequence[float],
    pinned: int,
    cfg: MptConfig,
) -> QpProblem:
    n = cfg.horizon_points
    # ego error with respect to the first reference point
    tangent = float(reference.heading[0])
    dx, dy = ego.pose.x - reference.x[0], ego.pose.y - reference.y[0]
    initial = ErrorState(
        math.cos(tangent) * dy - math.sin(tangent) * dx,
        normalize_angle(ego.pose.heading - tangent),
    )
    dynamics = linearize_error_dynamics(reference, cfg)
    gy, ey, gt, et = stack_error_dynamics(dynamics, initial)

    w = cfg.weights
    hessian_delta = 2.0 * (w.w_y * gy.T @ gy + w.w_theta * gt.T @ gt)
    linear_delta = 2.0 * (w.w_y * gy.T @ ey + w.w_theta * gt.T @ et)
    constant = w.w_y * ey @ ey + w.w_theta * et @ et
    hessian_delta += 2.0 * w.w_delta * np.eye(n)
    for order, weight in ((1, w.w_delta_rate), (2, w.w_delta_accel)):
        if weight == 0.0:
            continue
        rows, offsets = _difference_rows(order, n, history)
        scale = weight / cfg.dt ** (2 * order)
        hessian_delta += 2.0 * scale * rows.T @ rows
        linear_delta += 2.0 * scale * rows.T @ offsets
        constant += scale * offsets @ offsets

    size = 2 * n
    hessian = np.zeros((size, size))
    hessian[:n, :n] = hessian_delta
    hessian[n:, n:] = 2.0 * cfg.slack_penalty * np.eye(n)
    linear = np.concatenate([linear_delta, np.zeros(n)])

    a_eq = np.zeros((pinned, size))
    a_eq[np.arange(pinned), np.arange(pinned)] = 1.0
    b_eq = prev_steering[:pinned]

    s_ref, d_ref, segment = project_points(bounds.reference, reference.xy)
    gain = np.cos(
        reference.heading - bounds.reference.segment_headings[segment]
    )
    left, right = bounds.limits_at(s_ref)
    upper = left - cfg.corridor_margin
    lower = right + cfg.corridor_margin
    narrow = lower > upper
    middle = 0.5 * (left + right)
    upper = np.where(narrow, middle, upper)
    lower = np.where(narrow, middle, lower)

    # rear-axle offset from the corridor reference, affine in delta
    offset_rows = gain[1:, None] * gy[1:]
    offset_base = d_ref[1:] + gain[1:] * ey[1:]
    slack = np.eye(n)
    steer_rows = np.hstack([np.eye(n), np.zeros((n, n))])
    keep_right = np.hstack([offset_rows, slack])
    keep_left = np.hstack([offset_rows, -slack])
    slack_rows = np.hstack([np.zeros((n, n)), np.eye(n)])
    a_in = np.vstack([steer_rows, keep_right, keep_left, slack_rows])
    lb = np.concatenate(
        [
            np.full(n, -cfg.delta_max),
            lower[1:] - offset_base,
            np.full(n, -np.inf),
            np.zeros(n),
        ]
    )
    ub = np.concatenate(
        [
            np.full(n, cfg.delta_max),
            np.full(n, np.inf),
            upper[1:] - offset_base,
            np.full(n, np.inf),
        ]
    )
    return QpProblem(
        hessian=hessian,
        linear=linear,
        a_eq=a_eq,
        b_eq=b_eq,
        a_in=a_in,
        lb=lb,
        ub=ub,
        constant=constant,
        layout={"steering": [0, n], "slack": [n, size], "pinned": pinned},
    )


def setup_qp(
    nn_traj: Trajectory,
    corridor: DrivableCorridor,
    ego: EgoState,
    prev: Optional[Trajectory],
    cfg: MptConfig,
    *,
    speeds=None,
    accels=None,
    planner_path: Union[Trajectory, Polyline, None] = None,
    constraint_corridor: Optional[DrivableCorridor] = None,
    fallback: Optional[Trajectory] = None,
) -> QpSetup:
    """Reference, time-aligned previous steering and the assembled problem

    The reference follows ``nn_traj`` clamped into the constraint corridor.
    Without a usable previous trajectory, either none given or one leaving
    ``corridor``, ``fallback`` (default ``nn_traj``) clamped into the
    constraint corridor takes its place and no steering is pinned.

    :param speeds: Speed plan with ``horizon_points + 1`` entries, default is
        the speeds of ``nn_traj``
    :param constraint_corridor: Corridor for the inequality rows, default is
        ``corridor``
    :param fallback: Trajectory the cold start previous plan is built from,
        usually the selected planner candidate
    """
    n = cfg.horizon_points
    if speeds is None:
        speeds = nn_traj.speed
        accels = nn_traj.accel
    speeds = np.asarray(speeds, dtype=float)
    if len(nn_traj) < n + 1 or len(speeds) < n + 1:
        raise CorridorMismatchError(
            "trajectory has %d points and %d speeds, expect %d"
            % (len(nn_traj), len(speeds), n + 1)
        )
    if abs(nn_traj.dt - cfg.dt) > 1e-9:
        raise CorridorMismatchError(
            "trajectory dt %r differs from mpt dt %r" % (nn_traj.dt, cfg.dt)
        )
    _, ego_offset, _ = project_points(corridor.reference, [(ego.pose.x, ego.pose.y)])
    reach = max(np.max(corridor.left_limit), -np.min(corridor.right_limit)) + 5.0
    if abs(ego_offset[0]) > reach:
        raise CorridorMismatchError(
            "ego is %.2f m away from the corridor reference" % abs(ego_offset[0])
        )
    bounds = constraint_corridor or corridor
    if accels is not None:
        accels = np.asarray(accels, dtype=float)[: n + 1]
    reference = build_reference(
        cold_start_previous(nn_traj, bounds, cfg.corridor_margin),
        speeds[: n + 1],
        ego,
        planner_path=planner_path,
        accels=accels,
    )

    if prev is not None:
        exit_time = _corridor_exit(_upcoming(prev, ego.timestamp), corridor)
        if exit_time is not None:
            logger.warning(
                "previous trajectory leaves the corridor at %.1f s, replanning "
                "from the planner path",
                exit_time,
            )
            prev = None
    if prev is None:
        seed = fallback if fallback is not None else nn_traj
        prev = cold_start_previous(seed, bounds, cfg.corridor_margin)
        prev_steering, _ = _aligned_steering(prev, prev.start_time, cfg)
        history = ()
        pinned = 0
    else:
        prev_steering, history = _aligned_steering(prev, ego.timestamp, cfg)
        pinned = cfg.n_fix + 1

    problem = _assemble(reference, ego, bounds, prev_steering, history, pinned, cfg)
    return QpSetup(problem, reference, prev, prev_steering, pinned, history, bounds)


def assemble_qp(
    nn_traj: Trajectory,
    corridor: DrivableCorridor,
    ego: EgoState,
    prev: Optional[Trajectory],
    cfg: MptConfig,
    **kwargs,
) -> QpProblem:
    """Quadratic program over ``[delta_0..delta_{n-1}, slack_1..slack_n]``"""
    return setup_qp(nn_traj, corridor, ego, prev, cfg, **kwargs).problem


def _violation(
    traj: Trajectory,
    corridor: DrivableCorridor,
    obstacles: Sequence,
    forecasts,
    footprint: Footprint,
) -> Optional[str]:
    rectangles = footprint_polygons(traj.x, traj.y, traj.heading, footprint)
    for index, obstacle in enumerate(obstacles):
        hit = footprints_hit_polygon(rectangles, obstacle)
        if hit.any():
            return "collision with obstacle %d at %.1f s" % (
                index,
                traj.t[np.argmax(hit)],
            )
    for index, track in enumerate(forecasts or ()):
        steps = min(len(track), len(rectangles))
        hit = footprints_hit_track(rectangles[:steps], track[:steps])
        if hit.any():
            return "collision with agent %d at %.1f s" % (
                index,
                traj.t[np.argmax(hit)],
            )
    exit_time = _corridor_exit(traj, corridor)
    if exit_time is not None:
        return "corridor left at %.1f s" % exit_time
    return None


def _shift_blocks(values: np.ndarray, blocks: int, shift: int) -> np.ndarray:
    """Advance each of ``blocks`` equal parts by ``shift`` entries, repeating
    the last one"""
    parts = np.asarray(values, dtype=float).reshape(blocks, -1)
    index = np.minimum(np.arange(parts.shape[1]) + shift, parts.shape[1] - 1)
    return parts[:, index].reshape(-1)


def _warm_start(
    previous: Optional[MptResult], ego: EgoState, problem: QpProblem, cfg: MptConfig
) -> dict:
    if previous is None or previous.qp_solution is None or previous.reference is None:
        return {}
    solution = previous.qp_solution
    if len(solution.x) != problem.size or len(solution.y_in) != len(problem.lb):
        return {}
    shift = max(int(round((ego.timestamp - previous.reference.start_time) / cfg.dt)), 0)
    return {
        "x0": _shift_blocks(solution.x, 2, shift),
        "y0": _shift_blocks(solution.y_in, 4, shift),
    }


def _rollout(
    steering: np.ndarray, reference: Trajectory, ego: EgoState, cfg: MptConfig
) -> Trajectory:
    x, y, heading = rollout_bicycle(
        ego.pose, reference.speed, steering, cfg.dt, cfg.wheelbase
    )
    curvature = np.tan(steering) / cfg.wheelbase
    return Trajectory(
        reference.t,
        x,
        y,
        heading,
        reference.speed,
        reference.accel,
        np.append(curvature, curvature[-1]),
        start_time=ego.timestamp,
    )


def optimize_trajectory(
    nn_traj: Trajectory,
    corridor: DrivableCorridor,
    obstacles: Sequence,
    ego: EgoState,
    prev: Optional[Trajectory],
    cfg: MptConfig,
    *,
    cruise=None,
    speeds=None,
    forecasts=None,
    planner_path: Union[Trajectory, Polyline, None] = None,
    fallback: Optional[Trajectory] = None,
    warm_start: Optional[MptResult] = None,
) -> MptResult:
    """Refine ``nn_traj`` into a feasible trajectory or fall back to the
    previous plan

    A rollout that leaves the corridor is used as the reference of up to
    ``cfg.relinearize_passes`` further solves.

    :param cruise: :class:`~hybridplan.cruise.CruiseProfile` providing the
        speed plan
    :param speeds: Explicit speed plan, used when ``cruise`` is ``None``
    :param forecasts: Agent tracks for the collision post-check
    :param fallback: Planner trajectory replacing a missing or
        corridor-leaving ``prev``
    :param warm_start: Result of the previous cycle, its solution seeds the
        solver
    """
    accels = None
    if cruise is not None:
        speeds, accels = cruise.speeds, cruise.accels
    elif speeds is None:
        speeds, accels = nn_traj.speed, nn_traj.accel
    carved = corridor.carve(obstacles, cfg.footprint) if obstacles else corridor
    setup = setup_qp(
        nn_traj,
        corridor,
        ego,
        prev,
        cfg,
        speeds=speeds,
        accels=accels,
        planner_path=planner_path,
        constraint_corridor=carved,
        fallback=fallback,
    )
    n = cfg.horizon_points

    def fall_back(reason: str, solution=None, steering=None) -> MptResult:
        logger.warning("mpt falls back to previous trajectory: %s", reason)
        return MptResult(
            trajectory=setup.prev,
            used_fallback=True,
            objective_value=math.nan if solution is None else solution.objective,
            kkt_residual=math.nan if solution is None else solution.kkt_residual,
            steering=steering,
            prev_steering=setup.prev_steering,
            pinned=setup.pinned,
            reason=reason,
            reference=setup.reference,
        )

    problem, reference = setup.problem, setup.reference
    seed = _warm_start(warm_start, ego, problem, cfg)
    attempt = 0
    while True:
        if cfg.debug_dump_dir:
            dump_problem(problem, cfg.debug_dump_dir, "mpt")
        try:
            solution = solve_qp(
                problem,
                kkt_tol=cfg.kkt_tol,
                max_iterations=cfg.max_iterations,
                **seed,
            )
        except (QpNotConvergedError, QpInfeasibleError) as error:
            return fall_back(str(error))
        steering = np.clip(solution.x[:n].copy(), -cfg.delta_max, cfg.delta_max)
        steering[: setup.pinned] = setup.prev_steering[: setup.pinned]
        trajectory = _rollout(steering, reference, ego, cfg)
        reason = _violation(trajectory, corridor, obstacles, forecasts, cfg.footprint)
        if reason is None:
            return MptResult(
                trajectory=trajectory,
                used_fallback=False,
                objective_value=solution.objective,
                kkt_residual=solution.kkt_residual,
                steering=steering,
                prev_steering=setup.prev_steering,
                pinned=setup.pinned,
                reference=reference,
                qp_solution=solution,
            )
        if not reason.startswith("corridor left") or attempt >= cfg.relinearize_passes:
            return fall_back(reason, solution, steering)
        attempt += 1
        logger.debug("relinearizing around the rollout: %s", reason)
        reference = trajectory
        problem = _assemble(
            reference,
            ego,
            setup.bounds,
            setup.prev_steering,
            setup.history,
            setup.pinned,
            cfg,
        )
        seed = {"x0": solution.x, "y0": solution.y_in}
