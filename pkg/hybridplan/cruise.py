"""Safe following distance and velocity smoothing behind a lead vehicle"""

from dataclasses import dataclass
from logging import getLogger as get_logger
from typing import Optional

import numpy as np

from hybridplan.errors import (
    InvalidParameterError,
    PlanningError,
    SingularDecelerationError,
)
from hybridplan.mpt.qp import QpProblem, solve_qp

__all__ = [
    "CruiseConfig",
    "CruiseProfile",
    "LeadState",
    "emergency_profile",
    "minimum_jerk_speed",
    "plan_cruise_profile",
    "safe_distance",
]

logger = get_logger(__name__)


@dataclass(frozen=True)
class CruiseConfig:
    t_idling: float = 1.0
    a_ego_brake: float = 3.0
    a_obstacle_brake: float = 3.0
    w_v: float = 1.0
    w_a: float = 1.0
    w_jerk: float = 0.5
    v_max: float = 15.0
    a_min: float = -4.0
    a_max: float = 2.0
    sqp_passes: int = 2
    d_min: float = 2.0
    gap_margin: float = 0.5
    kkt_tol: float = 1e-6
    max_iterations: int = 2000

    def __post_init__(self):
        if self.t_idling < 0.0:
            raise InvalidParameterError("t_idling must be >= 0: %r" % self.t_idling)
        if not self.a_min < 0.0 < self.a_max:
            raise InvalidParameterError(
                "expect a_min < 0 < a_max, got %r, %r" % (self.a_min, self.a_max)
            )
        if min(self.w_v, self.w_a, self.w_jerk) < 0.0:
            raise InvalidParameterError("cruise weights must be >= 0")
        if self.sqp_passes < 1:
            raise InvalidParameterError("sqp_passes must be >= 1")


@dataclass(frozen=True)
class LeadState:
    """Vehicle ahead: bumper-to-bumper gap along the path and its speed"""

    gap: float
    speed: float

    def __post_init__(self):
        if self.gap < 0.0:
            raise InvalidParameterError("lead gap must be >= 0: %r" % self.gap)


@dataclass(frozen=True)
class CruiseProfile:
    """``speeds`` has one entry more than ``accels``; speeds[0] is the
    current speed"""

    speeds: np.ndarray
    accels: np.ndarray
    dt: float
    objective: float = 0.0
    emergency: bool = False
    reference_speeds: Optional[np.ndarray] = None

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.speeds))

    def positions(self) -> np.ndarray:
        steps = 0.5 * (self.speeds[:-1] + self.speeds[1:]) * self.dt
        return np.concatenate([[0.0], np.cumsum(steps)])


def safe_distance(v_ego: float, v_obstacle: float, cfg: CruiseConfig) -> float:
    """Idling distance plus own stopping distance minus the obstacle's,
    floored at ``cfg.d_min``

    Both braking values are deceleration magnitudes.
    """
    if cfg.a_ego_brake == 0.0 or cfg.a_obstacle_brake == 0.0:
        raise SingularDecelerationError(
            "singular deceleration: a_ego_brake=%r, a_obstacle_brake=%r"
            % (cfg.a_ego_brake, cfg.a_obstacle_brake)
        )
    if cfg.a_ego_brake < 0.0 or cfg.a_obstacle_brake < 0.0:
        raise InvalidParameterError("braking magnitudes must be positive")
    if v_ego < 0.0 or v_obstacle < 0.0:
        raise InvalidParameterError(
            "speeds must be >= 0: v_ego=%r, v_obstacle=%r" % (v_ego, v_obstacle)
        )
    t = cfg.t_idling
    raw = (
        v_ego * t
        + 0.5 * cfg.a_ego_brake * t * t
        + v_ego * v_ego / (2.0 * cfg.a_ego_brake)
        - v_obstacle * v_obstacle / (2.0 * cfg.a_obstacle_brake)
    )
    return max(raw, cfg.d_min)


def minimum_jerk_speed(v0: float, v1: float, duration: float, t):
    """Quintic speed transition from ``v0`` to ``v1`` with zero acceleration
    at both ends"""
    tau = np.clip(np.asarray(t, dtype=float) / duration, 0.0, 1.0)
    return v0 + (v1 - v0) * (10.0 * tau**3 - 15.0 * tau**4 + 6.0 * tau**5)


def emergency_profile(v0: float, horizon_points: int, dt: float, a_min: float):
    """Brake at ``a_min`` until standstill"""
    speeds = np.empty(horizon_points + 1)
    speeds[0] = v0
    for k in range(horizon_points):
        speeds[k + 1] = max(0.0, speeds[k] + a_min * dt)
    return CruiseProfile(
        speeds=speeds, accels=np.diff(speeds) / dt, dt=dt, emergency=True
    )


def _gap_bounds(lead: LeadState, v_hat: np.ndarray, dt: float, cfg: CruiseConfig):
    """Upper bounds on ego travel for steps 1..N"""
    t = dt * np.arange(1, len(v_hat) + 1)
    required = np.array([safe_distance(v, lead.speed, cfg) for v in v_hat])
    return lead.gap + lead.speed * t - required - cfg.gap_margin


def plan_cruise_profile(
    v0: float,
    lead: Optional[LeadState],
    v_desired: float,
    horizon_points: int,
    dt: float,
    cfg: CruiseConfig,
    *,
    a0: float = 0.0,
) -> CruiseProfile:
    """Smooth speed plan over ``horizon_points`` steps

    The decision variables are the accelerations. Each pass bounds the ego
    travel by the gap minus the safe distance evaluated at the previous
    pass's speeds.

    :param a0: Current acceleration, anchors the jerk term
    """
    if v0 < 0.0:
        raise InvalidParameterError("v0 must be >= 0: %r" % v0)
    if v_desired > cfg.v_max + 1e-9:
        raise InvalidParameterError(
            "v_desired %r exceeds v_max %r" % (v_desired, cfg.v_max)
        )
    if horizon_points < 1 or dt <= 0.0:
        raise InvalidParameterError("invalid horizon: %r x %r" % (horizon_points, dt))
    n = horizon_points
    if lead is not None and lead.gap < safe_distance(v0, lead.speed, cfg):
        logger.warning(
            "gap %.2f m below safe distance, emergency braking", lead.gap
        )
        return emergency_profile(v0, n, dt, cfg.a_min)

    speed_map = dt * np.tril(np.ones((n, n)))
    k = np.arange(1, n + 1)[:, None]
    j = np.arange(n)[None, :]
    travel_map = np.where(j < k, dt * dt * (k - j - 0.5), 0.0)
    travel_base = dt * v0 * np.arange(1, n + 1)
    diff = np.eye(n) - np.eye(n, k=-1)
    jerk_weight = cfg.w_jerk / (dt * dt)
    gap_residual = v_desired - v0

    hessian = 2.0 * (
        cfg.w_v * speed_map.T @ speed_map
        + cfg.w_a * np.eye(n)
        + jerk_weight * diff.T @ diff
    )
    linear = -2.0 * cfg.w_v * gap_residual * speed_map.sum(axis=0)
    linear[0] -= 2.0 * jerk_weight * a0
    constant = cfg.w_v * n * gap_residual**2 + jerk_weight * a0 * a0

    rows = [speed_map, np.eye(n)]
    lower = [np.full(n, -v0), np.full(n, cfg.a_min)]
    upper = [np.full(n, cfg.v_max - v0), np.full(n, cfg.a_max)]
    emergency = emergency_profile(v0, n, dt, cfg.a_min)
    v_hat = np.full(n, v0)
    accels = None
    objective = 0.0
    for _ in range(cfg.sqp_passes if lead is not None else 1):
        pass_rows, pass_lower, pass_upper = list(rows), list(lower), list(upper)
        if lead is not None:
            bound = _gap_bounds(lead, v_hat, dt, cfg)
            if np.any(emergency.positions()[1:] > bound + 1e-9):
                logger.warning("cruise problem infeasible, emergency braking")
                return emergency
            pass_rows.append(travel_map)
            pass_lower.append(np.full(n, -np.inf))
            pass_upper.append(bound - travel_base)
        problem = QpProblem(
            hessian=hessian,
            linear=linear,
            a_in=np.vstack(pass_rows),
            lb=np.concatenate(pass_lower),
            ub=np.concatenate(pass_upper),
            constant=constant,
        )
        try:
            solution = solve_qp(
                problem, kkt_tol=cfg.kkt_tol, max_iterations=cfg.max_iterations
            )
        except PlanningError as error:
            logger.warning("cruise qp failed, emergency braking: %s", error)
            return emergency
        accels = solution.x
        objective = solution.objective
        v_prev = v_hat
        v_hat = np.maximum(v0 + speed_map @ accels, 0.0)
    speeds = np.concatenate([[v0], np.maximum(v0 + speed_map @ accels, 0.0)])
    return CruiseProfile(
        speeds=speeds,
        accels=np.diff(speeds) / dt,
        dt=dt,
        objective=objective,
        reference_speeds=v_prev if lead is not None else None,
    )

