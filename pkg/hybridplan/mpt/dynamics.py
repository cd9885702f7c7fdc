"""Linearized kinematic bicycle in path coordinates

    y[k+1]     = y[k] + v[k] dt theta[k]
    theta[k+1] = theta[k] + v[k] dt / L delta[k] - v[k] dt kappa[k]

``y`` is the lateral error (left positive) and ``theta`` the heading error
with respect to the reference trajectory.
"""

import math
from dataclasses import dataclass
from logging import getLogger as get_logger
from typing import Tuple

import numpy as np

from hybridplan.errors import CorridorMismatchError
from hybridplan.geometry import Pose2D, Trajectory

__all__ = [
    "ErrorDynamics",
    "ErrorState",
    "linearize_error_dynamics",
    "rollout_bicycle",
    "rollout_linear",
    "stack_error_dynamics",
]

logger = get_logger(__name__)


@dataclass(frozen=True)
class ErrorState:
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.y) and math.isfinite(self.theta)):
            raise CorridorMismatchError("error state not finite: %r" % (self,))


@dataclass(frozen=True)
class ErrorDynamics:
    """Per-step ``state[k+1] = transition[k] @ state[k] + control[k] * delta[k]
    + drift[k]``"""

    transition: np.ndarray
    control: np.ndarray
    drift: np.ndarray
    speeds: np.ndarray
    dt: float

    def __len__(self) -> int:
        return len(self.control)


def linearize_error_dynamics(reference: Trajectory, cfg) -> ErrorDynamics:
    """Transition matrices for the first ``cfg.horizon_points`` steps

    Speeds below ``cfg.min_speed`` are floored.
    """
    n = cfg.horizon_points
    if len(reference) < n:
        raise CorridorMismatchError(
            "reference has %d points, expect at least %d" % (len(reference), n)
        )
    speeds = np.array(reference.speed[:n], dtype=float)
    slow = speeds < cfg.min_speed
    if slow.any():
        logger.warning(
            "reference speed floored at %.2f m/s on %d of %d steps",
            cfg.min_speed,
            int(slow.sum()),
            n,
        )
        speeds[slow] = cfg.min_speed
    step = speeds * cfg.dt
    transition = np.tile(np.eye(2), (n, 1, 1))
    transition[:, 0, 1] = step
    control = np.zeros((n, 2))
    control[:, 1] = step / cfg.wheelbase
    drift = np.zeros((n, 2))
    drift[:, 1] = -step * reference.curvature[:n]
    return ErrorDynamics(transition, control, drift, speeds, cfg.dt)


def stack_error_dynamics(
    dynamics: ErrorDynamics, initial: ErrorState
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Affine maps from the steering sequence to every error state

    :returns: ``(gy, ey, gt, et)`` with ``y = gy @ delta + ey`` and
        ``theta = gt @ delta + et``, one row per state 0..n
    """
    n = len(dynamics)
    gain = np.zeros((n + 1, 2, n))
    offset = np.zeros((n + 1, 2))
    offset[0] = (initial.y, initial.theta)
    for k in range(n):
        gain[k + 1] = dynamics.transition[k] @ gain[k]
        gain[k + 1, :, k] += dynamics.control[k]
        offset[k + 1] = dynamics.transition[k] @ offset[k] + dynamics.drift[k]
    return gain[:, 0], offset[:, 0], gain[:, 1], offset[:, 1]


def rollout_linear(
    dynamics: ErrorDynamics, initial: ErrorState, deltas
) -> Tuple[np.ndarray, np.ndarray]:
    state = np.array([initial.y, initial.theta])
    states = [state]
    for k, delta in enumerate(np.asarray(deltas, dtype=float)):
        state = (
            dynamics.transition[k] @ state
            + dynamics.control[k] * delta
            + dynamics.drift[k]
        )
        states.append(state)
    states = np.array(states)
    return states[:, 0], states[:, 1]


def rollout_bicycle(
    start: Pose2D, speeds, deltas, dt: float, wheelbase: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate the kinematic bicycle with trapezoidal travel and midpoint
    heading per step

    :param speeds: n + 1 speeds
    :param deltas: n steering angles
    :returns: x, y, heading with n + 1 entries each
    """
    speeds = np.asarray(speeds, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    travel = 0.5 * (speeds[:-1] + speeds[1:]) * dt
    turn = travel * np.tan(deltas) / wheelbase
    heading = start.heading + np.concatenate([[0.0], np.cumsum(turn)])
    middle = heading[:-1] + 0.5 * turn
    x = start.x + np.concatenate([[0.0], np.cumsum(travel * np.cos(middle))])
    y = start.y + np.concatenate([[0.0], np.cumsum(travel * np.sin(middle))])
    return x, y, heading
