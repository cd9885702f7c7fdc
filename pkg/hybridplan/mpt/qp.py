"""Dense convex quadratic programs

    minimize    1/2 x' H x + f' x + const
    subject to  A_eq x  = b_eq
                lb <= A_in x <= ub

Multipliers follow the operator-splitting convention: ``H x + f + A' y = 0``
with ``y >= 0`` on rows resting on their upper bound and ``y <= 0`` on rows
resting on their lower bound.
"""

import math
import time
from dataclasses import dataclass, field
from logging import getLogger as get_logger
from typing import Optional, Tuple

import numpy as np
from megfile import smart_open
from scipy import linalg

import hybridplan.utils.compat_json as json
from hybridplan.errors import (
    InvalidParameterError,
    QpInfeasibleError,
    QpNotConvergedError,
)

__all__ = [
    "QpProblem",
    "QpSolution",
    "dump_problem",
    "load_problem",
    "solve_qp",
]

logger = get_logger(__name__)

SYMMETRY_TOLERANCE = 1e-12
FEASIBILITY_TOLERANCE = 1e-6
ACTIVATION_TOLERANCE = 1e-9
ADMM_CHUNK = 25
MAX_REFINE_STEPS = 10
SCALING_ITERATIONS = 15
MIN_SCALING = 1e-4
MAX_SCALING = 1e4
RHO_MIN = 1e-6
RHO_MAX = 1e6
RHO_EQUALITY_GAP = 1e-4
RHO_EQUALITY_SCALE = 1e3
RHO_UPDATE_RATIO = 5.0
MAX_RHO_UPDATES = 10
POLISH_DELTA = 1e-9
POLISH_REFINE_STEPS = 3


def _matrix(value, cols: int, name: str) -> np.ndarray:
    if value is None or np.size(value) == 0:
        return np.zeros((0, cols))
    value = np.array(value, dtype=float).reshape(-1, cols)
    if not np.all(np.isfinite(value)):
        raise InvalidParameterError("qp %s is not finite" % name)
    return value


def _vector(value, size: int, name: str, fill: float = 0.0) -> np.ndarray:
    if value is None:
        return np.full(size, fill)
    value = np.array(value, dtype=float).reshape(-1)
    if value.shape != (size,):
        raise InvalidParameterError(
            "qp %s has shape %r, expect (%d,)" % (name, value.shape, size)
        )
    return value


@dataclass(frozen=True)
class QpProblem:
    hessian: np.ndarray
    linear: np.ndarray
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    a_in: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    constant: float = 0.0
    layout: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        hessian = np.array(self.hessian, dtype=float)
        if hessian.ndim != 2 or hessian.shape[0] != hessian.shape[1]:
            raise InvalidParameterError(
                "qp hessian must be square, got %r" % (hessian.shape,)
            )
        n = hessian.shape[0]
        if not np.all(np.isfinite(hessian)):
            raise InvalidParameterError("qp hessian is not finite")
        asymmetry = float(np.max(np.abs(hessian - hessian.T))) if n else 0.0
        if asymmetry > SYMMETRY_TOLERANCE * max(1.0, float(np.max(np.abs(hessian)))):
            raise InvalidParameterError("qp hessian not symmetric: %g" % asymmetry)
        hessian = 0.5 * (hessian + hessian.T)
        a_eq = _matrix(self.a_eq, n, "a_eq")
        a_in = _matrix(self.a_in, n, "a_in")
        values = {
            "hessian": hessian,
            "linear": _vector(self.linear, n, "linear"),
            "a_eq": a_eq,
            "b_eq": _vector(self.b_eq, len(a_eq), "b_eq"),
            "a_in": a_in,
            "lb": _vector(self.lb, len(a_in), "lb", -np.inf),
            "ub": _vector(self.ub, len(a_in), "ub", np.inf),
        }
        for name, value in values.items():
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "constant", float(self.constant))
        if np.any(self.lb > self.ub):
            raise QpInfeasibleError("infeasible: lower bound above upper bound")

    @property
    def size(self) -> int:
        return len(self.linear)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.hessian @ x + self.linear @ x + self.constant)

    def gradient(self, x) -> np.ndarray:
        return self.hessian @ np.asarray(x, dtype=float) + self.linear

    def constraint_rows(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All rows stacked as ``l <= C x <= u``, equalities first"""
        rows = np.vstack([self.a_eq, self.a_in])
        lower = np.concatenate([self.b_eq, self.lb])
        upper = np.concatenate([self.b_eq, self.ub])
        return rows, lower, upper

    def to_dict(self) -> dict:
        def bound(values):
            return [None if math.isinf(v) else float(v) for v in values]

        return {
            "hessian": self.hessian,
            "linear": self.linear,
            "constant": self.constant,
            "a_eq": self.a_eq,
            "b_eq": self.b_eq,
            "a_in": self.a_in,
            "lb": bound(self.lb),
            "ub": bound(self.ub),
            "layout": self.layout,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QpProblem":
        def bound(values, fill):
            return [fill if v is None else v for v in values]

        return cls(
            hessian=data["hessian"],
            linear=data["linear"],
            a_eq=data.get("a_eq"),
            b_eq=data.get("b_eq"),
            a_in=data.get("a_in"),
            lb=bound(data.get("lb", []), -np.inf),
            ub=bound(data.get("ub", []), np.inf),
            constant=data.get("constant", 0.0),
            layout=data.get("layout", {}),
        )


def dump_problem(problem: QpProblem, directory: str, tag: str = "qp") -> str:
    """Write a problem as json for offline solver cross-checks

    :returns: the written path
    """
    path = "%s/%s-%d.json" % (directory.rstrip("/"), tag, time.time_ns())
    with smart_open(path, "wb") as fp:
        fp.write(json.dumps(problem.to_dict()))
    return path


def load_problem(path: str) -> QpProblem:
    with smart_open(path, "rb") as fp:
        return QpProblem.from_dict(json.loads(fp.read()))


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    y_eq: np.ndarray
    y_in: np.ndarray
    kkt_residual: float
    iterations: int
    objective: float


def kkt_residual(problem: QpProblem, x, y_eq, y_in) -> float:
    """Largest violation among scaled stationarity, primal feasibility,
    dual sign and complementary slackness"""
    x = np.asarray(x, dtype=float)
    hx = problem.hessian @ x
    aty = problem.a_eq.T @ y_eq + problem.a_in.T @ y_in
    scale = 1.0 + max(
        float(np.max(np.abs(hx), initial=0.0)),
        float(np.max(np.abs(problem.linear), initial=0.0)),
        float(np.max(np.abs(aty), initial=0.0)),
    )
    stationarity = float(np.max(np.abs(hx + problem.linear + aty), initial=0.0))
    residual = stationarity / scale
    if len(problem.b_eq):
        residual = max(
            residual, float(np.max(np.abs(problem.a_eq @ x - problem.b_eq)))
        )
    if len(problem.lb):
        value = problem.a_in @ x
        residual = max(
            residual,
            float(np.max(problem.lb - value, initial=0.0)),
            float(np.max(value - problem.ub, initial=0.0)),
        )
        upper_gap = np.where(np.isfinite(problem.ub), problem.ub - value, np.inf)
        lower_gap = np.where(np.isfinite(problem.lb), value - problem.lb, np.inf)
        positive = np.maximum(y_in, 0.0)
        negative = np.maximum(-y_in, 0.0)
        # a multiplier pushing against an infinite bound is a sign error
        sign_error = np.where(np.isinf(upper_gap), positive, 0.0) + np.where(
            np.isinf(lower_gap), negative, 0.0
        )
        complementarity = np.where(
            np.isfinite(upper_gap), positive * np.abs(upper_gap), 0.0
        ) + np.where(np.isfinite(lower_gap), negative * np.abs(lower_gap), 0.0)
        residual = max(
            residual,
            float(np.max(sign_error)) / scale,
            float(np.max(complementarity)) / scale,
        )
    return residual


def _solve_kkt(hessian, linear, rows, values) -> Tuple[np.ndarray, np.ndarray]:
    """Stationary point with ``rows x = values`` held exactly

    Dependent rows are tolerated through a small regularization that the
    refinement steps remove again.
    """
    n = len(linear)
    m = len(values)
    matrix = np.zeros((n + m, n + m))
    matrix[:n, :n] = hessian
    matrix[:n, n:] = rows.T
    matrix[n:, :n] = rows
    rhs = np.concatenate([-linear, values])
    regular = matrix.copy()
    regular[:n, :n] += POLISH_DELTA * np.eye(n)
    regular[n:, n:] -= POLISH_DELTA * np.eye(m)
    solution = None
    try:
        factor = linalg.lu_factor(regular, check_finite=False)
        solution = linalg.lu_solve(factor, rhs, check_finite=False)
        for _ in range(POLISH_REFINE_STEPS):
            correction = rhs - matrix @ solution
            solution = solution + linalg.lu_solve(
                factor, correction, check_finite=False
            )
    except (linalg.LinAlgError, ValueError):
        solution = None
    if solution is None or not np.all(np.isfinite(solution)):
        solution = np.linalg.lstsq(matrix, rhs, rcond=None)[0]
    return solution[:n], solution[n:]


def _limit(norms: np.ndarray) -> np.ndarray:
    norms = np.where(norms < MIN_SCALING, 1.0, norms)
    return np.minimum(norms, MAX_SCALING)


class _Scaling:
    """Ruiz equilibration of the KKT matrix and cost scaling

    The scaled problem has ``hessian = c D H D``, ``linear = c D f`` and
    ``rows = E C D``. A scaled point ``(xs, ys)`` maps back to
    ``x = D xs`` and ``y = E ys / c``.
    """

    def __init__(self, problem: QpProblem, iterations: int = SCALING_ITERATIONS):
        rows, lower, upper = problem.constraint_rows()
        hessian = problem.hessian.copy()
        linear = problem.linear.copy()
        d = np.ones(problem.size)
        e = np.ones(len(lower))
        cost = 1.0
        for _ in range(iterations):
            columns = np.maximum(
                np.max(np.abs(hessian), axis=0, initial=0.0),
                np.max(np.abs(rows), axis=0, initial=0.0),
            )
            d_step = 1.0 / np.sqrt(_limit(columns))
            e_step = 1.0 / np.sqrt(_limit(np.max(np.abs(rows), axis=1, initial=0.0)))
            hessian = d_step[:, None] * hessian * d_step[None, :]
            rows = e_step[:, None] * rows * d_step[None, :]
            linear = d_step * linear
            d *= d_step
            e *= e_step
            mean_column = np.mean(np.max(np.abs(hessian), axis=0, initial=0.0))
            largest = max(mean_column, np.max(np.abs(linear), initial=0.0))
            step = 1.0 / float(_limit(np.array([largest]))[0])
            hessian *= step
            linear *= step
            cost *= step
        self.hessian = 0.5 * (hessian + hessian.T)
        self.linear = linear
        self.rows = rows
        self.lower = e * lower
        self.upper = e * upper
        self.d = d
        self.e = e
        self.cost = cost

    def scale_point(self, x, y) -> Tuple[np.ndarray, np.ndarray]:
        return np.asarray(x) / self.d, np.asarray(y) * self.cost / self.e

    def unscale_point(self, xs, ys) -> Tuple[np.ndarray, np.ndarray]:
        return self.d * xs, self.e * ys / self.cost


class _ActiveSet:
    """Working set over the stacked rows ``l <= C x <= u`` of a scaled problem

    State per row: 0 free, 1 on upper bound, -1 on lower bound. Equality
    rows are always held.
    """

    def __init__(self, scaling: _Scaling, n_eq: int, tol: float):
        self.scaling = scaling
        self.rows = scaling.rows
        self.lower = scaling.lower
        self.upper = scaling.upper
        self.n_eq = n_eq
        self.tol = tol

    def solve(self, state: np.ndarray):
        held = state != 0
        target = np.where(state > 0, self.upper, self.lower)
        x, y_held = _solve_kkt(
            self.scaling.hessian,
            self.scaling.linear,
            self.rows[held],
            target[held],
        )
        y = np.zeros(len(state))
        y[held] = y_held
        return x, y

    def refine(self, state: np.ndarray, steps: int = MAX_REFINE_STEPS):
        """Add violated rows and release rows with wrong-signed multipliers
        until neither remains

        :returns: ``(x, y, state)`` or ``None`` when no fixed point is found
            within ``steps`` solves
        """
        state = state.copy()
        state[: self.n_eq] = 1
        state[(state > 0) & np.isinf(self.upper)] = 0
        state[(state < 0) & np.isinf(self.lower)] = 0
        seen = set()
        for _ in range(steps):
            x, y = self.solve(state)
            value = self.rows @ x
            scale = 1.0 + np.abs(value)
            above = (value - self.upper > ACTIVATION_TOLERANCE * scale) & (state == 0)
            below = (self.lower - value > ACTIVATION_TOLERANCE * scale) & (state == 0)
            ineq = np.arange(len(state)) >= self.n_eq
            y_scale = self.tol * (1.0 + float(np.max(np.abs(y), initial=0.0)))
            wrong = ineq & (
                ((state > 0) & (y < -y_scale)) | ((state < 0) & (y > y_scale))
            )
            if not (above.any() or below.any() or wrong.any()):
                return x, y, state
            key = state.tobytes()
            if key in seen:
                return None
            seen.add(key)
            state[above] = 1
            state[below] = -1
            state[wrong] = 0
        return None


def _check_equalities(problem: QpProblem):
    if not len(problem.b_eq):
        return
    x, *_ = np.linalg.lstsq(problem.a_eq, problem.b_eq, rcond=None)
    gap = float(np.max(np.abs(problem.a_eq @ x - problem.b_eq)))
    if gap > FEASIBILITY_TOLERANCE * (1.0 + float(np.max(np.abs(problem.b_eq)))):
        raise QpInfeasibleError("infeasible: equality constraints residual %g" % gap)


def _finish(
    problem: QpProblem, scaling: _Scaling, xs, ys, n_eq: int, iterations: int
) -> QpSolution:
    x, y = scaling.unscale_point(xs, ys)
    y_eq, y_in = y[:n_eq], y[n_eq:]
    return QpSolution(
        x=x,
        y_eq=y_eq,
        y_in=y_in,
        kkt_residual=kkt_residual(problem, x, y_eq, y_in),
        iterations=iterations,
        objective=problem.objective(x),
    )


def _row_rho(rho: float, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    rho_rows = np.full(len(lower), rho)
    rho_rows[np.abs(upper - lower) < RHO_EQUALITY_GAP] *= RHO_EQUALITY_SCALE
    rho_rows[np.isinf(lower) & np.isinf(upper)] = RHO_MIN
    return np.clip(rho_rows, RHO_MIN, RHO_MAX)


def _warm_state(y: np.ndarray, n_eq: int, tol: float) -> np.ndarray:
    state = np.zeros(len(y), dtype=int)
    state[y > tol] = 1
    state[y < -tol] = -1
    state[:n_eq] = 1
    return state


def solve_qp(
    problem: QpProblem,
    *,
    kkt_tol: float = 1e-6,
    max_iterations: int = 2000,
    rho: float = 0.1,
    sigma: float = 1e-6,
    alpha: float = 1.6,
    x0=None,
    y0=None,
) -> QpSolution:
    """Solve a convex QP to a KKT certificate

    The problem is equilibrated first. An active-set refinement seeded with
    the warm start, or with the equality rows alone, runs next. When it
    stalls, operator-splitting iterations with adaptive ``rho`` estimate the
    active set in chunks, and each new estimate is polished by the same
    refinement.

    :param kkt_tol: Bound on :func:`kkt_residual` of the returned point
    :param max_iterations: Budget of operator-splitting iterations
    :param x0: Primal warm start
    :param y0: Warm start of the inequality multipliers
    :raises QpInfeasibleError: Equalities or bounds admit no point
    :raises QpNotConvergedError: No certified point within the budget
    """
    _check_equalities(problem)
    scaling = _Scaling(problem)
    n_eq = len(problem.b_eq)
    active = _ActiveSet(scaling, n_eq, kkt_tol)
    rows, lower, upper = active.rows, active.lower, active.upper
    n_rows = len(lower)
    n = problem.size

    x = np.zeros(n)
    y = np.zeros(n_rows)
    if x0 is not None:
        x = _vector(x0, n, "x0")
    if y0 is not None:
        y[n_eq:] = _vector(y0, n_rows - n_eq, "y0")
    x, y = scaling.scale_point(x, y)

    best: Optional[QpSolution] = None
    tried = set()

    def polish(state: np.ndarray, iterations: int) -> Optional[QpSolution]:
        nonlocal best
        key = state.tobytes()
        if key in tried:
            return None
        tried.add(key)
        refined = active.refine(state)
        if refined is None:
            return None
        solution = _finish(problem, scaling, refined[0], refined[1], n_eq, iterations)
        if solution.kkt_residual <= kkt_tol:
            return solution
        if best is None or solution.kkt_residual < best.kkt_residual:
            best = solution
        return None

    solution = polish(_warm_state(y, n_eq, ACTIVATION_TOLERANCE), 0)
    if solution is not None:
        return solution

    rho_rows = _row_rho(rho, lower, upper)
    identity = sigma * np.eye(n)

    def factorize(rho_rows: np.ndarray):
        system = scaling.hessian + identity + rows.T @ (rho_rows[:, None] * rows)
        return linalg.cho_factor(system, check_finite=False)

    factor = factorize(rho_rows)
    z = np.clip(rows @ x, lower, upper)
    iterations = 0
    rho_updates = 0
    while iterations < max_iterations:
        for _ in range(ADMM_CHUNK):
            rhs = sigma * x - scaling.linear + rows.T @ (rho_rows * z - y)
            x_tilde = linalg.cho_solve(factor, rhs, check_finite=False)
            z_tilde = rows @ x_tilde
            x = alpha * x_tilde + (1.0 - alpha) * x
            relaxed = alpha * z_tilde + (1.0 - alpha) * z
            z_next = np.clip(relaxed + y / rho_rows, lower, upper)
            y = y + rho_rows * (relaxed - z_next)
            z = z_next
            iterations += 1

        state = np.zeros(n_rows, dtype=int)
        state[z - lower < -y] = -1
        state[upper - z < y] = 1
        solution = polish(state, iterations)
        if solution is not None:
            logger.debug(
                "qp solved after %d splitting iterations, %d rho updates",
                iterations,
                rho_updates,
            )
            return solution

        if rho_updates < MAX_RHO_UPDATES and n_rows:
            ax = rows @ x
            hx = scaling.hessian @ x
            aty = rows.T @ y
            primal = float(np.max(np.abs(ax - z))) / (
                max(float(np.max(np.abs(ax))), float(np.max(np.abs(z)))) + 1e-12
            )
            dual = float(np.max(np.abs(hx + scaling.linear + aty))) / (
                max(
                    float(np.max(np.abs(hx))),
                    float(np.max(np.abs(aty))),
                    float(np.max(np.abs(scaling.linear))),
                )
                + 1e-12
            )
            estimate = min(
                max(rho * math.sqrt(primal / (dual + 1e-12)), RHO_MIN), RHO_MAX
            )
            if estimate > RHO_UPDATE_RATIO * rho or estimate * RHO_UPDATE_RATIO < rho:
                rho = estimate
                rho_rows = _row_rho(rho, lower, upper)
                factor = factorize(rho_rows)
                rho_updates += 1

    if best is None:
        best = _finish(problem, scaling, x, y, n_eq, iterations)
    raise QpNotConvergedError(
        "qp not converged: %d iterations, best kkt residual %g"
        % (iterations, best.kkt_residual)
    )
