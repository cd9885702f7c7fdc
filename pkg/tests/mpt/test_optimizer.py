import math
import os

import numpy as np
import pytest

from hybridplan.cruise import CruiseConfig, plan_cruise_profile
from hybridplan.errors import (
    CorridorMismatchError,
    InvalidParameterError,
    QpNotConvergedError,
)
from hybridplan.geometry import (
    EgoState,
    Footprint,
    Pose2D,
    footprint_collides,
    project_points,
    trajectory_from_positions,
)
from hybridplan.lanes import corridor_along, shortest_route
from hybridplan.mpt import (
    MptConfig,
    MptWeights,
    assemble_qp,
    build_reference,
    cold_start_previous,
    optimize_trajectory,
    optimizer,
    setup_qp,
    solve_qp,
    steering_of,
)
from tests.builders import box, straight_graph

CFG = MptConfig()
N = CFG.horizon_points
EGO = EgoState(Pose2D(2.0, 0.0, 0.0), vel_lon=5.0)


@pytest.fixture
def corridor():
    graph = straight_graph()
    return corridor_along(graph, shortest_route(graph, "a", "c"), Footprint())


def smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def lane_shift(offset, length=20.0, start=7.0, speed=5.0, y0=0.0, start_time=0.0):
    x = 2.0 + speed * CFG.dt * np.arange(N + 1)
    y = y0 + offset * smoothstep((x - start) / length)
    return trajectory_from_positions(
        np.stack([x, y], axis=1),
        CFG.dt,
        speeds=np.full(N + 1, speed),
        initial_heading=0.0,
        start_time=start_time,
    )


def bent(curvature):
    """Constant-curvature trajectory leaving the ego pose"""
    s = 5.0 * CFG.dt * np.arange(N + 1)
    if curvature == 0.0:
        xy = np.stack([2.0 + s, np.zeros_like(s)], axis=1)
    else:
        radius = 1.0 / curvature
        xy = np.stack(
            [2.0 + radius * np.sin(s / radius), radius * (1.0 - np.cos(s / radius))],
            axis=1,
        )
    return trajectory_from_positions(
        xy, CFG.dt, speeds=np.full(N + 1, 5.0), initial_heading=0.0
    )


def test_config_invalid():
    with pytest.raises(InvalidParameterError):
        MptWeights(w_y=-1.0)
    with pytest.raises(InvalidParameterError):
        MptWeights(0.0, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(InvalidParameterError):
        MptConfig(n_fix=80)
    with pytest.raises(InvalidParameterError):
        MptConfig(delta_max=2.0)
    with pytest.raises(InvalidParameterError):
        MptConfig(dt=0.0)
    with pytest.raises(InvalidParameterError):
        MptConfig(relinearize_passes=-1)


def test_already_optimal(corridor):
    cfg = MptConfig(weights=MptWeights(1.0, 0.0, 0.0, 0.0, 0.0))
    problem = assemble_qp(lane_shift(0.0), corridor, EGO, None, cfg)
    assert problem.size == 2 * N
    solution = solve_qp(problem)
    np.testing.assert_allclose(solution.x, 0.0, atol=1e-9)
    assert solution.objective == pytest.approx(0.0, abs=1e-9)


def test_hessian_psd_and_gradient(corridor):
    rng = np.random.default_rng(0)
    for _ in range(3):
        ego = EgoState(
            Pose2D(2.0, rng.uniform(-0.5, 0.5), rng.uniform(-0.1, 0.1)), vel_lon=5.0
        )
        nn = lane_shift(rng.uniform(-1.0, 1.0))
        problem = assemble_qp(nn, corridor, ego, None, CFG)
        hessian = problem.hessian
        scale = np.max(np.abs(hessian))
        assert np.min(np.linalg.eigvalsh(hessian)) >= -1e-9 * scale

        x = rng.normal(scale=0.05, size=problem.size)
        eps = 1e-4
        numeric = np.array(
            [
                (problem.objective(x + eps * e) - problem.objective(x - eps * e))
                / (2.0 * eps)
                for e in np.eye(problem.size)
            ]
        )
        np.testing.assert_allclose(
            problem.gradient(x), numeric, rtol=1e-6, atol=1e-6 * scale
        )


def test_fully_pinned(corridor):
    cfg = MptConfig(n_fix=N - 1)
    prev = bent(0.001)
    result = optimize_trajectory(lane_shift(0.5), corridor, [], EGO, prev, cfg)
    assert result.pinned == N
    np.testing.assert_array_equal(result.steering, result.prev_steering)
    np.testing.assert_allclose(
        result.prev_steering, math.atan(cfg.wheelbase * 0.001), rtol=1e-3
    )


def test_pinned_prefix_exact(corridor):
    prev = bent(0.002)
    result = optimize_trajectory(lane_shift(0.5), corridor, [], EGO, prev, CFG)
    assert not result.used_fallback
    assert result.pinned == CFG.n_fix + 1
    head = slice(0, CFG.n_fix + 1)
    assert np.max(np.abs(result.steering[head] - result.prev_steering[head])) <= 1e-9


def test_tracks_nn_inside_corridor(corridor):
    nn = lane_shift(0.5)
    result = optimize_trajectory(nn, corridor, [], EGO, None, CFG)
    assert not result.used_fallback
    assert result.pinned == 0
    assert result.kkt_residual <= CFG.kkt_tol
    out = result.trajectory
    deviation = out.y - np.interp(out.x, nn.x, nn.y)
    assert np.max(np.abs(deviation)) < 0.1
    np.testing.assert_allclose(out.speed, nn.speed)
    assert out.max_abs_curvature() <= math.tan(CFG.delta_max) / CFG.wheelbase + 1e-6


def test_stays_in_corridor_when_nn_leaves(corridor):
    nn = lane_shift(1.8)
    s, d, _ = project_points(corridor.reference, nn.xy)
    assert not np.all(corridor.contains(s, d))

    result = optimize_trajectory(nn, corridor, [], EGO, None, CFG)
    assert not result.used_fallback
    out = result.trajectory
    s, d, _ = project_points(corridor.reference, out.xy)
    assert np.all(corridor.contains(s, d))
    assert np.max(d) > 0.5


def test_blocked_falls_back(corridor):
    prev = lane_shift(0.0)
    wall = np.array(box(20.0, -3.0, 22.0, 3.0))
    result = optimize_trajectory(lane_shift(0.0), corridor, [wall], EGO, prev, CFG)
    assert result.used_fallback
    assert result.trajectory is prev
    assert "collision with obstacle 0" in result.reason


def test_avoids_obstacle(corridor):
    footprint = CFG.footprint
    obstacle = np.array(box(25.0, -2.0, 27.0, -0.6))
    nn = lane_shift(0.6)
    result = optimize_trajectory(nn, corridor, [obstacle], EGO, None, CFG)
    assert not result.used_fallback
    out = result.trajectory
    for i in range(len(out)):
        assert not footprint_collides(out.pose_at(i), footprint, [obstacle])


def test_solver_failure_falls_back(corridor, mocker):
    mocker.patch(
        "hybridplan.mpt.optimizer.solve_qp",
        side_effect=QpNotConvergedError("qp not converged"),
    )
    prev = lane_shift(0.0)
    result = optimize_trajectory(lane_shift(0.5), corridor, [], EGO, prev, CFG)
    assert result.used_fallback
    assert result.trajectory is prev
    assert math.isnan(result.objective_value)
    assert result.reason == "qp not converged"


def test_rate_weight_monotonic(corridor):
    nn = lane_shift(1.0, length=12.0)
    totals = []
    for weight in (0.1, 1.0, 10.0):
        cfg = MptConfig(weights=MptWeights(w_delta_rate=weight))
        solution = solve_qp(assemble_qp(nn, corridor, EGO, None, cfg))
        totals.append(float(np.sum(np.diff(solution.x[:N]) ** 2)))
    assert totals[1] <= totals[0] * (1.0 + 1e-4) + 1e-10
    assert totals[2] <= totals[1] * (1.0 + 1e-4) + 1e-10


def test_cruise_speeds(corridor):
    cruise = plan_cruise_profile(5.0, None, 7.0, N, CFG.dt, CruiseConfig())
    result = optimize_trajectory(
        lane_shift(0.0), corridor, [], EGO, None, CFG, cruise=cruise
    )
    assert not result.used_fallback
    np.testing.assert_allclose(result.trajectory.speed, cruise.speeds)
    assert result.trajectory.x[-1] > lane_shift(0.0).x[-1]


def test_setup_mismatch(corridor):
    with pytest.raises(CorridorMismatchError):
        setup_qp(lane_shift(0.0), corridor, EGO, None, MptConfig(horizon_points=100))
    with pytest.raises(CorridorMismatchError):
        setup_qp(lane_shift(0.0), corridor, EGO, None, MptConfig(dt=0.2))
    far = EgoState(Pose2D(2.0, 30.0, 0.0), vel_lon=5.0)
    with pytest.raises(CorridorMismatchError):
        setup_qp(lane_shift(0.0), corridor, far, None, CFG)


def test_cold_start_previous_clamped(corridor):
    outside = lane_shift(0.0, y0=2.0)
    prev = cold_start_previous(outside, corridor)
    np.testing.assert_allclose(prev.y, corridor.left_limit[0], atol=1e-9)
    np.testing.assert_allclose(prev.speed, outside.speed)


def test_build_reference_retimes():
    nn = lane_shift(0.0)
    reference = build_reference(nn, np.full(N + 1, 2.0), EGO)
    np.testing.assert_allclose(reference.x, 2.0 + 2.0 * reference.t, atol=1e-9)
    np.testing.assert_allclose(reference.accel, 0.0)
    assert reference.start_time == EGO.timestamp


def test_steering_of():
    assert steering_of(bent(0.01), 2.5)[10] == pytest.approx(math.atan(0.025), rel=1e-3)


def test_debug_dump(corridor, fs):
    fs.create_dir("/dumps")
    cfg = MptConfig(debug_dump_dir="/dumps")
    optimize_trajectory(lane_shift(0.0), corridor, [], EGO, None, cfg)
    (name,) = os.listdir("/dumps")
    assert name.startswith("mpt-") and name.endswith(".json")


def inside(corridor, traj):
    s, d, _ = project_points(corridor.reference, traj.xy)
    return bool(np.all(corridor.contains(s, d)))


def test_cold_start_fallback_stays_in_corridor(corridor, mocker):
    mocker.patch(
        "hybridplan.mpt.optimizer.solve_qp",
        side_effect=QpNotConvergedError("qp not converged"),
    )
    planner = lane_shift(0.0)
    wild = lane_shift(5.0)
    assert not inside(corridor, wild)

    result = optimize_trajectory(wild, corridor, [], EGO, None, CFG, fallback=planner)
    assert result.used_fallback
    assert result.pinned == 0
    assert inside(corridor, result.trajectory)
    expected = cold_start_previous(planner, corridor, CFG.corridor_margin)
    np.testing.assert_allclose(result.trajectory.xy, expected.xy)

    result = optimize_trajectory(wild, corridor, [], EGO, None, CFG)
    assert inside(corridor, result.trajectory)


def test_previous_leaving_corridor_is_replaced(corridor, caplog):
    prev = lane_shift(0.0, y0=2.5)
    assert not inside(corridor, prev)
    with caplog.at_level("WARNING", logger="hybridplan.mpt.optimizer"):
        result = optimize_trajectory(
            lane_shift(0.0), corridor, [], EGO, prev, CFG, fallback=lane_shift(0.0)
        )
    assert result.pinned == 0
    assert result.trajectory is not prev
    assert inside(corridor, result.trajectory)
    assert "leaves the corridor" in caplog.text


def test_warm_start_reuses_solution(corridor, mocker):
    nn = lane_shift(0.5)
    first = optimize_trajectory(nn, corridor, [], EGO, None, CFG)
    assert first.qp_solution is not None

    spy = mocker.spy(optimizer, "solve_qp")
    second = optimize_trajectory(nn, corridor, [], EGO, None, CFG, warm_start=first)
    np.testing.assert_allclose(spy.call_args.kwargs["x0"], first.qp_solution.x)
    assert not second.used_fallback
    assert second.qp_solution.iterations == 0
    np.testing.assert_allclose(second.steering, first.steering, atol=1e-6)


def test_warm_start_shifts_by_elapsed_steps(corridor, mocker):
    first = optimize_trajectory(lane_shift(0.5), corridor, [], EGO, None, CFG)
    later = EgoState(Pose2D(2.0, 0.0, 0.0), vel_lon=5.0, timestamp=3 * CFG.dt)
    nn = lane_shift(0.5, start_time=later.timestamp)
    spy = mocker.spy(optimizer, "solve_qp")
    optimize_trajectory(nn, corridor, [], later, None, CFG, warm_start=first)
    x0 = spy.call_args_list[0].kwargs["x0"]
    np.testing.assert_allclose(x0[: N - 3], first.qp_solution.x[3:N])
    np.testing.assert_allclose(x0[N - 3 : N], first.qp_solution.x[N - 1])


def test_cold_problem_solves_within_small_budget(corridor):
    problem = assemble_qp(lane_shift(1.8), corridor, EGO, None, CFG)
    solution = solve_qp(problem, kkt_tol=CFG.kkt_tol, max_iterations=500)
    assert solution.kkt_residual <= CFG.kkt_tol
