import math

import numpy as np
import pytest

from hybridplan.errors import (
    DegeneratePathError,
    FrenetRangeError,
    InvalidParameterError,
)
from hybridplan.geometry import (
    FrenetCoord,
    Polyline,
    curvature_profile,
    frenet_to_cartesian,
    project_points,
    project_to_path,
    resample_uniform,
)


def arc(radius: float, angle: float, step: float, left: bool = True) -> Polyline:
    """Vertices on a circle through the origin, heading +x at the start"""
    count = int(math.ceil(radius * angle / step))
    phi = np.linspace(0.0, angle, count + 1)
    sign = 1.0 if left else -1.0
    return Polyline(
        np.stack([radius * np.sin(phi), sign * radius * (1.0 - np.cos(phi))], axis=1)
    )


STRAIGHT = Polyline([[0.0, 0.0], [10.0, 0.0]])


def test_polyline_stations():
    path = Polyline([[0, 0], [3, 4], [3, 10]])
    np.testing.assert_allclose(path.stations, [0.0, 5.0, 11.0])
    assert path.length == 11.0
    np.testing.assert_allclose(path.point_at(7.0), [3.0, 6.0])
    # extrapolates past the ends
    np.testing.assert_allclose(path.point_at(-5.0), [-3.0, -4.0])


@pytest.mark.parametrize(
    "vertices",
    [[], [[0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]], [[0, 0], [1, 0], [1, 0], [2, 0]]],
)
def test_polyline_degenerate(vertices):
    with pytest.raises(DegeneratePathError) as error:
        Polyline(vertices)
    assert "degenerate path" in str(error.value)


def test_polyline_not_finite():
    with pytest.raises(DegeneratePathError):
        Polyline([[0.0, 0.0], [float("nan"), 1.0]])


def test_project_straight():
    fr = project_to_path(STRAIGHT, (5.0, 2.0), 0.0)
    assert fr.s == pytest.approx(5.0)
    assert fr.d == pytest.approx(2.0)
    assert fr.heading_err == pytest.approx(0.0)

    fr = project_to_path(STRAIGHT, (0.0, 0.0), 0.0)
    assert (fr.s, fr.d, fr.heading_err) == (0.0, 0.0, 0.0)

    fr = project_to_path(STRAIGHT, (4.0, -1.5), 0.25)
    assert fr.d == pytest.approx(-1.5)
    assert fr.heading_err == pytest.approx(0.25)


def test_project_accepts_vertices():
    fr = project_to_path([[0.0, 0.0], [0.0, 10.0]], (-1.0, 3.0), math.pi)
    assert fr.s == pytest.approx(3.0)
    assert fr.d == pytest.approx(1.0)
    assert fr.heading_err == pytest.approx(math.pi / 2)


def test_project_degenerate():
    with pytest.raises(DegeneratePathError):
        project_to_path([[1.0, 1.0]], (0.0, 0.0))


def test_project_matches_dense_sampling():
    path = arc(20.0, 1.5, 2.0)
    rng = np.random.default_rng(7)
    dense_s = np.arange(0.0, path.length, 0.001)
    dense = path.point_at(dense_s)
    points = path.point_at(rng.uniform(2.0, path.length - 2.0, 50))
    points = points + rng.uniform(-3.0, 3.0, size=points.shape)
    stations, offsets, _ = project_points(path, points)
    for point, s, d in zip(points, stations, offsets):
        dist = np.hypot(*(dense - point).T)
        nearest = int(np.argmin(dist))
        assert abs(d) <= dist[nearest] + 0.002
        assert abs(abs(d) - dist[nearest]) < 0.002
        assert s == pytest.approx(dense_s[nearest], abs=0.002)


def test_frenet_to_cartesian_straight():
    pose = frenet_to_cartesian(STRAIGHT, FrenetCoord(3.0, 0.0, 0.0))
    assert (pose.x, pose.y, pose.heading) == pytest.approx((3.0, 0.0, 0.0))
    pose = frenet_to_cartesian(STRAIGHT, FrenetCoord(3.0, 1.0, 0.0))
    assert (pose.x, pose.y, pose.heading) == pytest.approx((3.0, 1.0, 0.0))


def test_frenet_out_of_range():
    with pytest.raises(FrenetRangeError):
        frenet_to_cartesian(STRAIGHT, FrenetCoord(10.5, 0.0))
    with pytest.raises(FrenetRangeError):
        frenet_to_cartesian(STRAIGHT, FrenetCoord(-0.1, 0.0))


def test_frenet_round_trip_on_curve():
    path = arc(20.0, 2.0, 1.0)
    rng = np.random.default_rng(3)
    for segment in rng.choice(len(path) - 1, 30, replace=False):
        s = path.stations[segment] + 0.5 * (
            path.stations[segment + 1] - path.stations[segment]
        )
        fr = FrenetCoord(s, rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5))
        pose = frenet_to_cartesian(path, fr)
        back = project_to_path(path, (pose.x, pose.y), pose.heading)
        assert back.s == pytest.approx(fr.s, abs=1e-6)
        assert back.d == pytest.approx(fr.d, abs=1e-6)
        assert back.heading_err == pytest.approx(fr.heading_err, abs=1e-9)


def test_curvature_straight_and_circle():
    np.testing.assert_allclose(
        curvature_profile(Polyline([[0, 0], [1, 0], [2, 0], [5, 0]])), 0.0
    )
    np.testing.assert_allclose(curvature_profile(arc(20.0, 1.0, 1.0)), 0.05, rtol=1e-9)
    np.testing.assert_allclose(
        curvature_profile(arc(20.0, 1.0, 1.0, left=False)), -0.05, rtol=1e-9
    )


def test_curvature_sign_left_positive():
    kappa = curvature_profile([[0, 0], [1, 0], [2, 1]])
    assert np.all(kappa > 0.0)


def test_curvature_too_short():
    with pytest.raises(InvalidParameterError):
        curvature_profile(STRAIGHT)


def test_resample_polyline():
    resampled = resample_uniform(STRAIGHT, 1.0)
    assert len(resampled) == 11
    np.testing.assert_allclose(resampled.vertices[:, 0], np.arange(11.0))

    dense = Polyline(np.stack([np.arange(11.0), np.zeros(11)], axis=1))
    np.testing.assert_allclose(
        resample_uniform(dense, 1.0).vertices, dense.vertices, atol=1e-12
    )


def test_resample_polyline_keeps_end():
    resampled = resample_uniform(Polyline([[0, 0], [2.5, 0]]), 1.0)
    np.testing.assert_allclose(resampled.stations, [0.0, 1.0, 2.0, 2.5])


def test_resample_circle_curvature():
    resampled = resample_uniform(arc(20.0, 1.2, 0.05), 1.0)
    kappa = curvature_profile(resampled)
    np.testing.assert_allclose(kappa[1:-2], 0.05, rtol=0.01)


@pytest.mark.parametrize("step", [0.0, -1.0, 11.0])
def test_resample_bad_step(step):
    with pytest.raises(InvalidParameterError):
        resample_uniform(STRAIGHT, step)


def test_resample_unknown_type():
    with pytest.raises(TypeError):
        resample_uniform([[0, 0], [1, 0]], 0.5)
