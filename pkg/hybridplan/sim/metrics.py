import math
from dataclasses import asdict, dataclass, fields
from logging import getLogger as get_logger
from typing import List, Optional, Tuple

import numpy as np

from hybridplan.cruise import CruiseConfig, safe_distance
from hybridplan.geometry import (
    Footprint,
    footprint_polygons,
    footprints_hit_polygon,
    project_points,
)
from hybridplan.sim.scenario import Scenario
from hybridplan.sim.trace import SimTrace

__all__ = ["MetricsReport", "compare_metrics", "compute_metrics"]

logger = get_logger(__name__)

GOAL_TOLERANCE = 10.0


@dataclass(frozen=True)
class MetricsReport:
    """Safety and comfort figures of one closed-loop run

    ``min_gap_vs_safe_distance`` is ``None`` when no lead was ever present.
    """

    collisions: int = 0
    boundary_violations: int = 0
    progress_m: float = 0.0
    peak_jerk: float = 0.0
    peak_lat_accel: float = 0.0
    peak_lat_jerk: float = 0.0
    min_gap_vs_safe_distance: Optional[float] = None
    station_margin_min: float = 0.0
    completion: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})


def _peak(values: np.ndarray) -> float:
    return float(np.max(np.abs(values), initial=0.0))


def compute_metrics(
    trace: SimTrace,
    scn: Scenario,
    *,
    footprint: Optional[Footprint] = None,
    cruise: Optional[CruiseConfig] = None,
    goal_tolerance: float = GOAL_TOLERANCE,
) -> MetricsReport:
    """Metrics from the per-tick plant states of ``trace``

    Collisions and boundary violations count ticks. Jerk is the second
    difference of speed and lateral jerk the difference of ``curvature *
    speed^2``, both at the tick rate.
    """
    footprint = footprint or Footprint()
    cruise = cruise or CruiseConfig()
    ticks = trace.ticks
    if not ticks:
        return MetricsReport()
    x = np.array([tick.x for tick in ticks])
    y = np.array([tick.y for tick in ticks])
    heading = np.array([tick.heading for tick in ticks])
    speed = np.array([tick.speed for tick in ticks])
    steering = np.array([tick.steering for tick in ticks])
    dt = trace.header.dt

    rectangles = footprint_polygons(x, y, heading, footprint)
    hit = np.zeros(len(ticks), dtype=bool)
    for obstacle in scn.static_obstacles:
        hit |= footprints_hit_polygon(rectangles, obstacle)
    for agent in scn.dynamic_agents:
        for index, tick in enumerate(ticks):
            if not hit[index]:
                hit[index] = footprints_hit_polygon(
                    rectangles[index : index + 1], agent.polygon_at(tick.time)
                )[0]

    corridor = scn.corridor(footprint)
    stations, offsets, _ = project_points(corridor.reference, np.stack([x, y], 1))
    inside = corridor.contains(stations, offsets)
    margin = corridor.margin_at(stations, offsets)

    curvature = np.tan(steering) / footprint.wheelbase
    lat_accel = curvature * speed * speed
    jerk = np.diff(speed, n=2) / (dt * dt)
    lat_jerk = np.diff(lat_accel) / dt

    gaps: List[float] = []
    for tick in ticks:
        if tick.lead_gap is None:
            continue
        required = safe_distance(tick.speed, tick.lead_speed, cruise)
        gaps.append(tick.lead_gap - required)

    return MetricsReport(
        collisions=int(hit.sum()),
        boundary_violations=int((~inside).sum()),
        progress_m=float(stations[-1] - stations[0]),
        peak_jerk=_peak(jerk),
        peak_lat_accel=_peak(lat_accel),
        peak_lat_jerk=_peak(lat_jerk),
        min_gap_vs_safe_distance=min(gaps) if gaps else None,
        station_margin_min=float(np.min(margin)),
        completion=bool(stations[-1] >= scn.route.total_length - goal_tolerance),
    )


def compare_metrics(
    a: MetricsReport, b: MetricsReport
) -> List[Tuple[str, object, object, Optional[float]]]:
    """Rows of ``(metric, a, b, b - a)``; the difference is ``None`` for
    flags and missing values"""
    rows = []
    for f in fields(MetricsReport):
        left, right = getattr(a, f.name), getattr(b, f.name)
        numeric = all(
            isinstance(v, (int, float)) and not isinstance(v, bool)
            for v in (left, right)
        )
        diff = right - left if numeric else None
        if diff is not None and isinstance(diff, float) and math.isnan(diff):
            diff = None
        rows.append((f.name, left, right, diff))
    return rows
