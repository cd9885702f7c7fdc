from hybridplan.geometry.collision import (
    Footprint,
    as_convex_polygon,
    footprint_collides,
    footprint_polygon,
    footprint_polygons,
    footprints_hit_polygon,
    footprints_hit_track,
    polygons_intersect,
    transform_polygon,
)
from hybridplan.geometry.path import (
    Polyline,
    curvature_profile,
    frenet_to_cartesian,
    project_points,
    project_to_path,
    resample_uniform,
)
from hybridplan.geometry.pose import (
    EgoState,
    FrenetCoord,
    Pose2D,
    normalize_angle,
    normalize_angles,
    to_local_frame,
    to_world_frame,
)
from hybridplan.geometry.trajectory import (
    Trajectory,
    TrajectoryPoint,
    trajectory_from_positions,
)

__all__ = [
    "EgoState",
    "Footprint",
    "FrenetCoord",
    "Polyline",
    "Pose2D",
    "Trajectory",
    "TrajectoryPoint",
    "as_convex_polygon",
    "curvature_profile",
    "footprint_collides",
    "footprint_polygon",
    "footprint_polygons",
    "footprints_hit_polygon",
    "footprints_hit_track",
    "frenet_to_cartesian",
    "normalize_angle",
    "normalize_angles",
    "polygons_intersect",
    "project_points",
    "project_to_path",
    "resample_uniform",
    "to_local_frame",
    "to_world_frame",
    "trajectory_from_positions",
    "transform_polygon",
]
