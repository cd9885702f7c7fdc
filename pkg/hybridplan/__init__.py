from hybridplan.__version__ import __version__  # noqa: F401
from hybridplan.config import StackConfig, load_config
from hybridplan.lanes import LaneGraph, shortest_route
from hybridplan.sim import (
    Scenario,
    load_scenario,
    plan_cycle,
    run_closed_loop,
)
from hybridplan.store import records_open

__all__ = [
    "LaneGraph",
    "Scenario",
    "StackConfig",
    "load_config",
    "load_scenario",
    "plan_cycle",
    "records_open",
    "run_closed_loop",
    "shortest_route",
]
