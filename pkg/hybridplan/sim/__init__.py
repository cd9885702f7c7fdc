from hybridplan.sim.controller import ControllerGains, track_trajectory
from hybridplan.sim.loop import (
    MODES,
    PlanningCycle,
    SimConfig,
    cycle_to_dict,
    make_context,
    plan_cycle,
    run_closed_loop,
)
from hybridplan.sim.metrics import MetricsReport, compare_metrics, compute_metrics
from hybridplan.sim.plant import PlantState, step_plant
from hybridplan.sim.scenario import (
    DynamicAgent,
    Scenario,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_paths,
    scenario_to_dict,
)
from hybridplan.sim.trace import SimTrace, TickRecord, read_trace, write_trace

__all__ = [
    "MODES",
    "ControllerGains",
    "DynamicAgent",
    "MetricsReport",
    "PlanningCycle",
    "PlantState",
    "Scenario",
    "SimConfig",
    "SimTrace",
    "TickRecord",
    "compare_metrics",
    "compute_metrics",
    "cycle_to_dict",
    "load_scenario",
    "make_context",
    "plan_cycle",
    "read_trace",
    "run_closed_loop",
    "save_scenario",
    "scenario_from_dict",
    "scenario_paths",
    "scenario_to_dict",
    "step_plant",
    "track_trajectory",
    "write_trace",
]
