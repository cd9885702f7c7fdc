from hybridplan.mpt.dynamics import (
    ErrorDynamics,
    ErrorState,
    linearize_error_dynamics,
    rollout_bicycle,
    rollout_linear,
    stack_error_dynamics,
)
from hybridplan.mpt.optimizer import (
    MptConfig,
    MptResult,
    MptWeights,
    assemble_qp,
    build_reference,
    cold_start_previous,
    optimize_trajectory,
    setup_qp,
    steering_of,
)
from hybridplan.mpt.qp import (
    QpProblem,
    QpSolution,
    dump_problem,
    kkt_residual,
    load_problem,
    solve_qp,
)

__all__ = [
    "ErrorDynamics",
    "ErrorState",
    "MptConfig",
    "MptResult",
    "MptWeights",
    "QpProblem",
    "QpSolution",
    "assemble_qp",
    "build_reference",
    "cold_start_previous",
    "dump_problem",
    "kkt_residual",
    "linearize_error_dynamics",
    "load_problem",
    "optimize_trajectory",
    "rollout_bicycle",
    "rollout_linear",
    "setup_qp",
    "solve_qp",
    "stack_error_dynamics",
    "steering_of",
]
