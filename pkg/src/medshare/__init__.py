"""Edge offloading and ledger-based EHR sharing simulator."""

from medshare.costs import (
    ConstraintBounds,
    ConstraintReport,
    CostBreakdown,
    CostWeights,
    TaskProfile,
    blended_costs,
    check_constraints,
    local_time,
    objective,
    offload_energy,
    offload_time,
)
from medshare.optimizer import OffloadDecision, PsoConfig, brute_force_solve, solve_pso

__version__ = "0.1.0"

__all__ = [
    "ConstraintBounds",
    "ConstraintReport",
    "CostBreakdown",
    "CostWeights",
    "OffloadDecision",
    "PsoConfig",
    "TaskProfile",
    "blended_costs",
    "brute_force_solve",
    "check_constraints",
    "local_time",
    "objective",
    "offload_energy",
    "offload_time",
    "solve_pso",
]
