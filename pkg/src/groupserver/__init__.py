"""Optimal on/off scheduling of heterogeneous server groups in a single queue."""

__version__ = "0.1.0"

from .errors import (ConfigError, CycleError, EnumerationError, GroupServerError, ModelError,
                     NonConvergenceError, SolverError, StabilityError, TruncationError)
from .model import (GroupSpec, HoldingCost, Policy, QueueModel, ThresholdPolicy,
                    holding, total_cost_rate, validate)
from .ctmc import SolveReport, evaluate
from .optimize import (SolverOptions, algorithm1, algorithm2, brute_force_thresholds,
                       check_scale_economies, ilp_greedy, policy_cost_difference,
                       threshold_to_policy, value_iteration)
from .simulate import SimConfig, SimEstimate, simulate

__all__ = [
    "ConfigError", "CycleError", "EnumerationError", "GroupServerError", "ModelError",
    "NonConvergenceError", "SolverError", "StabilityError", "TruncationError",
    "GroupSpec", "HoldingCost", "Policy", "QueueModel", "ThresholdPolicy",
    "holding", "total_cost_rate", "validate", "SolveReport", "evaluate",
    "SolverOptions", "algorithm1", "algorithm2", "brute_force_thresholds",
    "check_scale_economies", "ilp_greedy", "policy_cost_difference",
    "threshold_to_policy", "value_iteration", "SimConfig", "SimEstimate", "simulate",
]
