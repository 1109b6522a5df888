"""pdsplit - primal-dual splitting with dynamic stepsizes.

Deterministic, stochastic-minibatch and asynchronous-distributed solvers for
min f(x) + g(x) + h(Dx), with a LASSO benchmark driver.
"""

__version__ = "0.1.0"

from .composite import BatchProblem, BatchState, run_minibatch, run_smpdsds
from .distributed import ConsensusNetwork, DistributedState, NetworkSimulator, run_daspdsds, run_distributed
from .engine import BlockSelector, CoverageError, IterationTrace, StopRule, km_iterate, rkm_iterate
from .executor import ExperimentExecutor, run_experiment
from .graph import ActivationSchedule, AgentGraph, GraphError
from .lasso import InstanceError, LassoInstance, gen_lasso, split_batches
from .prox import DomainError, LinearMap, ProxFunction, estimate_operator_norm
from .schedule import ScheduleError, ScheduleReport, StepSchedule
from .smooth import SmoothFunction
from .solvers import (
    CompositeProblem,
    UnsupportedStructureError,
    solve_admmds,
    solve_pdsds,
    validate_schedule,
)
from .types import RunReport, SolverError, SolverName

__all__ = [
    "__version__",
    # Types
    "SolverName",
    "RunReport",
    # Errors
    "SolverError",
    "DomainError",
    "ScheduleError",
    "CoverageError",
    "UnsupportedStructureError",
    "GraphError",
    "InstanceError",
    # Building blocks
    "ProxFunction",
    "SmoothFunction",
    "LinearMap",
    "estimate_operator_norm",
    "BlockSelector",
    "StopRule",
    "IterationTrace",
    "km_iterate",
    "rkm_iterate",
    # Solvers
    "StepSchedule",
    "ScheduleReport",
    "CompositeProblem",
    "validate_schedule",
    "solve_pdsds",
    "solve_admmds",
    "BatchProblem",
    "BatchState",
    "run_minibatch",
    "run_smpdsds",
    "AgentGraph",
    "ActivationSchedule",
    "ConsensusNetwork",
    "DistributedState",
    "NetworkSimulator",
    "run_distributed",
    "run_daspdsds",
    # Benchmark
    "LassoInstance",
    "gen_lasso",
    "split_batches",
    "ExperimentExecutor",
    "run_experiment",
]
