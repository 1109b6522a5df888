"""Types for pdsplit.

Defines the shared enums, error codes, run reports and trace records used across
the solvers and the benchmark driver.
"""

from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

from pydantic import BaseModel, Field


class SolverName(StrEnum):
    """Solver identifiers accepted by the benchmark driver."""

    PDSDS = "pdsds"
    ADMMDS = "admmds"
    MINIBATCH = "minibatch"
    SMPDSDS = "smpdsds"
    DISTRIBUTED = "dist"
    DASPDSDS = "daspdsds"

    @property
    def is_stochastic(self) -> bool:
        """Whether runs of this solver draw from a random stream."""
        return self in (SolverName.SMPDSDS, SolverName.DASPDSDS)

    @property
    def uses_graph(self) -> bool:
        """Whether this solver runs on an agent graph."""
        return self in (SolverName.DISTRIBUTED, SolverName.DASPDSDS)


class StopCriterion(StrEnum):
    """Quantity compared against the stopping tolerance."""

    RELATIVE_CHANGE = "relative_change"
    RESIDUAL = "residual"


class PartitionMode(StrEnum):
    """How data rows are split between batches."""

    CONTIGUOUS = "contiguous"
    RANDOM = "random"


class ScheduleKind(StrEnum):
    """Stepsize schedule families."""

    CONSTANT = "constant"
    DYNAMIC = "dynamic"


class ScheduleCondition(StrEnum):
    """Named stepsize conditions reported by schedule validation."""

    POSITIVITY = "positivity"
    STEP_BOUND = "step_bound"
    RELAXATION = "relaxation"
    LIMITS = "limits"
    ADMMDS_STEP_BOUND = "admmds_step_bound"


class ErrorCode:
    """Numeric error codes carried by SolverError subclasses."""

    DOMAIN = 100
    SCHEDULE_INVALID = 200
    COVERAGE = 300
    UNSUPPORTED_STRUCTURE = 400
    GRAPH_INVALID = 500
    INSTANCE_INVALID = 600
    CONFIG_INVALID = 700


class SolverError(Exception):
    """Base class for every error raised by pdsplit."""

    def __init__(self, message: str, code: int = -1):
        super().__init__(message)
        self.code = code


@dataclass
class RunReport:
    """Outcome of one (solver, seed, eps) benchmark run."""

    solver: SolverName
    n: int
    batches: int
    eps: float
    seed: int
    err: float
    fval: float
    iterations: int
    seconds: float | None
    converged: bool
    lam: float
    extra: dict[str, Any] = field(default_factory=dict)

    def to_row(self) -> dict[str, Any]:
        """Convert to a CSV row keyed by the report columns."""
        return {
            "solver": self.solver.value,
            "n": self.n,
            "N": self.batches,
            "eps": repr(self.eps),
            "seed": self.seed,
            "Err": repr(self.err),
            "fval": repr(self.fval),
            "k": self.iterations,
            "seconds": "" if self.seconds is None else f"{self.seconds:.6f}",
            "converged": int(self.converged),
            "lam": repr(self.lam),
        }


# Column order of the per-run CSV
REPORT_COLUMNS = ["solver", "n", "N", "eps", "seed", "Err", "fval", "k", "seconds", "converged", "lam"]


class TraceHeader(BaseModel):
    """First line of every JSONL trace."""

    type: str = "header"
    solver: str
    seed: int | None = None
    params: dict[str, Any] = Field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        """Convert to dictionary."""
        return self.model_dump()


class TraceRecord(BaseModel):
    """One iteration record of a solver trace."""

    k: int
    residual: float
    objective: float | None = None
    blocks_updated: list[int] | None = None
    batch_selected: list[int] | None = None
    active_agents: list[int] | None = None
    spread: float | None = None
    seed: int | None = None

    def to_dict(self) -> dict[str, Any]:
        """Convert to dictionary, dropping fields the solver did not fill."""
        return self.model_dump(exclude_none=True)
