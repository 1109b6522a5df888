"""Experiment and solver configuration.

Handles:
- YAML experiment files validated into pydantic models
- ${VAR} environment references in string values
- Turning a schedule section into a StepSchedule for a given solver
- The per-run solver config written next to each trace
"""

import logging
import os
import re
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator

from .schedule import StepSchedule
from .types import ErrorCode, PartitionMode, ScheduleKind, SolverError, SolverName

logger = logging.getLogger(__name__)

# Pattern for environment variable references: ${VAR_NAME}
ENV_VAR_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


class ConfigError(SolverError):
    """Unreadable or invalid configuration."""

    def __init__(self, message: str, code: int = ErrorCode.CONFIG_INVALID):
        super().__init__(message, code)


def resolve_env_vars(value: str) -> str:
    """Resolve ${VAR_NAME} references; unset variables are left as-is.

    Args:
        value: String potentially containing env var references

    Returns:
        String with env vars resolved
    """

    def replace_var(match: re.Match[str]) -> str:
        var_name = match.group(1)
        env_value = os.environ.get(var_name)
        if env_value is not None:
            return env_value
        logger.warning(f"Environment variable {var_name} not set")
        return match.group(0)

    return ENV_VAR_PATTERN.sub(replace_var, value)


def resolve_env_tree(data: Any) -> Any:
    """Apply resolve_env_vars to every string inside nested dicts and lists."""
    if isinstance(data, str):
        return resolve_env_vars(data)
    if isinstance(data, dict):
        return {key: resolve_env_tree(value) for key, value in data.items()}
    if isinstance(data, list):
        return [resolve_env_tree(item) for item in data]
    return data


class ScheduleSpec(BaseModel):
    """Schedule section of a config.

    For constant schedules tau and sigma (or mu) are the stepsizes; for dynamic
    schedules they are the limits, with solver defaults when omitted.
    """

    kind: ScheduleKind = ScheduleKind.DYNAMIC
    tau: float | None = None
    sigma: float | None = None
    mu: float | None = None
    rho: float | None = None
    rho_factor: float = 0.99
    decay: float = 0.5

    @field_validator("tau", "sigma", "mu", "rho")
    @classmethod
    def _positive(cls, v: float | None) -> float | None:
        if v is not None and v <= 0:
            raise ValueError(f"must be positive, got {v}")
        return v

    def to_schedule(
        self,
        solver: SolverName,
        beta: float = 0.0,
        d_norm: float = 1.0,
        lipschitz: float = 0.0,
    ) -> StepSchedule:
        """Build the StepSchedule this spec describes for a solver.

        Args:
            solver: Target solver; PDSDS uses (tau, sigma), every other solver (tau, mu)
            beta: Lipschitz constant of grad f (PDSDS defaults)
            d_norm: Upper bound on ||D|| (PDSDS defaults)
            lipschitz: Composed constant L (ADMM-form defaults)

        Raises:
            ConfigError: If a constant schedule misses a stepsize, or rho is set
                for an ADMM-form solver
        """
        if solver == SolverName.PDSDS:
            if self.kind == ScheduleKind.CONSTANT:
                if self.tau is None or self.sigma is None:
                    raise ConfigError("constant pdsds schedule needs tau and sigma")
                return StepSchedule.constant(self.tau, sigma=self.sigma, rho=self.rho, rho_factor=self.rho_factor)
            return StepSchedule.dynamic_pdsds(
                beta, d_norm, self.tau, self.sigma, decay=self.decay, rho_factor=self.rho_factor
            )
        if self.rho is not None:
            raise ConfigError(f"rho applies to pdsds schedules only, not {solver.value}")
        if self.kind == ScheduleKind.CONSTANT:
            if self.tau is None or self.mu is None:
                raise ConfigError(f"constant {solver.value} schedule needs tau and mu")
            return StepSchedule.constant(self.tau, mu=self.mu)
        return StepSchedule.dynamic_admmds(lipschitz, self.tau, self.mu, decay=self.decay)


class ExperimentConfig(BaseModel):
    """A benchmark experiment: the grid of solvers, tolerances and seeds."""

    solvers: list[SolverName] = Field(default_factory=lambda: [SolverName.MINIBATCH])
    n: int = 1024
    batches: int = 4
    eps: list[float] = Field(default_factory=lambda: [1e-5])
    seeds: list[int] = Field(default_factory=lambda: [0])
    max_iters: int = 40_000
    lam: float | None = None
    lam_scale: float = 0.1
    schedule: ScheduleSpec = Field(default_factory=ScheduleSpec)
    partition: PartitionMode = PartitionMode.CONTIGUOUS
    graph: str = "ring"
    graph_file: str | None = None
    activation: str = "single_agent"
    printed_dual_step: bool = False
    instance_file: str | None = None
    out_dir: str = "results"
    workers: int = 1
    timing: bool = True
    traces: bool = True
    record_every: int = 10

    @field_validator("n", "batches", "max_iters", "workers", "record_every")
    @classmethod
    def _positive_int(cls, v: int) -> int:
        if v <= 0:
            raise ValueError(f"must be positive, got {v}")
        return v

    @field_validator("eps")
    @classmethod
    def _positive_eps(cls, v: list[float]) -> list[float]:
        if not v or any(e <= 0 for e in v):
            raise ValueError(f"tolerances must be a non-empty list of positive numbers, got {v}")
        return v

    @field_validator("seeds", "solvers")
    @classmethod
    def _non_empty(cls, v: list[Any]) -> list[Any]:
        if not v:
            raise ValueError("must not be empty")
        return v

    def to_dict(self) -> dict[str, Any]:
        """Convert to dictionary."""
        return self.model_dump(mode="json")


class SolverConfig(BaseModel):
    """Per-run record of what was solved and how, written as YAML next to the trace."""

    algorithm: SolverName
    schedule: dict[str, Any] = Field(default_factory=dict)
    seed: int
    tolerance: float
    max_iters: int
    n: int
    batches: int
    lam: float
    graph: str | None = None

    def to_dict(self) -> dict[str, Any]:
        """Convert to dictionary."""
        return self.model_dump(mode="json")

    def to_text(self) -> str:
        """Serialize as a YAML key-value document."""
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_text(cls, text: str) -> "SolverConfig":
        try:
            return cls.model_validate(yaml.safe_load(text))
        except (yaml.YAMLError, ValidationError) as e:
            raise ConfigError(f"invalid solver config: {e}") from e


def load_config_file(path: Path) -> dict[str, Any]:
    """Load a YAML mapping with env references resolved.

    Raises:
        ConfigError: If the file cannot be read or is not a mapping
    """
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping, got {type(data).__name__}")
    return resolve_env_tree(data)


def load_config(path: Path | None = None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from an optional file plus overrides.

    Overrides whose value is None are ignored, so unset CLI flags fall back to
    the file and then to the model defaults.

    Raises:
        ConfigError: If the merged configuration is invalid
    """
    data: dict[str, Any] = load_config_file(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {e}") from e
    logger.debug(f"Loaded experiment config: {config.to_dict()}")
    return config


def load_schedule(path: Path) -> ScheduleSpec:
    """Load a schedule file (a bare schedule mapping, or one under a 'schedule' key)."""
    data = load_config_file(path)
    section = data.get("schedule", data)
    try:
        return ScheduleSpec.model_validate(section)
    except ValidationError as e:
        raise ConfigError(f"invalid schedule file {path}: {e}") from e
