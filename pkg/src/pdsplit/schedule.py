"""Stepsize schedules and their validation.

A StepSchedule carries the sequences tau_k, sigma_k (primal-dual) or mu_k
(ADMM form) and optionally rho_k. When rho_k is not given it defaults to
rho_factor * delta_k, where delta_k is the relaxation ceiling implied by the
stepsizes at iteration k.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

from .types import ErrorCode, ScheduleCondition, ScheduleKind, SolverError

logger = logging.getLogger(__name__)

# Dynamic schedules approach their limits like 1 + DEFAULT_DECAY/(k+1)
DEFAULT_DECAY = 0.5

# Default rho_k = DEFAULT_RHO_FACTOR * delta_k
DEFAULT_RHO_FACTOR = 0.99

# Clipping keeps 1/tau_k at least this factor inside the step bound
CLIP_MARGIN = 0.99

StepSequence = Callable[[int], float]


class ScheduleError(SolverError):
    """A stepsize schedule violates a convergence condition."""

    def __init__(
        self,
        message: str,
        condition: ScheduleCondition | None = None,
        k: int | None = None,
        code: int = ErrorCode.SCHEDULE_INVALID,
    ):
        super().__init__(message, code)
        self.condition = condition
        self.k = k


def _constant(value: float) -> StepSequence:
    return lambda k: value


@dataclass
class StepSchedule:
    """Iteration-dependent stepsizes.

    Attributes:
        tau: Primal stepsize tau_k
        sigma: Dual stepsize sigma_k (primal-dual form)
        mu: Penalty stepsize mu_k (ADMM form)
        rho: Relaxation rho_k; None means rho_factor * delta_k (primal-dual form only)
        rho_factor: Multiplier used when rho is None (primal-dual form only)
        tau_limit: Declared limit of tau_k
        sigma_limit: Declared limit of sigma_k
        mu_limit: Declared limit of mu_k
        rho_limit: Declared limit of rho_k (only meaningful when rho is given)
        kind: Schedule family, recorded in configs and traces
        params: Constructor parameters, recorded in configs and traces
    """

    tau: StepSequence
    sigma: StepSequence | None = None
    mu: StepSequence | None = None
    rho: StepSequence | None = None
    rho_factor: float = DEFAULT_RHO_FACTOR
    tau_limit: float | None = None
    sigma_limit: float | None = None
    mu_limit: float | None = None
    rho_limit: float | None = None
    kind: ScheduleKind = ScheduleKind.DYNAMIC
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if (self.sigma is None) == (self.mu is None):
            raise ScheduleError("a schedule needs exactly one of sigma (primal-dual) or mu (ADMM)")
        if self.mu is not None and self.rho is not None:
            # the ADMM-form step has no relaxation
            raise ScheduleError(
                "rho is only defined for primal-dual schedules; drop rho or use sigma",
                condition=ScheduleCondition.RELAXATION,
            )

    @property
    def is_admm(self) -> bool:
        return self.mu is not None

    def relaxation(self, k: int, delta: float) -> float:
        """rho_k, falling back to rho_factor * delta_k."""
        if self.rho is not None:
            return self.rho(k)
        return self.rho_factor * delta

    @classmethod
    def constant(
        cls,
        tau: float,
        sigma: float | None = None,
        mu: float | None = None,
        rho: float | None = None,
        rho_factor: float = DEFAULT_RHO_FACTOR,
    ) -> "StepSchedule":
        """Fixed stepsizes; the limits are the constants themselves."""
        params = {"tau": tau}
        if sigma is not None:
            params["sigma"] = sigma
        if mu is not None:
            params["mu"] = mu
        if rho is not None:
            params["rho"] = rho
        return cls(
            tau=_constant(tau),
            sigma=None if sigma is None else _constant(sigma),
            mu=None if mu is None else _constant(mu),
            rho=None if rho is None else _constant(rho),
            rho_factor=rho_factor,
            tau_limit=tau,
            sigma_limit=sigma,
            mu_limit=mu,
            rho_limit=rho,
            kind=ScheduleKind.CONSTANT,
            params=params,
        )

    @classmethod
    def dynamic_pdsds(
        cls,
        beta: float,
        d_norm: float,
        tau_limit: float | None = None,
        sigma_limit: float | None = None,
        decay: float = DEFAULT_DECAY,
        rho_factor: float = DEFAULT_RHO_FACTOR,
    ) -> "StepSchedule":
        """Default dynamic primal-dual schedule.

        tau_k = tau_inf (1 + a/(k+1)) and sigma_k = sigma_inf / (1 + a/(k+1)),
        with tau_k clipped so that 1/tau_k - sigma_k ||D||^2 > beta/2 at every k.
        Default limits are tau_inf = 0.8/beta and sigma_inf = beta/(4 ||D||^2),
        which give delta_inf = 1.5; with beta = 0 both default to 0.9/||D||.
        """
        if tau_limit is None or sigma_limit is None:
            if beta > 0 and d_norm > 0:
                tau_default, sigma_default = 0.8 / beta, beta / (4.0 * d_norm**2)
            elif d_norm > 0:
                tau_default = sigma_default = 0.9 / d_norm
            else:
                tau_default = 0.8 / beta if beta > 0 else 1.0
                sigma_default = 1.0
            tau_limit = tau_default if tau_limit is None else tau_limit
            sigma_limit = sigma_default if sigma_limit is None else sigma_limit

        t_inf, s_inf = tau_limit, sigma_limit

        def sigma(k: int) -> float:
            return s_inf / (1.0 + decay / (k + 1))

        def tau(k: int) -> float:
            candidate = t_inf * (1.0 + decay / (k + 1))
            return min(candidate, CLIP_MARGIN / (beta / 2.0 + sigma(k) * d_norm**2))

        return cls(
            tau=tau,
            sigma=sigma,
            rho_factor=rho_factor,
            tau_limit=t_inf,
            sigma_limit=s_inf,
            kind=ScheduleKind.DYNAMIC,
            params={"tau_limit": t_inf, "sigma_limit": s_inf, "decay": decay, "rho_factor": rho_factor},
        )

    @classmethod
    def dynamic_admmds(
        cls,
        lipschitz: float,
        tau_limit: float | None = None,
        mu_limit: float | None = None,
        decay: float = DEFAULT_DECAY,
    ) -> "StepSchedule":
        """Default dynamic ADMM-form schedule.

        tau_k = tau_inf (1 + a/(k+1)) and mu_k = mu_inf (1 + a/(k+1)), with
        tau_k clipped so that 1/tau_k - 1/mu_k > L/2 at every k. Default limits
        are tau_inf = 0.8/L and mu_inf = 4/L; with L = 0, tau_inf = 1, mu_inf = 2.
        """
        if lipschitz > 0:
            tau_default, mu_default = 0.8 / lipschitz, 4.0 / lipschitz
        else:
            tau_default, mu_default = 1.0, 2.0
        t_inf = tau_default if tau_limit is None else tau_limit
        m_inf = mu_default if mu_limit is None else mu_limit

        def mu(k: int) -> float:
            return m_inf * (1.0 + decay / (k + 1))

        def tau(k: int) -> float:
            candidate = t_inf * (1.0 + decay / (k + 1))
            return min(candidate, CLIP_MARGIN / (lipschitz / 2.0 + 1.0 / mu(k)))

        return cls(
            tau=tau,
            mu=mu,
            tau_limit=t_inf,
            mu_limit=m_inf,
            kind=ScheduleKind.DYNAMIC,
            params={"tau_limit": t_inf, "mu_limit": m_inf, "decay": decay},
        )


def pdsds_gap(tau: float, sigma: float, d_norm: float) -> float:
    """1/tau - sigma ||D||^2."""
    return 1.0 / tau - sigma * d_norm**2


def pdsds_delta(tau: float, sigma: float, d_norm: float, beta: float) -> float:
    """Relaxation ceiling delta = 2 - (beta/2) / (1/tau - sigma ||D||^2).

    Raises:
        ScheduleError: If 1/tau - sigma ||D||^2 is not positive
    """
    gap = pdsds_gap(tau, sigma, d_norm)
    if gap <= 0:
        raise ScheduleError(
            f"1/tau - sigma*||D||^2 = {gap:.6g} is not positive",
            condition=ScheduleCondition.STEP_BOUND,
        )
    return 2.0 - (beta / 2.0) / gap


def pdsds_kappa(tau: float, sigma: float, d_norm: float, beta: float) -> float:
    """kappa = (1/tau - sigma ||D||^2) / beta, so that delta = 2 - 1/(2 kappa)."""
    if beta <= 0:
        return math.inf
    return pdsds_gap(tau, sigma, d_norm) / beta


def admmds_delta(tau: float, mu: float, lipschitz: float) -> float:
    """Relaxation ceiling of the ADMM-form map, 2 - (L/2) / (1/tau - 1/mu).

    Raises:
        ScheduleError: If 1/tau - 1/mu is not positive
    """
    gap = 1.0 / tau - 1.0 / mu
    if gap <= 0:
        raise ScheduleError(
            f"1/tau - 1/mu = {gap:.6g} is not positive",
            condition=ScheduleCondition.ADMMDS_STEP_BOUND,
        )
    return 2.0 - (lipschitz / 2.0) / gap


@dataclass
class ScheduleViolation:
    """One violated condition; k is None for the declared limits."""

    condition: ScheduleCondition
    k: int | None
    message: str


@dataclass
class ScheduleReport:
    """Outcome of checking a schedule over a horizon and at its limits."""

    horizon: int
    deltas: list[float | None] = field(default_factory=list)
    delta_limit: float | None = None
    violations: list[ScheduleViolation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def conditions(self) -> set[ScheduleCondition]:
        """Distinct violated conditions."""
        return {v.condition for v in self.violations}

    def failing_iterations(self, condition: ScheduleCondition | None = None) -> list[int]:
        """Iterations (not limits) at which a condition fails."""
        return sorted(
            {
                v.k
                for v in self.violations
                if v.k is not None and (condition is None or v.condition == condition)
            }
        )

    def raise_if_invalid(self) -> None:
        """Raise a ScheduleError naming the first violation."""
        if self.violations:
            first = self.violations[0]
            where = "the declared limits" if first.k is None else f"k={first.k}"
            logger.error(f"Schedule invalid at {where}: {first.message}")
            raise ScheduleError(
                f"{first.condition.value} violated at {where}: {first.message}",
                condition=first.condition,
                k=first.k,
            )


def _check_relaxation(
    report: ScheduleReport,
    rho: float,
    delta: float,
    k: int | None,
) -> None:
    if not 0.0 < rho < delta:
        report.violations.append(
            ScheduleViolation(
                ScheduleCondition.RELAXATION, k, f"rho={rho:.6g} outside (0, delta={delta:.6g})"
            )
        )


def check_pdsds_point(
    report: ScheduleReport,
    tau: float,
    sigma: float,
    rho: float | None,
    beta: float,
    d_norm: float,
    k: int | None,
    rho_factor: float,
) -> float | None:
    """Check the primal-dual conditions at one point; returns delta when defined."""
    if not (tau > 0 and sigma > 0):
        condition = ScheduleCondition.POSITIVITY if k is not None else ScheduleCondition.LIMITS
        report.violations.append(
            ScheduleViolation(condition, k, f"tau={tau:.6g}, sigma={sigma:.6g} must be positive")
        )
        return None
    gap = pdsds_gap(tau, sigma, d_norm)
    if not gap > beta / 2.0:
        condition = ScheduleCondition.STEP_BOUND if k is not None else ScheduleCondition.LIMITS
        report.violations.append(
            ScheduleViolation(
                condition, k, f"1/tau - sigma*||D||^2 = {gap:.6g} is not above beta/2 = {beta / 2.0:.6g}"
            )
        )
        return None
    delta = 2.0 - (beta / 2.0) / gap
    _check_relaxation(report, rho_factor * delta if rho is None else rho, delta, k)
    return delta


def check_pdsds_schedule(
    schedule: StepSchedule,
    beta: float,
    d_norm: float,
    horizon: int,
) -> ScheduleReport:
    """Check primal-dual step conditions at k = 0..horizon and at the declared limits.

    A schedule without a sigma sequence is reported as a LIMITS violation.
    """
    report = ScheduleReport(horizon=horizon)
    if schedule.sigma is None:
        report.violations.append(
            ScheduleViolation(ScheduleCondition.LIMITS, None, "primal-dual validation needs a sigma sequence")
        )
        return report
    for k in range(horizon + 1):
        rho = schedule.rho(k) if schedule.rho is not None else None
        report.deltas.append(
            check_pdsds_point(
                report, schedule.tau(k), schedule.sigma(k), rho, beta, d_norm, k, schedule.rho_factor
            )
        )
    if schedule.tau_limit is not None and schedule.sigma_limit is not None:
        report.delta_limit = check_pdsds_point(
            report,
            schedule.tau_limit,
            schedule.sigma_limit,
            schedule.rho_limit if schedule.rho is not None else None,
            beta,
            d_norm,
            None,
            schedule.rho_factor,
        )
    return report


def check_admmds_point(
    report: ScheduleReport,
    tau: float,
    mu: float,
    lipschitz: float,
    k: int | None,
) -> float | None:
    """Check the ADMM-form conditions at one point; returns delta when defined."""
    if not (tau > 0 and mu > 0):
        condition = ScheduleCondition.POSITIVITY if k is not None else ScheduleCondition.LIMITS
        report.violations.append(
            ScheduleViolation(condition, k, f"tau={tau:.6g}, mu={mu:.6g} must be positive")
        )
        return None
    gap = 1.0 / tau - 1.0 / mu
    if not gap > lipschitz / 2.0:
        condition = ScheduleCondition.ADMMDS_STEP_BOUND if k is not None else ScheduleCondition.LIMITS
        report.violations.append(
            ScheduleViolation(
                condition, k, f"1/tau - 1/mu = {gap:.6g} is not above L/2 = {lipschitz / 2.0:.6g}"
            )
        )
        return None
    return 2.0 - (lipschitz / 2.0) / gap


def check_admmds_schedule(
    schedule: StepSchedule,
    lipschitz: float,
    horizon: int,
) -> ScheduleReport:
    """Check ADMM-form step conditions at k = 0..horizon and at the declared limits."""
    report = ScheduleReport(horizon=horizon)
    if schedule.mu is None:
        report.violations.append(
            ScheduleViolation(ScheduleCondition.LIMITS, None, "ADMM-form validation needs a mu sequence")
        )
        return report
    for k in range(horizon + 1):
        report.deltas.append(check_admmds_point(report, schedule.tau(k), schedule.mu(k), lipschitz, k))
    if schedule.tau_limit is not None and schedule.mu_limit is not None:
        report.delta_limit = check_admmds_point(
            report, schedule.tau_limit, schedule.mu_limit, lipschitz, None
        )
    return report
