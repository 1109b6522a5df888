"""Primal-dual solvers with dynamic stepsizes on min f(x) + g(x) + h(Dx).

Handles:
- PDSDS: relaxed primal-dual splitting with iteration-dependent tau_k, sigma_k, rho_k
- ADMMDS+: the ADMM-form splitting with tau_k, mu_k, restricted to maps with diagonal D^*D
- Schedule validation against the problem constants
- P-metric diagnostics and averaged-operator adaptors for the generic engine
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .engine import AveragedOperator, IterationTrace, StopRule, drive
from .prox import LinearMap, ProxFunction, inner, prox_conjugate
from .schedule import (
    ScheduleError,
    ScheduleReport,
    StepSchedule,
    admmds_delta,
    check_admmds_point,
    check_admmds_schedule,
    check_pdsds_point,
    check_pdsds_schedule,
    pdsds_delta,
)
from .smooth import SeparableSmooth, SmoothFunction
from .types import ErrorCode, ScheduleCondition, SolverError

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]


class UnsupportedStructureError(SolverError):
    """The ADMM-form primal step has no closed form for this (g, D) pair."""

    def __init__(self, message: str, code: int = ErrorCode.UNSUPPORTED_STRUCTURE):
        super().__init__(message, code)


@dataclass
class CompositeProblem:
    """min_x f(x) + g(x) + h(D x).

    Attributes:
        f: Smooth term; f.lipschitz is the constant beta used by schedule validation
        g: Proximable term on the primal space
        h: Proximable term on the range of D
        D: Linear map with adjoint and norm bound
        L: Lipschitz constant of the gradient of f composed with the inverse of D;
            derived from the diagonal of D^*D when omitted
    """

    f: SmoothFunction
    g: ProxFunction
    h: ProxFunction
    D: LinearMap
    L: float | None = None

    @property
    def beta(self) -> float:
        return self.f.lipschitz

    @property
    def d_norm(self) -> float:
        return self.D.norm_bound

    def gram_diagonal(self) -> Array:
        """Positive diagonal of D^*D.

        Raises:
            UnsupportedStructureError: If D^*D is not a positive diagonal
        """
        d = self.D.gram_diagonal
        if d is None:
            raise UnsupportedStructureError(
                f"{type(self.D).__name__} has no diagonal D^*D; the ADMM-form primal step needs one"
            )
        d = np.broadcast_to(np.asarray(d, dtype=np.float64), self.D.in_shape)
        if not np.all(d > 0):
            raise UnsupportedStructureError("D^*D has zero diagonal entries, D is not injective")
        return d

    def composed_lipschitz(self) -> float:
        """L = max_n beta_n / d_n for block-separable f, beta / min(d) otherwise."""
        if self.L is not None:
            return self.L
        d = self.gram_diagonal()
        if isinstance(self.f, SeparableSmooth) and d.ndim >= 1 and d.shape[0] == len(self.f.parts):
            per_block = d.reshape(d.shape[0], -1).min(axis=1)
            return float(np.max(self.f.block_lipschitz / per_block))
        return self.beta / float(d.min())

    def objective(self, x: Array) -> float:
        return self.f.value(x) + self.g.value(x) + self.h.value(self.D.apply(x))


@dataclass
class PrimalDualState:
    """z = (x, y) with the iteration counter."""

    x: Array
    y: Array
    k: int = 0

    def copy(self) -> "PrimalDualState":
        return PrimalDualState(self.x.copy(), self.y.copy(), self.k)


@dataclass
class ADMMState:
    """ADMM-form iterate (x, y, z, u) with the iteration counter."""

    x: Array
    y: Array
    z: Array
    u: Array
    k: int = 0

    def copy(self) -> "ADMMState":
        return ADMMState(self.x.copy(), self.y.copy(), self.z.copy(), self.u.copy(), self.k)


def validate_schedule(problem: CompositeProblem, schedule: StepSchedule, horizon: int) -> ScheduleReport:
    """Check a schedule against the problem constants at k = 0..horizon and at its limits.

    Primal-dual schedules are checked against beta and ||D||, ADMM-form schedules
    against the composed constant L.
    """
    if schedule.is_admm:
        return check_admmds_schedule(schedule, problem.composed_lipschitz(), horizon)
    return check_pdsds_schedule(schedule, problem.beta, problem.d_norm, horizon)


def _pdsds_parameters(
    problem: CompositeProblem, schedule: StepSchedule, k: int
) -> tuple[float, float, float]:
    if schedule.sigma is None:
        raise ScheduleError("PDSDS needs a sigma sequence")
    tau, sigma = schedule.tau(k), schedule.sigma(k)
    rho = schedule.rho(k) if schedule.rho is not None else None
    report = ScheduleReport(horizon=k)
    delta = check_pdsds_point(
        report, tau, sigma, rho, problem.beta, problem.d_norm, k, schedule.rho_factor
    )
    report.raise_if_invalid()
    assert delta is not None
    return tau, sigma, schedule.relaxation(k, delta)


def _admmds_parameters(
    problem: CompositeProblem, schedule: StepSchedule, k: int, lipschitz: float | None = None
) -> tuple[float, float]:
    if schedule.mu is None:
        raise ScheduleError("ADMMDS+ needs a mu sequence")
    tau, mu = schedule.tau(k), schedule.mu(k)
    report = ScheduleReport(horizon=k)
    L = problem.composed_lipschitz() if lipschitz is None else lipschitz
    check_admmds_point(report, tau, mu, L, k)
    report.raise_if_invalid()
    return tau, mu


def pdsds_tilde(
    problem: CompositeProblem, x: Array, y: Array, tau: float, sigma: float
) -> tuple[Array, Array]:
    """Unrelaxed primal-dual map (x, y) -> (x~, y~)."""
    y_tilde = prox_conjugate(problem.h, y + sigma * problem.D.apply(x), sigma)
    x_tilde = problem.g.prox(
        x - tau * problem.f.grad(x) - tau * problem.D.adjoint(2.0 * y_tilde - y), tau
    )
    return x_tilde, y_tilde


def pdsds_step(
    problem: CompositeProblem, schedule: StepSchedule, state: PrimalDualState
) -> PrimalDualState:
    """One relaxed primal-dual step.

    Raises:
        ScheduleError: If the schedule is invalid at state.k
    """
    tau, sigma, rho = _pdsds_parameters(problem, schedule, state.k)
    x_tilde, y_tilde = pdsds_tilde(problem, state.x, state.y, tau, sigma)
    return PrimalDualState(
        x=rho * x_tilde + (1.0 - rho) * state.x,
        y=rho * y_tilde + (1.0 - rho) * state.y,
        k=state.k + 1,
    )


def admmds_step(
    problem: CompositeProblem,
    schedule: StepSchedule,
    state: ADMMState,
    gram: Array | None = None,
) -> ADMMState:
    """One ADMM-form step with iteration-dependent tau_k, mu_k.

    z+ = prox_{mu h}(Dx + mu y); y+ = y + (Dx - z+)/mu;
    u+ = (1 - tau/mu) Dx + (tau/mu) z+; and with D^*D = diag(d),
    x+ = prox_{tau g/d}[(D^*(u+ - tau y+) - tau grad f(x)) / d].

    Raises:
        ScheduleError: If the schedule is invalid at state.k
        UnsupportedStructureError: If D^*D is not a positive diagonal
    """
    d = problem.gram_diagonal() if gram is None else gram
    tau, mu = _admmds_parameters(problem, schedule, state.k)
    D = problem.D
    dx = D.apply(state.x)
    z_new = problem.h.prox(dx + mu * state.y, mu)
    y_new = state.y + (dx - z_new) / mu
    u_new = (1.0 - tau / mu) * dx + (tau / mu) * z_new
    point = (D.adjoint(u_new - tau * y_new) - tau * problem.f.grad(state.x)) / d
    x_new = problem.g.prox(point, tau / d)
    return ADMMState(x=x_new, y=y_new, z=z_new, u=u_new, k=state.k + 1)


def p_metric_norm(
    problem: CompositeProblem,
    schedule: StepSchedule,
    x: ArrayLike,
    y: ArrayLike,
    k: int = 0,
) -> float:
    """sqrt(<z, P_k z>) with P_k (x, y) = (x/tau_k - D^*y, -Dx + y/sigma_k).

    Raises:
        ScheduleError: If P_k is not positive definite at k
    """
    if schedule.sigma is None:
        raise ScheduleError("the P-metric needs a sigma sequence")
    tau, sigma = schedule.tau(k), schedule.sigma(k)
    if not (tau > 0 and sigma > 0 and 1.0 / tau - sigma * problem.d_norm**2 > 0):
        raise ScheduleError(
            f"P is not positive definite at k={k} (tau={tau:.6g}, sigma={sigma:.6g})",
            condition=ScheduleCondition.STEP_BOUND,
            k=k,
        )
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    value = inner(xa, xa) / tau - 2.0 * inner(problem.D.apply(xa), ya) + inner(ya, ya) / sigma
    return math.sqrt(max(value, 0.0))


def _initial_primal(problem: CompositeProblem, x0: ArrayLike | None) -> Array:
    if x0 is None:
        return np.zeros(problem.D.in_shape)
    return np.array(x0, dtype=np.float64, copy=True)


def _initial_dual(problem: CompositeProblem, y0: ArrayLike | None) -> Array:
    if y0 is None:
        return np.zeros(problem.D.out_shape)
    return np.array(y0, dtype=np.float64, copy=True)


def _preflight(problem: CompositeProblem, schedule: StepSchedule, horizon: int, label: str) -> None:
    report = validate_schedule(problem, schedule, horizon)
    if not report.valid:
        logger.error(f"{label}: schedule rejected with {len(report.violations)} violation(s)")
    report.raise_if_invalid()


def solve_pdsds(
    problem: CompositeProblem,
    schedule: StepSchedule,
    stop: StopRule,
    x0: ArrayLike | None = None,
    y0: ArrayLike | None = None,
    *,
    record_every: int = 1,
    objective: Callable[[Array], float] | None = None,
    keep_history: bool = False,
) -> IterationTrace[PrimalDualState]:
    """Run PDSDS from (x0, y0) (zeros by default) until the stop rule fires.

    The schedule is validated over the whole horizon before the first step.
    """
    _preflight(problem, schedule, stop.max_iters, "pdsds")
    state = PrimalDualState(_initial_primal(problem, x0), _initial_dual(problem, y0))
    logger.info(f"pdsds: primal {problem.D.in_shape}, dual {problem.D.out_shape}, tol {stop.tol:g}")

    def step(s: PrimalDualState, k: int) -> tuple[PrimalDualState, dict[str, Any]]:
        return pdsds_step(problem, schedule, s), {}

    return drive(
        step,
        state,
        lambda s: s.x,
        stop,
        objective=(lambda s: objective(s.x)) if objective is not None else None,
        record_every=record_every,
        keep_history=keep_history,
        copy_state=PrimalDualState.copy,
        label="pdsds",
    )


def solve_admmds(
    problem: CompositeProblem,
    schedule: StepSchedule,
    stop: StopRule,
    x0: ArrayLike | None = None,
    y0: ArrayLike | None = None,
    *,
    record_every: int = 1,
    objective: Callable[[Array], float] | None = None,
    keep_history: bool = False,
) -> IterationTrace[ADMMState]:
    """Run ADMMDS+ from (x0, y0) (zeros by default) until the stop rule fires.

    Raises:
        UnsupportedStructureError: Before iterating, if D^*D is not a positive diagonal
        ScheduleError: Before iterating, if the schedule is invalid on the horizon
    """
    gram = problem.gram_diagonal()
    _preflight(problem, schedule, stop.max_iters, "admmds")
    x = _initial_primal(problem, x0)
    dx = problem.D.apply(x)
    state = ADMMState(x=x, y=_initial_dual(problem, y0), z=dx.copy(), u=dx.copy())
    logger.info(f"admmds: primal {problem.D.in_shape}, L {problem.composed_lipschitz():.6g}")

    def step(s: ADMMState, k: int) -> tuple[ADMMState, dict[str, Any]]:
        return admmds_step(problem, schedule, s, gram), {}

    return drive(
        step,
        state,
        lambda s: s.x,
        stop,
        objective=(lambda s: objective(s.x)) if objective is not None else None,
        record_every=record_every,
        keep_history=keep_history,
        copy_state=ADMMState.copy,
        label="admmds",
    )


@dataclass
class _FlatLayout:
    x_shape: tuple[int, ...]
    y_shape: tuple[int, ...]
    x_size: int = field(init=False)

    def __post_init__(self) -> None:
        self.x_size = int(np.prod(self.x_shape))

    @property
    def size(self) -> int:
        return self.x_size + int(np.prod(self.y_shape))

    def split(self, z: Array) -> tuple[Array, Array]:
        return z[: self.x_size].reshape(self.x_shape), z[self.x_size :].reshape(self.y_shape)

    def join(self, x: Array, y: Array) -> Array:
        return np.concatenate([np.ravel(x), np.ravel(y)])

    @property
    def block_slices(self) -> list[slice]:
        return [slice(0, self.x_size), slice(self.x_size, self.size)]


class PDSDSOperator(AveragedOperator):
    """The unrelaxed primal-dual map on flat (x, y) vectors.

    eta_k = 1/delta_k, so km_iterate with rho_k = relaxation(k) reproduces
    solve_pdsds.
    """

    def __init__(self, problem: CompositeProblem, schedule: StepSchedule):
        if schedule.sigma is None:
            raise ScheduleError("PDSDS needs a sigma sequence")
        self.problem = problem
        self.schedule = schedule
        self.layout = _FlatLayout(problem.D.in_shape, problem.D.out_shape)
        self.block_slices = self.layout.block_slices

    def apply(self, z: Array, k: int = 0) -> Array:
        assert self.schedule.sigma is not None
        x, y = self.layout.split(z)
        x_t, y_t = pdsds_tilde(self.problem, x, y, self.schedule.tau(k), self.schedule.sigma(k))
        return self.layout.join(x_t, y_t)

    def delta(self, k: int) -> float:
        assert self.schedule.sigma is not None
        return pdsds_delta(
            self.schedule.tau(k), self.schedule.sigma(k), self.problem.d_norm, self.problem.beta
        )

    def averaged_factor(self, k: int = 0) -> float:
        return 1.0 / self.delta(k)

    def relaxation(self, k: int) -> float:
        return self.schedule.relaxation(k, self.delta(k))


class ADMMDSOperator(AveragedOperator):
    """One ADMM-form step as a map on flat (x, y) vectors, with eta_k = 1/delta_k."""

    def __init__(self, problem: CompositeProblem, schedule: StepSchedule):
        if schedule.mu is None:
            raise ScheduleError("ADMMDS+ needs a mu sequence")
        self.problem = problem
        self.schedule = schedule
        self.gram = problem.gram_diagonal()
        self.lipschitz = problem.composed_lipschitz()
        self.layout = _FlatLayout(problem.D.in_shape, problem.D.out_shape)
        self.block_slices = self.layout.block_slices

    def apply(self, z: Array, k: int = 0) -> Array:
        x, y = self.layout.split(z)
        dx = self.problem.D.apply(x)
        state = ADMMState(x=x, y=y, z=dx, u=dx, k=k)
        out = admmds_step(self.problem, self.schedule, state, self.gram)
        return self.layout.join(out.x, out.y)

    def averaged_factor(self, k: int = 0) -> float:
        assert self.schedule.mu is not None
        return 1.0 / admmds_delta(self.schedule.tau(k), self.schedule.mu(k), self.lipschitz)
