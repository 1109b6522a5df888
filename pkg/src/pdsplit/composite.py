"""Sum-of-N-composite solvers on the product space with consensus coupling.

Handles:
- BatchProblem: per-batch smooth terms f_n and proximable terms g_n
- Deterministic minibatch ADMMDS+ (every batch updated each step)
- SMPDSDS: one randomly selected batch (or subset) updated each step
- Cached means of the primal and dual blocks, maintained incrementally
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, replace
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .engine import BlockSelector, CoverageError, IterationTrace, StopRule, drive, make_rng
from .prox import ConsensusIndicator, DomainError, IdentityMap, ProxFunction, SeparableSum, check_firmly_nonexpansive
from .schedule import ScheduleError, ScheduleReport, StepSchedule, check_admmds_point, check_admmds_schedule
from .smooth import SeparableSmooth, SmoothFunction, check_gradient
from .solvers import CompositeProblem

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

# Cached means are recomputed from scratch at this step spacing
MEAN_REFRESH_EVERY = 1000

# Tolerance on the initial dual mean of the deterministic variant
DUAL_MEAN_TOL = 1e-12


def spread(x: ArrayLike) -> float:
    """max_n ||x_n - mean(x)|| over the leading axis."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[0] == 0:
        return 0.0
    centered = arr - arr.mean(axis=0, keepdims=True)
    return float(np.max(np.linalg.norm(centered.reshape(arr.shape[0], -1), axis=1)))


@dataclass
class BatchProblem:
    """min_x sum_n f_n(x) + g_n(x) over a shared variable x in R^dim."""

    smooth: list[SmoothFunction]
    prox: list[ProxFunction]
    dim: int

    def __post_init__(self) -> None:
        if len(self.smooth) == 0 or len(self.smooth) != len(self.prox):
            raise DomainError(
                f"need matching non-empty term lists, got {len(self.smooth)} and {len(self.prox)}"
            )

    @property
    def batches(self) -> int:
        return len(self.smooth)

    @property
    def lipschitz(self) -> float:
        """Shared Lipschitz constant: the largest per-batch gradient constant."""
        return max(f.lipschitz for f in self.smooth)

    def objective(self, x: ArrayLike) -> float:
        """sum_n f_n(x) + g_n(x) at a single point x."""
        point = np.asarray(x, dtype=np.float64)
        return float(sum(f.value(point) + g.value(point) for f, g in zip(self.smooth, self.prox, strict=True)))

    def as_composite(self) -> CompositeProblem:
        """The product-space form with D = I and h the consensus indicator."""
        return CompositeProblem(
            f=SeparableSmooth(self.smooth),
            g=SeparableSum(self.prox),
            h=ConsensusIndicator(self.batches),
            D=IdentityMap((self.batches, self.dim)),
        )

    def check_assumptions(self, seed: int = 0) -> dict[str, float]:
        """Worst gradient and firm-nonexpansiveness gaps over all batches."""
        rng = make_rng(seed)
        grad_gap = 0.0
        prox_gap = -np.inf
        for n, (f, g) in enumerate(zip(self.smooth, self.prox, strict=True)):
            grad_gap = max(grad_gap, check_gradient(f, rng.standard_normal(self.dim), seed=seed + n))
            prox_gap = max(prox_gap, check_firmly_nonexpansive(g, 1.0, (self.dim,), trials=20, seed=seed + n))
        return {"gradient": grad_gap, "firm_nonexpansive": float(prox_gap)}


@dataclass
class BatchState:
    """Per-batch primal and dual blocks with cached sums."""

    x: Array
    y: Array
    x_sum: Array
    y_sum: Array
    k: int = 0
    since_refresh: int = 0

    @classmethod
    def create(cls, x: ArrayLike, y: ArrayLike) -> "BatchState":
        xa = np.array(x, dtype=np.float64, copy=True)
        ya = np.array(y, dtype=np.float64, copy=True)
        if xa.shape != ya.shape or xa.ndim != 2:
            raise DomainError(f"x and y must share a (N, dim) shape, got {xa.shape} and {ya.shape}")
        return cls(x=xa, y=ya, x_sum=xa.sum(axis=0), y_sum=ya.sum(axis=0))

    @property
    def batches(self) -> int:
        return self.x.shape[0]

    @property
    def x_mean(self) -> Array:
        return self.x_sum / self.batches

    @property
    def y_mean(self) -> Array:
        return self.y_sum / self.batches

    def refresh(self) -> None:
        """Recompute the cached sums from the blocks."""
        self.x_sum = self.x.sum(axis=0)
        self.y_sum = self.y.sum(axis=0)
        self.since_refresh = 0

    def copy(self) -> "BatchState":
        return BatchState(
            self.x.copy(), self.y.copy(), self.x_sum.copy(), self.y_sum.copy(), self.k, self.since_refresh
        )


def _parameters(bp: BatchProblem, schedule: StepSchedule, k: int) -> tuple[float, float]:
    if schedule.mu is None:
        raise ScheduleError("batch solvers need a mu sequence")
    tau, mu = schedule.tau(k), schedule.mu(k)
    report = ScheduleReport(horizon=k)
    check_admmds_point(report, tau, mu, bp.lipschitz, k)
    report.raise_if_invalid()
    return tau, mu


def minibatch_step(bp: BatchProblem, schedule: StepSchedule, st: BatchState) -> BatchState:
    """One deterministic minibatch ADMMDS+ step over all batches.

    y_n+ = y_n + (x_n - xbar)/mu and
    x_n+ = prox_{tau g_n}[(1 - 2 tau/mu) x_n - tau grad f_n(x_n) + 2 (tau/mu) xbar - tau y_n].

    Raises:
        ScheduleError: If the schedule is invalid at st.k
    """
    tau, mu = _parameters(bp, schedule, st.k)
    x_bar = st.x_mean
    y_new = st.y + (st.x - x_bar) / mu
    x_new = np.empty_like(st.x)
    for n, (f, g) in enumerate(zip(bp.smooth, bp.prox, strict=True)):
        xn = st.x[n]
        point = (1.0 - 2.0 * tau / mu) * xn - tau * f.grad(xn) + 2.0 * (tau / mu) * x_bar - tau * st.y[n]
        x_new[n] = g.prox(point, tau)
    out = BatchState.create(x_new, y_new)
    out.k = st.k + 1
    return out


def smpdsds_step(
    bp: BatchProblem,
    schedule: StepSchedule,
    st: BatchState,
    selector: BlockSelector,
    rng: np.random.Generator,
) -> tuple[BatchState, tuple[int, ...]]:
    """One randomized step updating only the sampled batches.

    For every sampled n, with the means taken before the step:
    y_n+ = y_n - ybar + (x_n - xbar)/mu and
    x_n+ = prox_{tau g_n}[(1 - 2 tau/mu) x_n - tau grad f_n(x_n) - tau y_n + 2 tau (xbar/mu + ybar)].
    Unsampled batches are carried over unchanged.

    Returns:
        The next state and the sampled batch indices
    """
    tau, mu = _parameters(bp, schedule, st.k)
    chosen = selector.sample(rng)
    x_bar, y_bar = st.x_mean, st.y_mean
    out = st.copy()
    shift = 2.0 * tau * (x_bar / mu + y_bar)
    for n in chosen:
        xn, yn = st.x[n], st.y[n]
        y_new = yn - y_bar + (xn - x_bar) / mu
        point = (1.0 - 2.0 * tau / mu) * xn - tau * bp.smooth[n].grad(xn) - tau * yn + shift
        x_new = bp.prox[n].prox(point, tau)
        out.x_sum += x_new - xn
        out.y_sum += y_new - yn
        out.x[n] = x_new
        out.y[n] = y_new
    out.k = st.k + 1
    out.since_refresh = st.since_refresh + 1
    if len(chosen) == bp.batches or out.since_refresh >= MEAN_REFRESH_EVERY:
        out.refresh()
    return out, chosen


def _initial_state(bp: BatchProblem, x0: ArrayLike | None, y0: ArrayLike | None) -> BatchState:
    shape = (bp.batches, bp.dim)
    if x0 is None:
        x = np.zeros(shape)
    else:
        x = np.asarray(x0, dtype=np.float64)
        x = np.broadcast_to(x, shape).copy() if x.shape == (bp.dim,) else x
    y = np.zeros(shape) if y0 is None else np.asarray(y0, dtype=np.float64)
    return BatchState.create(x, y)


def _preflight(bp: BatchProblem, schedule: StepSchedule, horizon: int, label: str) -> None:
    if schedule.mu is None:
        raise ScheduleError(f"{label} needs a mu sequence")
    report = check_admmds_schedule(schedule, bp.lipschitz, horizon)
    if not report.valid:
        logger.error(f"{label}: schedule rejected with {len(report.violations)} violation(s)")
    report.raise_if_invalid()


def run_minibatch(
    bp: BatchProblem,
    schedule: StepSchedule,
    stop: StopRule,
    x0: ArrayLike | None = None,
    y0: ArrayLike | None = None,
    *,
    record_every: int = 1,
    objective: Callable[[Array], float] | None = None,
    keep_history: bool = False,
) -> IterationTrace[BatchState]:
    """Run deterministic minibatch ADMMDS+; the stop rule watches the mean iterate.

    Raises:
        DomainError: If the initial duals do not average to zero
        ScheduleError: If the schedule is invalid on the horizon
    """
    state = _initial_state(bp, x0, y0)
    scale = 1.0 + float(np.max(np.abs(state.y))) if state.y.size else 1.0
    if float(np.max(np.abs(state.y_mean))) > DUAL_MEAN_TOL * scale:
        raise DomainError("initial duals of the deterministic variant must average to zero")
    _preflight(bp, schedule, stop.max_iters, "minibatch")
    logger.info(f"minibatch: N={bp.batches}, dim={bp.dim}, L={bp.lipschitz:.6g}")

    def step(s: BatchState, k: int) -> tuple[BatchState, dict[str, Any]]:
        return minibatch_step(bp, schedule, s), {}

    return drive(
        step,
        state,
        lambda s: s.x_mean,
        stop,
        objective=(lambda s: objective(s.x_mean)) if objective is not None else None,
        record_every=record_every,
        keep_history=keep_history,
        copy_state=BatchState.copy,
        label="minibatch",
    )


def run_smpdsds(
    bp: BatchProblem,
    schedule: StepSchedule,
    stop: StopRule,
    selector: BlockSelector | None = None,
    seed: int = 0,
    x0: ArrayLike | None = None,
    y0: ArrayLike | None = None,
    *,
    rng: np.random.Generator | None = None,
    record_every: int = 1,
    objective: Callable[[Array], float] | None = None,
    keep_history: bool = False,
) -> IterationTrace[BatchState]:
    """Run SMPDSDS with uniform single-batch selection unless a selector is given.

    A stop window of one step is widened to N steps so that a single
    unchanged-looking step cannot end the run.

    Raises:
        CoverageError: If the selector does not cover every batch
        ScheduleError: If the schedule is invalid on the horizon
    """
    selector = BlockSelector.uniform_single(bp.batches) if selector is None else selector
    if selector.block_count != bp.batches:
        raise CoverageError(f"selector covers {selector.block_count} batches, problem has {bp.batches}")
    if stop.check_every == 1 and not selector.is_full:
        stop = replace(stop, check_every=bp.batches)
    _preflight(bp, schedule, stop.max_iters, "smpdsds")
    generator = make_rng(seed) if rng is None else rng
    state = _initial_state(bp, x0, y0)
    logger.info(f"smpdsds: N={bp.batches}, dim={bp.dim}, seed={seed}, window={stop.check_every}")

    def step(s: BatchState, k: int) -> tuple[BatchState, dict[str, Any]]:
        nxt, chosen = smpdsds_step(bp, schedule, s, selector, generator)
        return nxt, {"batch_selected": list(chosen)}

    return drive(
        step,
        state,
        lambda s: s.x_mean,
        stop,
        objective=(lambda s: objective(s.x_mean)) if objective is not None else None,
        record_every=record_every,
        keep_history=keep_history,
        copy_state=BatchState.copy,
        seed=seed,
        label="smpdsds",
    )


def batch_spread(st: BatchState) -> float:
    """Consensus spread max_n ||x_n - xbar|| of a batch state."""
    return spread(st.x)

