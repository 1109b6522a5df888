"""Fixed-point iteration engine.

Handles:
- Seeded, splittable random streams (Philox counter-based generator)
- Averaged operators on block-structured flat vectors
- Block selectors with the coverage condition
- The generic iteration loop shared by every solver (stopping rule, trace records)
- Relaxed (KM) and randomized block (RKM) fixed-point iterations
"""

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .schedule import ScheduleError
from .types import ErrorCode, ScheduleCondition, SolverError, StopCriterion, TraceRecord

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

# Number of relaxation values checked up front when the horizon is unbounded
RELAXATION_PREFLIGHT = 100_000


class CoverageError(SolverError):
    """A selector or activation schedule leaves some block with zero probability."""

    def __init__(self, message: str, code: int = ErrorCode.COVERAGE):
        super().__init__(message, code)


def make_rng(seed: int | np.random.SeedSequence | None) -> np.random.Generator:
    """Create a Philox-backed generator from a seed or seed sequence."""
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Create `count` independent generators derived from one seed."""
    return [make_rng(child) for child in np.random.SeedSequence(seed).spawn(count)]


def even_blocks(size: int, count: int) -> list[slice]:
    """Split range(size) into `count` contiguous near-equal slices."""
    if count < 1 or count > size:
        raise SolverError(f"cannot split {size} entries into {count} blocks")
    bounds = np.linspace(0, size, count + 1).round().astype(int)
    return [slice(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:], strict=True)]


def compose_averaged(alpha1: float, alpha2: float) -> float:
    """Averagedness constant of the composition of an alpha1- and an alpha2-averaged map.

    Raises:
        SolverError: If either argument lies outside (0, 1)
    """
    for name, value in (("alpha1", alpha1), ("alpha2", alpha2)):
        if not 0.0 < value < 1.0:
            raise SolverError(f"{name} must lie in (0, 1), got {value}", code=ErrorCode.DOMAIN)
    return (alpha1 + alpha2 - 2.0 * alpha1 * alpha2) / (1.0 - alpha1 * alpha2)


class AveragedOperator(ABC):
    """Averaged map T on flat vectors split into blocks.

    Iteration-dependent maps T^k receive the counter k explicitly.
    """

    block_slices: list[slice]

    @property
    def block_count(self) -> int:
        return len(self.block_slices)

    @abstractmethod
    def apply(self, z: Array, k: int = 0) -> Array:
        """Evaluate T^k z."""

    def apply_block(self, z: Array, j: int, k: int = 0) -> Array:
        """Evaluate block j of T^k z."""
        return self.apply(z, k)[self.block_slices[j]]

    @abstractmethod
    def averaged_factor(self, k: int = 0) -> float:
        """Averagedness constant eta_k in (0, 1]."""


class FunctionOperator(AveragedOperator):
    """Averaged operator built from a plain callable."""

    def __init__(
        self,
        fn: Callable[[Array], Array],
        eta: float,
        size: int,
        blocks: int | Sequence[slice] = 1,
    ):
        if not 0.0 < eta <= 1.0:
            raise SolverError(f"averagedness constant must lie in (0, 1], got {eta}")
        self.fn = fn
        self.eta = eta
        self.block_slices = even_blocks(size, blocks) if isinstance(blocks, int) else list(blocks)

    def apply(self, z: Array, k: int = 0) -> Array:
        return self.fn(z)

    def averaged_factor(self, k: int = 0) -> float:
        return self.eta


class BlockSelector:
    """Distribution over subsets of block indices 0..J-1.

    Subsets with zero probability are dropped from the support. The union of the
    support must cover every block.
    """

    def __init__(
        self,
        block_count: int,
        subsets: Sequence[Sequence[int]],
        probabilities: Sequence[float] | None = None,
    ):
        if block_count < 1:
            raise CoverageError(f"block count must be positive, got {block_count}")
        if len(subsets) == 0:
            raise CoverageError("selector needs at least one subset")
        probs = (
            np.full(len(subsets), 1.0 / len(subsets))
            if probabilities is None
            else np.asarray(probabilities, dtype=np.float64)
        )
        if probs.shape != (len(subsets),):
            raise CoverageError(f"{len(subsets)} subsets but {probs.size} probabilities")
        if np.any(probs < 0) or not math.isclose(float(probs.sum()), 1.0, rel_tol=1e-9):
            raise CoverageError(f"probabilities must be nonnegative and sum to 1, got {probs}")

        self.block_count = block_count
        self.support: list[tuple[int, ...]] = []
        kept: list[float] = []
        for subset, p in zip(subsets, probs, strict=True):
            members = tuple(sorted(set(int(j) for j in subset)))
            if any(j < 0 or j >= block_count for j in members):
                raise CoverageError(f"subset {members} has indices outside 0..{block_count - 1}")
            if p > 0 and members:
                self.support.append(members)
                kept.append(float(p))
        self.probabilities = np.asarray(kept) / sum(kept) if kept else np.zeros(0)

        covered = set().union(*self.support) if self.support else set()
        missing = sorted(set(range(block_count)) - covered)
        if missing:
            raise CoverageError(f"blocks {missing} are never selected")

    @classmethod
    def uniform_single(cls, block_count: int) -> "BlockSelector":
        """Pick exactly one block uniformly at random."""
        return cls(block_count, [[j] for j in range(block_count)])

    @classmethod
    def full(cls, block_count: int) -> "BlockSelector":
        """Always select every block."""
        return cls(block_count, [list(range(block_count))])

    @property
    def is_full(self) -> bool:
        return len(self.support) == 1 and len(self.support[0]) == self.block_count

    def sample(self, rng: np.random.Generator) -> tuple[int, ...]:
        """Draw one subset; a deterministic function of the generator state."""
        if len(self.support) == 1:
            return self.support[0]
        return self.support[int(rng.choice(len(self.support), p=self.probabilities))]

    def inclusion_probabilities(self) -> Array:
        """P(j in selected subset) for every block j."""
        q = np.zeros(self.block_count)
        for subset, p in zip(self.support, self.probabilities, strict=True):
            q[list(subset)] += p
        return q


def weighted_norm(z: ArrayLike, block_slices: Sequence[slice], weights: ArrayLike) -> float:
    """Norm induced by sum_j w_j ||z_j||^2 over the given blocks."""
    arr = np.asarray(z, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    total = sum(float(w[j]) * float(np.sum(arr[s] ** 2)) for j, s in enumerate(block_slices))
    return math.sqrt(total)


def check_averaged(
    T: AveragedOperator,
    size: int,
    k: int = 0,
    trials: int = 50,
    seed: int = 0,
) -> float:
    """Sample pairs and return the worst violation of the averagedness inequality.

    Nonpositive (up to rounding) for an eta-averaged map.
    """
    eta = T.averaged_factor(k)
    rng = make_rng(seed)
    worst = -np.inf
    for _ in range(trials):
        z = rng.standard_normal(size)
        w = rng.standard_normal(size)
        tz, tw = T.apply(z, k), T.apply(w, k)
        lhs = float(np.sum((tz - tw) ** 2))
        rz, rw = z - tz, w - tw
        rhs = float(np.sum((z - w) ** 2)) - (1.0 - eta) / eta * float(np.sum((rz - rw) ** 2))
        worst = max(worst, lhs - rhs)
    return float(worst)


def relative_change(new: ArrayLike, old: ArrayLike) -> float:
    """||new - old|| / ||old||, or the absolute change when old is zero."""
    old_arr = np.asarray(old)
    diff = float(np.linalg.norm(np.asarray(new) - old_arr))
    base = float(np.linalg.norm(old_arr))
    return diff / base if base > 0.0 else diff


@dataclass
class StopRule:
    """When an iteration stops.

    Attributes:
        tol: Threshold on the measured quantity
        max_iters: Iteration cap
        criterion: Relative iterate change or fixed-point residual
        check_every: Window length; the relative change is measured between
            iterates check_every steps apart
    """

    tol: float = 1e-6
    max_iters: int = 40_000
    criterion: StopCriterion = StopCriterion.RELATIVE_CHANGE
    check_every: int = 1

    def __post_init__(self) -> None:
        if self.max_iters < 0 or self.check_every < 1 or self.tol < 0:
            raise SolverError(f"invalid stop rule {self}")


@dataclass
class IterationTrace[S]:
    """Result of one iteration run."""

    final: S
    iterations: int
    converged: bool
    measure: float
    records: list[TraceRecord] = field(default_factory=list)
    history: list[S] | None = None
    seed: int | None = None


def drive[S](
    step: Callable[[S, int], tuple[S, dict[str, Any]]],
    state: S,
    watch: Callable[[S], Array],
    stop: StopRule,
    *,
    objective: Callable[[S], float] | None = None,
    record_every: int = 1,
    keep_history: bool = False,
    copy_state: Callable[[S], S] | None = None,
    seed: int | None = None,
    label: str = "iteration",
) -> IterationTrace[S]:
    """Run `step` until the stop rule fires or the cap is reached.

    The step returns the next state and a dict of extra record fields; a
    "residual" entry there is used by the residual criterion, otherwise the
    relative change of `watch(state)` is recorded as the residual.

    Args:
        step: One iteration
        state: Initial state
        watch: Vector the relative-change criterion is measured on
        stop: Stopping rule
        objective: Optional objective recorded every `record_every` steps
        record_every: Record spacing (0 disables records)
        keep_history: Keep every intermediate state (initial state included)
        copy_state: Copy used for history snapshots
        seed: Seed recorded on the trace
        label: Name used in log messages
    """
    records: list[TraceRecord] = []
    history: list[S] | None = None
    snapshot = copy_state or (lambda s: s)
    if keep_history:
        history = [snapshot(state)]

    anchor = np.array(watch(state), copy=True)
    previous = anchor
    measure = math.inf
    converged = False
    iterations = 0

    for k in range(stop.max_iters):
        state, info = step(state, k)
        iterations = k + 1
        current = np.array(watch(state), copy=True)
        change = relative_change(current, previous)
        previous = current
        residual = float(info.pop("residual", change))

        if stop.criterion == StopCriterion.RESIDUAL:
            measure = residual
            converged = measure < stop.tol
        elif iterations % stop.check_every == 0:
            measure = change if stop.check_every == 1 else relative_change(current, anchor)
            anchor = current
            converged = measure < stop.tol

        if keep_history and history is not None:
            history.append(snapshot(state))
        if record_every and (iterations % record_every == 0 or converged):
            value = objective(state) if objective is not None else None
            records.append(TraceRecord(k=iterations, residual=residual, objective=value, **info))
            logger.debug(f"{label} k={iterations} residual={residual:.3e}")
        if converged:
            break

    if converged:
        logger.info(f"{label} converged after {iterations} iterations (measure {measure:.3e})")
    else:
        logger.info(f"{label} stopped at the cap of {iterations} iterations (measure {measure:.3e})")
    return IterationTrace(
        final=state,
        iterations=iterations,
        converged=converged,
        measure=measure,
        records=records,
        history=history,
        seed=seed,
    )


def _as_schedule(value: float | Callable[[int], float]) -> Callable[[int], float]:
    if callable(value):
        return value
    constant = float(value)
    return lambda k: constant


def _check_relaxation(
    T: AveragedOperator,
    relaxation: Callable[[int], float],
    horizon: int,
    strict: bool,
) -> None:
    for k in range(min(horizon, RELAXATION_PREFLIGHT)):
        r = relaxation(k)
        upper = 1.0 / T.averaged_factor(k)
        ok = (0.0 < r < upper) if strict else (0.0 <= r <= upper)
        if not ok:
            bounds = f"(0, {upper:.6g})" if strict else f"[0, {upper:.6g}]"
            logger.error(f"Relaxation {r} at k={k} outside {bounds}")
            raise ScheduleError(
                f"relaxation {r} at k={k} outside {bounds}",
                condition=ScheduleCondition.RELAXATION,
                k=k,
            )


def km_iterate(
    T: AveragedOperator,
    z0: ArrayLike,
    rho: float | Callable[[int], float],
    stop: StopRule,
    *,
    keep_history: bool = False,
    record_every: int = 1,
) -> IterationTrace[Array]:
    """Relaxed fixed-point iteration z <- z + rho_k (T^k z - z).

    Raises:
        ScheduleError: Before the first step if some rho_k lies outside [0, 1/eta_k]
    """
    relaxation = _as_schedule(rho)
    _check_relaxation(T, relaxation, stop.max_iters, strict=False)

    def step(z: Array, k: int) -> tuple[Array, dict[str, Any]]:
        tz = T.apply(z, k)
        return z + relaxation(k) * (tz - z), {"residual": float(np.linalg.norm(z - tz))}

    return drive(
        step,
        np.array(z0, dtype=np.float64, copy=True),
        lambda z: z,
        stop,
        keep_history=keep_history,
        record_every=record_every,
        label="km",
    )


def rkm_iterate(
    T: AveragedOperator,
    selector: BlockSelector,
    z0: ArrayLike,
    beta: float | Callable[[int], float],
    rng: np.random.Generator,
    stop: StopRule,
    *,
    seed: int | None = None,
    keep_history: bool = False,
    record_every: int = 1,
) -> IterationTrace[Array]:
    """Randomized block fixed-point iteration.

    At each step a subset of blocks is sampled and only those blocks move by
    beta_k (T^k z - z); every other block is carried over unchanged. With a
    selector that always returns every block this is exactly km_iterate.

    Raises:
        CoverageError: If the selector does not match the operator's blocks
        ScheduleError: Before the first step if some beta_k lies outside (0, 1/eta_k)
    """
    if selector.block_count != T.block_count:
        raise CoverageError(
            f"selector covers {selector.block_count} blocks, operator has {T.block_count}"
        )
    relaxation = _as_schedule(beta)
    _check_relaxation(T, relaxation, stop.max_iters, strict=True)

    def step(z: Array, k: int) -> tuple[Array, dict[str, Any]]:
        chosen = selector.sample(rng)
        b = relaxation(k)
        if len(chosen) == T.block_count:
            tz = T.apply(z, k)
            return z + b * (tz - z), {
                "residual": float(np.linalg.norm(z - tz)),
                "blocks_updated": list(chosen),
            }
        out = z.copy()
        moved = 0.0
        for j in chosen:
            s = T.block_slices[j]
            delta = T.apply_block(z, j, k) - z[s]
            out[s] = z[s] + b * delta
            moved += float(np.sum(delta**2))
        return out, {"residual": math.sqrt(moved), "blocks_updated": list(chosen)}

    return drive(
        step,
        np.array(z0, dtype=np.float64, copy=True),
        lambda z: z,
        stop,
        keep_history=keep_history,
        record_every=record_every,
        seed=seed,
        label="rkm",
    )
