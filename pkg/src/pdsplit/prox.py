"""Proximity operators, projections and linear maps.

Handles:
- Closed-form proximity operators (zero, l1, squared distance, consensus indicators)
- Conjugate proximity operators through the Moreau decomposition
- Linear maps with adjoints and operator-norm upper bounds
- Sampled diagnostics (firm nonexpansiveness, adjoint consistency)

Every vector is a dense float64 ndarray; block-structured points keep their
leading block axis (for example ``(N, dim)`` for N batch copies).
"""

import logging
from abc import ABC, abstractmethod
from collections.abc import Sequence
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .engine import make_rng
from .types import ErrorCode, SolverError

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

# Multiplier applied to power-iteration estimates to obtain an upper bound on ||D||
NORM_SAFETY_FACTOR = 1.01

# Relative slack under which a point counts as inside an indicator's set
FEASIBILITY_TOL = 1e-9


class DomainError(SolverError):
    """Input outside the domain of an operator."""

    def __init__(self, message: str, code: int = ErrorCode.DOMAIN):
        super().__init__(message, code)


def inner(a: ArrayLike, b: ArrayLike) -> float:
    """Euclidean inner product of two equally shaped arrays."""
    return float(np.vdot(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)))


def _as_finite(x: ArrayLike, name: str = "x") -> Array:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite components")
    return arr


def prox_l1(x: ArrayLike, t: ArrayLike) -> Array:
    """Soft thresholding, the proximity operator of t*||.||_1.

    Args:
        x: Point to threshold
        t: Positive threshold, scalar or broadcastable to x

    Returns:
        sign(x_i) * max(|x_i| - t_i, 0) componentwise

    Raises:
        DomainError: If x has non-finite components or t is not positive
    """
    arr = _as_finite(x)
    thresh = np.asarray(t, dtype=np.float64)
    if not np.all(thresh > 0):
        raise DomainError(f"l1 threshold must be positive, got {t}")
    return np.sign(arr) * np.maximum(np.abs(arr) - thresh, 0.0)


def project_consensus(parts: Sequence[ArrayLike]) -> tuple[Array, ...]:
    """Project an N-tuple onto the consensus subspace x_1 = ... = x_N.

    Args:
        parts: N vectors of identical shape

    Returns:
        N copies of the arithmetic mean

    Raises:
        DomainError: If the tuple is empty or the shapes differ
    """
    if len(parts) == 0:
        raise DomainError("consensus projection needs at least one component")
    arrays = [np.asarray(p, dtype=np.float64) for p in parts]
    shape = arrays[0].shape
    for i, arr in enumerate(arrays):
        if arr.shape != shape:
            raise DomainError(f"component {i} has shape {arr.shape}, expected {shape}")
    mean = np.mean(np.stack(arrays), axis=0)
    return tuple(mean.copy() for _ in arrays)


class ProxFunction(ABC):
    """Convex function with a closed-form proximity operator.

    ``prox(point, scale)`` returns argmin_w scale*phi(w) + 1/2 ||w - point||^2.
    Separable functions accept an array-valued scale broadcastable to the point,
    which applies a per-component scale.
    """

    @abstractmethod
    def prox(self, point: Array, scale: ArrayLike) -> Array:
        """Evaluate prox_{scale * phi}(point)."""

    @abstractmethod
    def value(self, point: Array) -> float:
        """Evaluate phi(point); indicators return +inf outside their set."""


class ZeroFunction(ProxFunction):
    """The zero function; its prox is the identity."""

    def prox(self, point: Array, scale: ArrayLike) -> Array:
        return np.array(point, dtype=np.float64, copy=True)

    def value(self, point: Array) -> float:
        return 0.0


class L1Norm(ProxFunction):
    """Weighted l1 norm lam * ||x||_1."""

    def __init__(self, weight: float = 1.0):
        if weight < 0:
            raise DomainError(f"l1 weight must be nonnegative, got {weight}")
        self.weight = float(weight)

    def prox(self, point: Array, scale: ArrayLike) -> Array:
        if self.weight == 0.0:
            return _as_finite(point).copy()
        return prox_l1(point, np.asarray(scale, dtype=np.float64) * self.weight)

    def value(self, point: Array) -> float:
        return self.weight * float(np.sum(np.abs(point)))


class SquaredDistance(ProxFunction):
    """Weighted squared distance w/2 * ||x - c||^2."""

    def __init__(self, center: ArrayLike, weight: float = 1.0):
        if weight < 0:
            raise DomainError(f"weight must be nonnegative, got {weight}")
        self.center = np.asarray(center, dtype=np.float64)
        self.weight = float(weight)

    def prox(self, point: Array, scale: ArrayLike) -> Array:
        s = np.asarray(scale, dtype=np.float64) * self.weight
        return (_as_finite(point) + s * self.center) / (1.0 + s)

    def value(self, point: Array) -> float:
        diff = np.asarray(point) - self.center
        return 0.5 * self.weight * inner(diff, diff)


class ConsensusIndicator(ProxFunction):
    """Indicator of {x : x_1 = ... = x_N} on points with N leading blocks."""

    def __init__(self, blocks: int):
        if blocks < 1:
            raise DomainError(f"consensus needs at least one block, got {blocks}")
        self.blocks = blocks

    def prox(self, point: Array, scale: ArrayLike) -> Array:
        arr = _as_finite(point)
        if arr.size % self.blocks != 0:
            raise DomainError(f"size {arr.size} does not split into {self.blocks} blocks")
        stacked = arr.reshape(self.blocks, -1)
        mean = stacked.mean(axis=0, keepdims=True)
        return np.broadcast_to(mean, stacked.shape).reshape(arr.shape).copy()

    def value(self, point: Array) -> float:
        arr = np.asarray(point, dtype=np.float64)
        gap = np.linalg.norm(arr - self.prox(arr, 1.0))
        return 0.0 if gap <= FEASIBILITY_TOL * (1.0 + np.linalg.norm(arr)) else float("inf")


class PairConsensusIndicator(ProxFunction):
    """Sum over edges of the indicator of {(a, a)} on points shaped (E, 2, ...)."""

    def prox(self, point: Array, scale: ArrayLike) -> Array:
        arr = _as_finite(point)
        if arr.ndim < 2 or arr.shape[1] != 2:
            raise DomainError(f"expected edge pairs shaped (E, 2, ...), got {arr.shape}")
        mean = arr.mean(axis=1, keepdims=True)
        return np.broadcast_to(mean, arr.shape).copy()

    def value(self, point: Array) -> float:
        arr = np.asarray(point, dtype=np.float64)
        gap = np.linalg.norm(arr - self.prox(arr, 1.0))
        return 0.0 if gap <= FEASIBILITY_TOL * (1.0 + np.linalg.norm(arr)) else float("inf")


class SeparableSum(ProxFunction):
    """Block-separable sum phi(x) = sum_n phi_n(x_n) over the leading axis."""

    def __init__(self, parts: Sequence[ProxFunction]):
        if len(parts) == 0:
            raise DomainError("separable sum needs at least one part")
        self.parts = list(parts)

    def prox(self, point: Array, scale: ArrayLike) -> Array:
        arr = np.asarray(point, dtype=np.float64)
        if arr.shape[0] != len(self.parts):
            raise DomainError(f"point has {arr.shape[0]} blocks, expected {len(self.parts)}")
        scales = np.broadcast_to(np.asarray(scale, dtype=np.float64), arr.shape)
        out = np.empty_like(arr)
        for n, part in enumerate(self.parts):
            out[n] = part.prox(arr[n], scales[n])
        return out

    def value(self, point: Array) -> float:
        arr = np.asarray(point, dtype=np.float64)
        return float(sum(part.value(arr[n]) for n, part in enumerate(self.parts)))


def prox_conjugate(h: ProxFunction, u: ArrayLike, sigma: float) -> Array:
    """Proximity operator of sigma*h^* through the Moreau decomposition.

    Args:
        h: Function whose conjugate is taken
        u: Point
        sigma: Positive scale

    Returns:
        u - sigma * prox_{h/sigma}(u / sigma)

    Raises:
        DomainError: If sigma is not positive
    """
    if not sigma > 0:
        raise DomainError(f"conjugate prox scale must be positive, got {sigma}")
    arr = np.asarray(u, dtype=np.float64)
    return arr - sigma * h.prox(arr / sigma, 1.0 / sigma)


class LinearMap(ABC):
    """Linear map D with adjoint and an upper bound on its operator norm."""

    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]

    @abstractmethod
    def apply(self, x: Array) -> Array:
        """Evaluate D x."""

    @abstractmethod
    def adjoint(self, y: Array) -> Array:
        """Evaluate D^* y."""

    @property
    @abstractmethod
    def norm_bound(self) -> float:
        """Upper bound on ||D||."""

    @property
    def gram_diagonal(self) -> Array | None:
        """Diagonal of D^* D broadcastable to in_shape, or None when D^* D is not diagonal."""
        return None


class IdentityMap(LinearMap):
    """Identity on arrays of a fixed shape."""

    def __init__(self, shape: int | tuple[int, ...]):
        self.in_shape = (shape,) if isinstance(shape, int) else tuple(shape)
        self.out_shape = self.in_shape

    def apply(self, x: Array) -> Array:
        return np.asarray(x, dtype=np.float64)

    def adjoint(self, y: Array) -> Array:
        return np.asarray(y, dtype=np.float64)

    @property
    def norm_bound(self) -> float:
        return 1.0

    @property
    def gram_diagonal(self) -> Array:
        return np.ones(self.in_shape)


class DiagonalMap(LinearMap):
    """Componentwise scaling x -> d * x."""

    def __init__(self, diagonal: ArrayLike):
        self.diagonal = np.asarray(diagonal, dtype=np.float64)
        self.in_shape = self.diagonal.shape
        self.out_shape = self.diagonal.shape

    def apply(self, x: Array) -> Array:
        return self.diagonal * x

    def adjoint(self, y: Array) -> Array:
        return self.diagonal * y

    @property
    def norm_bound(self) -> float:
        return float(np.max(np.abs(self.diagonal))) if self.diagonal.size else 0.0

    @property
    def gram_diagonal(self) -> Array:
        return self.diagonal**2


class ZeroMap(LinearMap):
    """The zero map between two shapes."""

    def __init__(self, in_shape: tuple[int, ...], out_shape: tuple[int, ...]):
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(out_shape)

    def apply(self, x: Array) -> Array:
        return np.zeros(self.out_shape)

    def adjoint(self, y: Array) -> Array:
        return np.zeros(self.in_shape)

    @property
    def norm_bound(self) -> float:
        return 0.0

    @property
    def gram_diagonal(self) -> Array:
        return np.zeros(self.in_shape)


class MatrixMap(LinearMap):
    """Dense matrix acting on vectors.

    When no norm bound is supplied it is estimated once by power iteration and
    multiplied by NORM_SAFETY_FACTOR.
    """

    def __init__(self, matrix: ArrayLike, norm_bound: float | None = None):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise DomainError(f"matrix must be 2-D, got shape {self.matrix.shape}")
        self.in_shape = (self.matrix.shape[1],)
        self.out_shape = (self.matrix.shape[0],)
        self._norm_bound = norm_bound

    def apply(self, x: Array) -> Array:
        return self.matrix @ x

    def adjoint(self, y: Array) -> Array:
        return self.matrix.T @ y

    @cached_property
    def _estimated_bound(self) -> float:
        estimate = estimate_operator_norm(self, iters=200, seed=0)
        logger.debug(f"Estimated ||D|| = {estimate:.6g} for {self.matrix.shape} matrix")
        return estimate * NORM_SAFETY_FACTOR

    @property
    def norm_bound(self) -> float:
        if self._norm_bound is not None:
            return self._norm_bound
        return self._estimated_bound


def estimate_operator_norm(D: LinearMap, iters: int = 100, seed: int = 0) -> float:
    """Estimate ||D|| by seeded power iteration on D^* D.

    The estimate approaches ||D|| from below; callers needing an upper bound
    multiply by NORM_SAFETY_FACTOR.

    Args:
        D: Linear map
        iters: Number of power iterations
        seed: Seed of the starting vector

    Returns:
        ||D x|| for the final unit iterate x (0.0 for the zero operator)

    Raises:
        DomainError: If iters < 1
    """
    if iters < 1:
        raise DomainError(f"power iteration needs iters >= 1, got {iters}")
    x = make_rng(seed).standard_normal(D.in_shape)
    x /= np.linalg.norm(x)
    for _ in range(iters):
        w = D.adjoint(D.apply(x))
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        x = w / norm_w
    return float(np.linalg.norm(D.apply(x)))


def check_firmly_nonexpansive(
    fn: ProxFunction,
    scale: float,
    shape: tuple[int, ...],
    trials: int = 100,
    seed: int = 0,
) -> float:
    """Sample pairs and measure violations of firm nonexpansiveness.

    Returns:
        max over samples of ||Pu - Pv||^2 - <Pu - Pv, u - v>; nonpositive up to
        rounding for a true proximity operator
    """
    rng = make_rng(seed)
    worst = -np.inf
    for _ in range(trials):
        u = 3.0 * rng.standard_normal(shape)
        v = 3.0 * rng.standard_normal(shape)
        du = fn.prox(u, scale) - fn.prox(v, scale)
        worst = max(worst, inner(du, du) - inner(du, u - v))
    return float(worst)


def check_adjoint(D: LinearMap, trials: int = 10, seed: int = 0) -> float:
    """Largest relative gap |<Dx, y> - <x, D^*y>| over random pairs."""
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(D.in_shape)
        y = rng.standard_normal(D.out_shape)
        lhs = inner(D.apply(x), y)
        rhs = inner(x, D.adjoint(y))
        scale = max(abs(lhs), abs(rhs), 1e-300)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst
