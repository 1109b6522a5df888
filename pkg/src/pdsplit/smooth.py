"""Smooth convex terms with gradient oracles.

Each SmoothFunction exposes value, grad and the Lipschitz constant of its
gradient, which schedule validation uses as beta.
"""

import logging
from abc import ABC, abstractmethod
from collections.abc import Sequence

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .engine import make_rng
from .prox import DomainError, inner

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]


class SmoothFunction(ABC):
    """Convex function with a Lipschitz gradient."""

    @abstractmethod
    def value(self, x: Array) -> float:
        """Evaluate f(x)."""

    @abstractmethod
    def grad(self, x: Array) -> Array:
        """Evaluate the gradient of f at x."""

    @property
    @abstractmethod
    def lipschitz(self) -> float:
        """Lipschitz constant of the gradient."""


class ZeroSmooth(SmoothFunction):
    """f = 0."""

    def value(self, x: Array) -> float:
        return 0.0

    def grad(self, x: Array) -> Array:
        return np.zeros_like(x, dtype=np.float64)

    @property
    def lipschitz(self) -> float:
        return 0.0


class LeastSquares(SmoothFunction):
    """f(x) = 1/2 ||A x - b||^2.

    The Lipschitz constant ||A||^2 is computed from the largest singular value
    unless supplied.
    """

    def __init__(self, A: ArrayLike, b: ArrayLike, lipschitz: float | None = None):
        self.A = np.asarray(A, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        if self.A.ndim != 2 or self.b.shape != (self.A.shape[0],):
            raise DomainError(f"incompatible shapes A {self.A.shape}, b {self.b.shape}")
        if lipschitz is None:
            if self.A.size == 0:
                lipschitz = 0.0
            else:
                lipschitz = float(scipy.linalg.svdvals(self.A)[0]) ** 2
        self._lipschitz = lipschitz

    def residual(self, x: Array) -> Array:
        return self.A @ x - self.b

    def value(self, x: Array) -> float:
        r = self.residual(x)
        return 0.5 * inner(r, r)

    def grad(self, x: Array) -> Array:
        return self.A.T @ self.residual(x)

    @property
    def lipschitz(self) -> float:
        return self._lipschitz


class SquaredDistanceSmooth(SmoothFunction):
    """f(x) = w/2 ||x - c||^2."""

    def __init__(self, center: ArrayLike, weight: float = 1.0):
        if weight < 0:
            raise DomainError(f"weight must be nonnegative, got {weight}")
        self.center = np.asarray(center, dtype=np.float64)
        self.weight = float(weight)

    def value(self, x: Array) -> float:
        diff = np.asarray(x) - self.center
        return 0.5 * self.weight * inner(diff, diff)

    def grad(self, x: Array) -> Array:
        return self.weight * (np.asarray(x, dtype=np.float64) - self.center)

    @property
    def lipschitz(self) -> float:
        return self.weight


class SeparableSmooth(SmoothFunction):
    """f(x) = sum_n f_n(x_n) over the leading axis of x."""

    def __init__(self, parts: Sequence[SmoothFunction]):
        if len(parts) == 0:
            raise DomainError("separable sum needs at least one part")
        self.parts = list(parts)

    def value(self, x: Array) -> float:
        return float(sum(part.value(x[n]) for n, part in enumerate(self.parts)))

    def grad(self, x: Array) -> Array:
        out = np.empty_like(x, dtype=np.float64)
        for n, part in enumerate(self.parts):
            out[n] = part.grad(x[n])
        return out

    def block_grad(self, x: Array, n: int) -> Array:
        """Gradient of the n-th part at the n-th block."""
        return self.parts[n].grad(x[n])

    @property
    def block_lipschitz(self) -> Array:
        """Per-part Lipschitz constants."""
        return np.array([part.lipschitz for part in self.parts])

    @property
    def lipschitz(self) -> float:
        return float(self.block_lipschitz.max())


def check_gradient(
    fn: SmoothFunction,
    x: ArrayLike,
    step: float = 1e-6,
    directions: int = 5,
    seed: int = 0,
) -> float:
    """Compare the gradient with central finite differences along random directions.

    Returns:
        Largest relative gap between <grad f(x), d> and the central difference quotient
    """
    point = np.asarray(x, dtype=np.float64)
    rng = make_rng(seed)
    g = fn.grad(point)
    worst = 0.0
    for _ in range(directions):
        d = rng.standard_normal(point.shape)
        d /= np.linalg.norm(d)
        numeric = (fn.value(point + step * d) - fn.value(point - step * d)) / (2 * step)
        analytic = inner(g, d)
        scale = max(abs(numeric), abs(analytic), 1.0)
        worst = max(worst, abs(numeric - analytic) / scale)
    return worst


def check_lipschitz(
    fn: SmoothFunction,
    shape: tuple[int, ...],
    trials: int = 50,
    seed: int = 0,
) -> float:
    """Largest sampled ratio ||grad f(x) - grad f(y)|| / ||x - y||.

    A correct Lipschitz constant is at least the returned value.
    """
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(shape)
        y = rng.standard_normal(shape)
        gap = float(np.linalg.norm(x - y))
        if gap == 0.0:
            continue
        worst = max(worst, float(np.linalg.norm(fn.grad(x) - fn.grad(y))) / gap)
    return worst
