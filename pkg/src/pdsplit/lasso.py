"""LASSO benchmark instances.

Handles:
- Seeded instance generation (Gaussian design, sparse ground truth, noisy labels)
- Err / fval metrics and the full objective
- Saving and loading instances as .npz archives
- Row partitioning into batches and per-batch terms
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .composite import BatchProblem
from .engine import make_rng
from .prox import IdentityMap, L1Norm, ProxFunction, ZeroFunction
from .smooth import LeastSquares, SmoothFunction
from .solvers import CompositeProblem
from .types import ErrorCode, PartitionMode, SolverError

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

# Rows m = n / SAMPLE_RATIO, nonzeros K = n / SPARSITY_RATIO
SAMPLE_RATIO = 4
SPARSITY_RATIO = 64

NOISE_STD = 0.05
TRUE_VALUE_BOUND = 2.0

# Default lambda = DEFAULT_LAM_SCALE * ||A^T b||_inf
DEFAULT_LAM_SCALE = 0.1


class InstanceError(SolverError):
    """Invalid instance parameters or a malformed instance file."""

    def __init__(self, message: str, code: int = ErrorCode.INSTANCE_INVALID):
        super().__init__(message, code)


@dataclass
class LassoInstance:
    """min_x 1/2 ||A x - b||^2 + lam ||x||_1 with a known ground truth."""

    A: Array
    b: Array
    x_true: Array
    lam: float
    seed: int | None = None

    @property
    def m(self) -> int:
        return int(self.A.shape[0])

    @property
    def n(self) -> int:
        return int(self.A.shape[1])

    def fval(self, x: ArrayLike) -> float:
        """1/2 ||A x - b||^2."""
        r = self.A @ np.asarray(x, dtype=np.float64) - self.b
        return 0.5 * float(r @ r)

    def err(self, x: ArrayLike) -> float:
        """||x - x_true||."""
        return float(np.linalg.norm(np.asarray(x, dtype=np.float64) - self.x_true))

    def objective(self, x: ArrayLike) -> float:
        return self.fval(x) + self.lam * float(np.sum(np.abs(x)))

    def least_squares(self) -> LeastSquares:
        return LeastSquares(self.A, self.b)

    def composite(self) -> CompositeProblem:
        """f = least squares, g = 0, h = lam ||.||_1, D = I."""
        return CompositeProblem(
            f=self.least_squares(),
            g=ZeroFunction(),
            h=L1Norm(self.lam),
            D=IdentityMap(self.n),
        )

    def save(self, path: Path | str) -> None:
        np.savez(
            path,
            A=self.A,
            b=self.b,
            x_true=self.x_true,
            lam=np.float64(self.lam),
            seed=np.int64(-1 if self.seed is None else self.seed),
        )
        logger.info(f"Saved {self.m}x{self.n} instance to {path}")

    @classmethod
    def load(cls, path: Path | str) -> "LassoInstance":
        """Load an instance written by save().

        Raises:
            InstanceError: If the archive is missing fields or has inconsistent shapes
        """
        try:
            with np.load(path) as data:
                A = np.asarray(data["A"], dtype=np.float64)
                b = np.asarray(data["b"], dtype=np.float64)
                x_true = np.asarray(data["x_true"], dtype=np.float64)
                lam = float(data["lam"])
                seed = int(data["seed"])
        except (OSError, KeyError, ValueError) as e:
            raise InstanceError(f"cannot load instance from {path}: {e}") from e
        if A.ndim != 2 or b.shape != (A.shape[0],) or x_true.shape != (A.shape[1],):
            raise InstanceError(f"inconsistent shapes in {path}: A {A.shape}, b {b.shape}, x {x_true.shape}")
        return cls(A=A, b=b, x_true=x_true, lam=lam, seed=None if seed < 0 else seed)


def default_lambda(A: ArrayLike, b: ArrayLike, scale: float = DEFAULT_LAM_SCALE) -> float:
    """scale * ||A^T b||_inf."""
    return scale * float(np.max(np.abs(np.asarray(A).T @ np.asarray(b))))


def gen_lasso(
    n: int,
    lam: float | None = None,
    seed: int = 0,
    lam_scale: float = DEFAULT_LAM_SCALE,
    noise_std: float = NOISE_STD,
) -> LassoInstance:
    """Generate a seeded instance with m = n/4 rows and K = n/64 nonzeros.

    A has iid standard normal entries; the support of x_true is uniform without
    replacement with values uniform on [-2, 2]; b = A x_true + N(0, noise_std^2).

    Raises:
        InstanceError: If n is not a positive multiple of 64 or lam is not positive
    """
    if n <= 0 or n % SPARSITY_RATIO != 0:
        raise InstanceError(f"n must be a positive multiple of {SPARSITY_RATIO} (m = n/4, K = n/64), got {n}")
    if lam is not None and not lam > 0:
        raise InstanceError(f"lambda must be positive, got {lam}")
    m, k = n // SAMPLE_RATIO, n // SPARSITY_RATIO
    rng = make_rng(seed)
    A = rng.standard_normal((m, n))
    x_true = np.zeros(n)
    support = rng.choice(n, size=k, replace=False)
    x_true[support] = rng.uniform(-TRUE_VALUE_BOUND, TRUE_VALUE_BOUND, size=k)
    b = A @ x_true + rng.normal(0.0, noise_std, size=m)
    lam_value = default_lambda(A, b, lam_scale) if lam is None else float(lam)
    logger.debug(f"Generated LASSO m={m}, n={n}, K={k}, lam={lam_value:.6g}, seed={seed}")
    return LassoInstance(A=A, b=b, x_true=x_true, lam=lam_value, seed=seed)


def row_partition(
    m: int,
    batches: int,
    mode: PartitionMode = PartitionMode.CONTIGUOUS,
    seed: int = 0,
) -> list[NDArray[np.intp]]:
    """Split row indices 0..m-1 into near-equal chunks.

    Raises:
        InstanceError: If batches is not in 1..m
    """
    if not 1 <= batches <= m:
        raise InstanceError(f"cannot split {m} rows into {batches} batches")
    rows = np.arange(m) if mode == PartitionMode.CONTIGUOUS else make_rng(seed).permutation(m)
    return [np.asarray(chunk, dtype=np.intp) for chunk in np.array_split(rows, batches)]


def split_batches(
    inst: LassoInstance,
    batches: int,
    mode: PartitionMode = PartitionMode.CONTIGUOUS,
    seed: int = 0,
) -> BatchProblem:
    """Per-batch terms f_n = 1/2 ||A_n x - b_n||^2 and g_n = (lam/N) ||x||_1."""
    chunks = row_partition(inst.m, batches, mode, seed)
    smooth: list[SmoothFunction] = [LeastSquares(inst.A[rows], inst.b[rows]) for rows in chunks]
    prox: list[ProxFunction] = [L1Norm(inst.lam / batches) for _ in chunks]
    return BatchProblem(smooth=smooth, prox=prox, dim=inst.n)
