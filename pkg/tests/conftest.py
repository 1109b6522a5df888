"""Shared fixtures for pdsplit tests."""

from collections.abc import Callable

import numpy as np
import pytest

from pdsplit.lasso import LassoInstance, gen_lasso
from pdsplit.prox import prox_l1

ProxGradient = Callable[[LassoInstance, int, float | None], np.ndarray]


def _prox_gradient(inst: LassoInstance, iters: int, step: float | None = None) -> np.ndarray:
    """Plain proximal-gradient (ISTA) iteration from zero."""
    L = float(np.linalg.norm(inst.A, 2) ** 2)
    t = 1.0 / L if step is None else step
    x = np.zeros(inst.n)
    for _ in range(iters):
        x = prox_l1(x - t * inst.A.T @ (inst.A @ x - inst.b), t * inst.lam)
    return x


@pytest.fixture
def small_lasso() -> LassoInstance:
    """Seeded 64x256 LASSO instance."""
    return gen_lasso(256, seed=7)


@pytest.fixture
def medium_lasso() -> LassoInstance:
    """Seeded 256x1024 LASSO instance."""
    return gen_lasso(1024, seed=3)


@pytest.fixture
def prox_gradient() -> ProxGradient:
    """Independent proximal-gradient oracle."""
    return _prox_gradient


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
