"""Unit tests for pdsplit.smooth module."""

import numpy as np
import pytest
import scipy.linalg

from pdsplit.prox import DomainError
from pdsplit.smooth import (
    LeastSquares,
    SeparableSmooth,
    SquaredDistanceSmooth,
    ZeroSmooth,
    check_gradient,
    check_lipschitz,
)


class TestLeastSquares:
    """Tests for the least-squares term."""

    def test_value_and_gradient(self, rng):
        """Test value and gradient against direct formulas."""
        A, b = rng.standard_normal((6, 4)), rng.standard_normal(6)
        f = LeastSquares(A, b)
        x = rng.standard_normal(4)
        assert f.value(x) == pytest.approx(0.5 * np.sum((A @ x - b) ** 2))
        np.testing.assert_allclose(f.grad(x), A.T @ (A @ x - b))

    def test_lipschitz_is_squared_spectral_norm(self, rng):
        """Test beta = ||A||^2."""
        A = rng.standard_normal((5, 7))
        assert LeastSquares(A, np.zeros(5)).lipschitz == pytest.approx(scipy.linalg.svdvals(A)[0] ** 2)

    def test_finite_difference_gradient(self, rng):
        """Test the gradient passes the finite-difference check."""
        f = LeastSquares(rng.standard_normal((6, 4)), rng.standard_normal(6))
        assert check_gradient(f, rng.standard_normal(4), seed=3) < 1e-6

    def test_sampled_lipschitz_below_constant(self, rng):
        """Test sampled gradient ratios stay below the constant."""
        f = LeastSquares(rng.standard_normal((6, 4)), rng.standard_normal(6))
        assert check_lipschitz(f, (4,), trials=30, seed=1) <= f.lipschitz * (1 + 1e-12)

    def test_rejects_incompatible_shapes(self):
        """Test mismatched A and b raise DomainError."""
        with pytest.raises(DomainError):
            LeastSquares(np.ones((3, 2)), np.ones(2))

    def test_supplied_lipschitz(self):
        """Test an explicit constant overrides the SVD."""
        assert LeastSquares(np.eye(2), np.zeros(2), lipschitz=5.0).lipschitz == 5.0


class TestOtherSmoothTerms:
    """Tests for the zero, squared-distance and separable terms."""

    def test_zero(self):
        """Test the zero term has zero gradient and constant."""
        f = ZeroSmooth()
        assert f.value(np.ones(3)) == 0.0
        np.testing.assert_array_equal(f.grad(np.ones(3)), np.zeros(3))
        assert f.lipschitz == 0.0

    def test_squared_distance(self):
        """Test gradient w (x - c) and constant w."""
        f = SquaredDistanceSmooth(np.array([1.0, 2.0]), weight=3.0)
        np.testing.assert_allclose(f.grad(np.array([2.0, 2.0])), [3.0, 0.0])
        assert f.value(np.array([2.0, 2.0])) == pytest.approx(1.5)
        assert f.lipschitz == 3.0

    def test_separable_sum(self, rng):
        """Test blockwise values, gradients and constants."""
        parts = [LeastSquares(rng.standard_normal((3, 2)), rng.standard_normal(3)) for _ in range(3)]
        f = SeparableSmooth(parts)
        x = rng.standard_normal((3, 2))
        assert f.value(x) == pytest.approx(sum(p.value(x[n]) for n, p in enumerate(parts)))
        np.testing.assert_allclose(f.grad(x)[1], parts[1].grad(x[1]))
        np.testing.assert_allclose(f.block_grad(x, 2), parts[2].grad(x[2]))
        assert f.lipschitz == pytest.approx(max(p.lipschitz for p in parts))
        assert check_gradient(f, x, seed=5) < 1e-6

    def test_separable_rejects_empty(self):
        """Test an empty sum raises DomainError."""
        with pytest.raises(DomainError):
            SeparableSmooth([])
