"""Tests for unfolding, n-mode products, SVD and Tucker reconstruction."""

import numpy as np
import pytest

from core.errors import ContractViolation
from tensors.algebra import (
    fold,
    left_singular_basis,
    mode_product,
    svd,
    tucker_reconstruct,
    unfold,
)


class TestUnfoldFold:
    def test_mode_zero_of_matrix_is_identity(self, rng):
        m = rng.normal(size=(3, 5))
        np.testing.assert_array_equal(unfold(m, 0), m)

    def test_mode_one_matches_index_oracle(self):
        t = np.arange(12, dtype=float).reshape(2, 3, 2)
        out = unfold(t, 1)
        assert out.shape == (3, 4)
        for i0 in range(2):
            for i1 in range(3):
                for i2 in range(2):
                    assert out[i1, i0 * 2 + i2] == t[i0, i1, i2]

    def test_round_trip_every_mode(self, rng):
        for _ in range(100):
            t = rng.normal(size=(3, 4, 5))
            for mode in range(3):
                np.testing.assert_array_equal(fold(unfold(t, mode), mode, t.shape), t)

    def test_fold_scalar(self):
        out = fold(np.array([[2.5]]), 0, (1, 1))
        assert out.shape == (1, 1)
        assert out[0, 0] == 2.5

    def test_fold_matches_inverse_oracle(self):
        m = np.arange(12, dtype=float).reshape(3, 4)
        t = fold(m, 1, (2, 3, 2))
        for i0 in range(2):
            for i1 in range(3):
                for i2 in range(2):
                    assert t[i0, i1, i2] == m[i1, i0 * 2 + i2]

    def test_mode_out_of_range(self, rng):
        with pytest.raises(ContractViolation):
            unfold(rng.normal(size=(2, 2)), 2)

    def test_fold_inconsistent_dimensions(self):
        with pytest.raises(ContractViolation):
            fold(np.zeros((3, 5)), 1, (2, 3, 2))


class TestModeProduct:
    def test_identity(self, rng):
        t = rng.normal(size=(3, 4, 2))
        for mode in range(3):
            np.testing.assert_array_equal(mode_product(t, np.eye(t.shape[mode]), mode), t)

    def test_all_ones(self):
        out = mode_product(np.ones((2, 2, 2)), np.ones((2, 2)), 0)
        np.testing.assert_array_equal(out, np.full((2, 2, 2), 2.0))

    def test_loop_oracle(self, rng):
        t = rng.normal(size=(3, 4, 2))
        m = rng.normal(size=(5, 4))
        out = mode_product(t, m, 1)
        expected = np.zeros((3, 5, 2))
        for i0 in range(3):
            for r in range(5):
                for i2 in range(2):
                    expected[i0, r, i2] = sum(m[r, k] * t[i0, k, i2] for k in range(4))
        np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ContractViolation):
            mode_product(rng.normal(size=(3, 4)), rng.normal(size=(2, 3)), 1)

    def test_distinct_modes_commute(self, rng):
        t = rng.normal(size=(3, 4, 5))
        a = rng.normal(size=(2, 3))
        b = rng.normal(size=(6, 5))
        left = mode_product(mode_product(t, a, 0), b, 2)
        right = mode_product(mode_product(t, b, 2), a, 0)
        assert left.shape == right.shape == (2, 4, 6)
        np.testing.assert_allclose(left, right, rtol=1e-12, atol=1e-12)


class TestSvd:
    def test_diagonal(self):
        result = svd(np.diag([3.0, 1.0]))
        np.testing.assert_allclose(result.s, [3.0, 1.0])

    def test_zero_matrix(self):
        result = svd(np.zeros((2, 3)))
        np.testing.assert_array_equal(result.s, [0.0, 0.0])

    def test_residual(self, rng):
        m = rng.normal(size=(4, 6))
        result = svd(m)
        assert np.linalg.norm(result.reconstruct() - m) / np.linalg.norm(m) < 1e-10
        assert np.all(np.diff(result.s) <= 0)

    def test_sign_convention(self, rng):
        result = svd(rng.normal(size=(5, 3)))
        for j in range(result.u.shape[1]):
            col = result.u[:, j]
            assert col[np.argmax(np.abs(col))] > 0

    def test_non_finite_rejected(self):
        with pytest.raises(ContractViolation):
            svd(np.array([[1.0, np.nan], [0.0, 1.0]]))

    def test_left_basis_is_square_orthogonal(self, rng):
        u = left_singular_basis(rng.normal(size=(9, 2)))
        assert u.shape == (9, 9)
        np.testing.assert_allclose(u.T @ u, np.eye(9), atol=1e-12)


class TestTuckerReconstruct:
    def test_identity_factors(self, rng):
        core = rng.normal(size=(2, 3, 2, 2))
        out = tucker_reconstruct(core, [np.eye(d) for d in core.shape])
        np.testing.assert_array_equal(out, core)

    def test_order_two_is_matrix_product(self, rng):
        core = rng.normal(size=(3, 4))
        a = rng.normal(size=(5, 3))
        b = rng.normal(size=(2, 4))
        np.testing.assert_allclose(tucker_reconstruct(core, [a, b]), a @ core @ b.T, rtol=1e-12)

    def test_inverse_contraction_recovers_core(self, rng):
        core = rng.normal(size=(2, 3, 2, 2))
        factors = [rng.normal(size=(d, d)) + d * np.eye(d) for d in core.shape]
        w = tucker_reconstruct(core, factors)
        back = tucker_reconstruct(w, [np.linalg.inv(f) for f in factors])
        np.testing.assert_allclose(back, core, atol=1e-8)

    def test_factor_count_mismatch(self, rng):
        with pytest.raises(ContractViolation):
            tucker_reconstruct(rng.normal(size=(2, 2, 2)), [np.eye(2), np.eye(2)])

    def test_factor_shape_mismatch(self, rng):
        with pytest.raises(ContractViolation):
            tucker_reconstruct(rng.normal(size=(2, 3)), [np.eye(2), np.eye(2)])
