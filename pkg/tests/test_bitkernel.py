"""Tests for bit packing, XNOR-popcount kernels and the kernel benchmark."""

import numpy as np
import pytest

from bitkernel.bench import benchmark_kernel, format_report
from bitkernel.kernels import binary_conv, binary_conv_counts, xnor_dot, xnor_gemm
from bitkernel.packing import pack, repack_rows, tail_mask, unpack, words_for
from core.errors import ContractViolation
from training.layers import conv_forward


def random_pm1(rng, shape):
    return rng.choice(np.array([-1.0, 1.0]), size=shape)


class TestPack:
    def test_low_bits_first(self):
        p = pack(np.array([1.0, -1.0, 1.0]))
        assert p.words.tolist() == [[0b101]]
        assert p.valid_bits == 3

    def test_full_word(self):
        p = pack(np.ones(64))
        assert p.words.tolist() == [[0xFFFFFFFFFFFFFFFF]]

    def test_tail_bits_are_zero(self):
        p = pack(np.ones(70))
        assert p.words_per_row == 2
        assert int(p.words[0, 1]) == 0b111111

    def test_rows_follow_leading_axis(self, rng):
        t = random_pm1(rng, (3, 2, 3, 3))
        p = pack(t)
        assert (p.rows, p.valid_bits, p.words_per_row) == (3, 18, 1)
        np.testing.assert_array_equal(unpack(p), t)

    def test_unpack_inverts_pack(self, rng):
        for n in (1, 63, 64, 65, 200):
            t = random_pm1(rng, (4, n))
            np.testing.assert_array_equal(unpack(pack(t)), t)

    def test_repack_rows(self, rng):
        t = random_pm1(rng, (2, 3, 3, 3))
        stream = repack_rows(pack(t), (54,))
        assert stream.rows == 1
        np.testing.assert_array_equal(unpack(repack_rows(stream, t.shape)), t)

    @pytest.mark.parametrize("bad", [np.array([1.0, 0.0]), np.array([1.0, 0.5]), np.array([])])
    def test_rejects_non_binary(self, bad):
        with pytest.raises(ContractViolation):
            pack(bad)


class TestXnorDot:
    def test_example(self):
        a = pack(np.array([1.0, 1.0, -1.0])).words[0]
        b = pack(np.array([1.0, -1.0, -1.0])).words[0]
        assert xnor_dot(a, b, 3) == 1

    def test_identical_and_opposite(self, rng):
        t = random_pm1(rng, 100)
        a = pack(t).words[0]
        b = pack(-t).words[0]
        assert xnor_dot(a, a, 100) == 100
        assert xnor_dot(a, b, 100) == -100

    def test_matches_float_dot(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 300))
            x, y = random_pm1(rng, n), random_pm1(rng, n)
            d = xnor_dot(pack(x).words[0], pack(y).words[0], n)
            assert d == int(x @ y)
            assert -n <= d <= n
            assert (n - d) % 2 == 0

    def test_ignores_tail_garbage(self, rng):
        x, y = random_pm1(rng, 70), random_pm1(rng, 70)
        a, b = pack(x).words[0].copy(), pack(y).words[0]
        a[-1] |= ~tail_mask(70)
        assert xnor_dot(a, b, 70) == int(x @ y)

    def test_mismatched_rows(self, rng):
        with pytest.raises(ContractViolation):
            xnor_dot(np.zeros(2, dtype=np.uint64), np.zeros(1, dtype=np.uint64), 64)

    def test_word_count_must_fit_bits(self):
        with pytest.raises(ContractViolation):
            xnor_dot(np.zeros(2, dtype=np.uint64), np.zeros(2, dtype=np.uint64), 10)


class TestXnorGemm:
    def test_matches_matmul(self, rng):
        a, b = random_pm1(rng, (7, 130)), random_pm1(rng, (5, 130))
        out = xnor_gemm(pack(a), pack(b))
        assert out.dtype == np.int64
        np.testing.assert_array_equal(out, (a @ b.T).astype(np.int64))

    def test_row_length_mismatch(self, rng):
        with pytest.raises(ContractViolation):
            xnor_gemm(pack(random_pm1(rng, (2, 10))), pack(random_pm1(rng, (2, 11))))


class TestBinaryConv:
    @pytest.mark.parametrize("kernel", [1, 3])
    @pytest.mark.parametrize("stride", [1, 2])
    @pytest.mark.parametrize("padding", [0, 1])
    def test_matches_float_convolution(self, rng, kernel, stride, padding):
        for _ in range(100):
            x = random_pm1(rng, (2, 3, 5, 5))
            w = random_pm1(rng, (4, 3, kernel, kernel))
            alpha = rng.uniform(0.1, 2.0, size=4)
            out = binary_conv(x, pack(w), alpha, (kernel, stride, padding))
            expected, _ = conv_forward(x, alpha[:, None, None, None] * w, stride, padding, pad_value=-1.0)
            np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)

    def test_dyadic_alpha_is_exact(self, rng):
        x = random_pm1(rng, (2, 4, 6, 6))
        w = random_pm1(rng, (3, 4, 3, 3))
        alpha = np.array([0.5, 0.25, 2.0])
        out = binary_conv(x, pack(w), alpha, (3, 1, 1))
        expected, _ = conv_forward(x, alpha[:, None, None, None] * w, 1, 1, pad_value=-1.0)
        np.testing.assert_array_equal(out, expected)

    def test_one_by_one_identity_filters(self, rng):
        x = random_pm1(rng, (1, 1, 4, 4))
        out = binary_conv(x, pack(np.ones((1, 1, 1, 1))), np.ones(1), (1, 1, 0))
        np.testing.assert_array_equal(out, x)

    def test_zero_alpha_gives_zeros(self, rng):
        x = random_pm1(rng, (1, 2, 4, 4))
        out = binary_conv(x, pack(random_pm1(rng, (3, 2, 3, 3))), np.zeros(3), (3, 1, 1))
        np.testing.assert_array_equal(out, 0.0)

    def test_counts_are_integers_with_filter_parity(self, rng):
        x = random_pm1(rng, (1, 2, 5, 5))
        counts = binary_conv_counts(x, pack(random_pm1(rng, (2, 2, 3, 3))), 3, 2, 1)
        assert counts.dtype == np.int64
        assert np.all((18 - counts) % 2 == 0)

    def test_geometry_mismatch(self, rng):
        w = pack(random_pm1(rng, (2, 2, 3, 3)))
        with pytest.raises(ContractViolation):
            binary_conv(random_pm1(rng, (1, 2, 4, 4)), w, np.ones(2), (1, 1, 0))
        with pytest.raises(ContractViolation):
            binary_conv(random_pm1(rng, (1, 3, 4, 4)), w, np.ones(2), (3, 1, 1))
        with pytest.raises(ContractViolation):
            binary_conv(random_pm1(rng, (1, 2, 4, 4)), w, np.ones(3), (3, 1, 1))


class TestBenchmark:
    def test_quick_run_agrees(self):
        report = benchmark_kernel(sizes=(64, 200), repeats=1, rows=8)
        assert [r.inner for r in report] == [64, 200]
        assert all(r.match for r in report)
        assert all(r.ratio > 0 for r in report)
        assert "ratio" in format_report(report)
        assert words_for(200) == 4

    @pytest.mark.slow
    def test_xnor_beats_float_at_4096(self):
        (row,) = benchmark_kernel(sizes=(4096,), repeats=5)
        assert row.match
        assert row.ratio >= 4.0
