"""Tensor-kernel tests against naive nested-loop oracles and hand values."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from litedet import ops
from litedet.ops import ShapeError

from oracles import naive_conv2d, naive_linear, naive_maxpool2d

rng = np.random.default_rng(1234)


class TestConv2d:
    def test_identity_kernel(self):
        x = rng.uniform(-1, 1, (1, 1, 3, 3)).astype(np.float32)
        w = np.ones((1, 1, 1, 1), dtype=np.float32)
        assert np.array_equal(ops.conv2d(x, w), x)

    def test_sum_of_four_ones(self):
        x = np.ones((1, 1, 4, 4), dtype=np.float32)
        w = np.ones((1, 1, 2, 2), dtype=np.float32)
        out = ops.conv2d(x, w, stride=2)
        assert out.shape == (1, 1, 2, 2)
        assert np.array_equal(out, np.full((1, 1, 2, 2), 4.0, dtype=np.float32))

    def test_depthwise_matches_naive(self):
        x = rng.uniform(-1, 1, (1, 4, 8, 8))
        w = rng.uniform(-1, 1, (4, 1, 3, 3))
        got = ops.conv2d(x, w, stride=1, pad=1, groups=4)
        want = naive_conv2d(x, w, stride=1, pad=1, groups=4)
        np.testing.assert_allclose(got, want, atol=1e-6)

    @pytest.mark.parametrize("stride,pad,groups", [(1, 0, 1), (2, 1, 1), (1, 1, 2), (2, 2, 4)])
    def test_general_matches_naive(self, stride, pad, groups):
        x = rng.uniform(-1, 1, (2, 4, 7, 6))
        w = rng.uniform(-1, 1, (8, 4 // groups, 3, 3))
        b = rng.uniform(-1, 1, 8)
        got = ops.conv2d(x, w, b, stride=stride, pad=pad, groups=groups)
        want = naive_conv2d(x, w, b, stride=stride, pad=pad, groups=groups)
        np.testing.assert_allclose(got, want, atol=1e-9)

    def test_output_dims_formula(self):
        x = np.zeros((1, 1, 11, 9), dtype=np.float32)
        w = np.zeros((1, 1, 3, 3), dtype=np.float32)
        out = ops.conv2d(x, w, stride=2, pad=1)
        assert out.shape == (1, 1, (11 + 2 - 3) // 2 + 1, (9 + 2 - 3) // 2 + 1)

    def test_rejects_bad_groups(self):
        x = np.zeros((1, 3, 4, 4), dtype=np.float32)
        w = np.zeros((4, 1, 1, 1), dtype=np.float32)
        with pytest.raises(ShapeError, match="not divisible by groups"):
            ops.conv2d(x, w, groups=2)

    def test_rejects_channel_mismatch(self):
        x = np.zeros((1, 3, 4, 4), dtype=np.float32)
        w = np.zeros((4, 2, 1, 1), dtype=np.float32)
        with pytest.raises(ShapeError, match="channels per group"):
            ops.conv2d(x, w)

    def test_rejects_oversized_kernel(self):
        x = np.zeros((1, 1, 2, 2), dtype=np.float32)
        w = np.zeros((1, 1, 5, 5), dtype=np.float32)
        with pytest.raises(ShapeError, match="larger than padded input"):
            ops.conv2d(x, w)

    def test_preserves_float32(self):
        x = np.zeros((1, 2, 4, 4), dtype=np.float32)
        w = np.zeros((2, 2, 1, 1), dtype=np.float32)
        assert ops.conv2d(x, w).dtype == np.float32

    def test_deterministic(self):
        x = rng.uniform(-1, 1, (1, 3, 6, 6)).astype(np.float32)
        w = rng.uniform(-1, 1, (4, 3, 3, 3)).astype(np.float32)
        a = ops.conv2d(x, w, pad=1)
        b = ops.conv2d(x, w, pad=1)
        assert np.array_equal(a, b)


class TestBatchnorm:
    def test_identity(self):
        x = rng.uniform(-2, 2, (1, 3, 4, 4)).astype(np.float32)
        ones, zeros = np.ones(3), np.zeros(3)
        out = ops.batchnorm_infer(x, ones, zeros, zeros, ones, eps=0.0)
        np.testing.assert_array_equal(out, x)

    def test_affine(self):
        x = np.ones((1, 1, 1, 1), dtype=np.float64)
        out = ops.batchnorm_infer(x, [2.0], [3.0], [0.0], [1.0], eps=0.0)
        assert out.item() == pytest.approx(5.0)

    def test_matches_scalar_formula(self):
        x = rng.uniform(-3, 3, (2, 5, 3, 3))
        gamma = rng.uniform(0.5, 2, 5)
        beta = rng.uniform(-1, 1, 5)
        mean = rng.uniform(-1, 1, 5)
        var = rng.uniform(0.1, 2, 5)
        eps = 1e-4
        out = ops.batchnorm_infer(x, gamma, beta, mean, var, eps)
        for c in range(5):
            want = gamma[c] * (x[:, c] - mean[c]) / np.sqrt(var[c] + eps) + beta[c]
            np.testing.assert_allclose(out[:, c], want, rtol=1e-12)

    def test_rejects_negative_var(self):
        x = np.zeros((1, 2, 2, 2))
        with pytest.raises(ValueError, match="negative variance"):
            ops.batchnorm_infer(x, [1, 1], [0, 0], [0, 0], [1, -1])

    def test_rejects_wrong_length(self):
        x = np.zeros((1, 3, 2, 2))
        with pytest.raises(ShapeError, match="entries"):
            ops.batchnorm_infer(x, [1, 1], [0, 0, 0], [0, 0, 0], [1, 1, 1])


class TestActivations:
    def test_silu_zero(self):
        assert ops.silu(np.float32(0.0)) == 0.0

    def test_sigmoid_zero(self):
        assert ops.sigmoid(np.float64(0.0)) == 0.5

    def test_silu_one(self):
        # direct evaluation of x * sigmoid(x) at x=1
        want = 1.0 / (1.0 + np.exp(-1.0))
        assert ops.silu(np.float64(1.0)) == pytest.approx(want, abs=1e-12)
        assert ops.silu(np.float64(1.0)) == pytest.approx(0.731059, abs=1e-6)

    def test_sigmoid_stable_at_extremes(self):
        out = ops.sigmoid(np.array([-1e4, 1e4], dtype=np.float64))
        assert np.all(np.isfinite(out))
        assert out[0] == 0.0 and out[1] == 1.0

    def test_relu(self):
        out = ops.relu(np.array([-2.0, 0.0, 3.0], dtype=np.float32))
        np.testing.assert_array_equal(out, [0.0, 0.0, 3.0])


class TestMaxpool:
    def test_constant_input(self):
        x = np.full((1, 2, 5, 5), 3.5, dtype=np.float32)
        out = ops.maxpool2d(x, 3, 1, 1)
        assert out.shape == x.shape
        assert np.all(out == 3.5)

    def test_two_by_two(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]], dtype=np.float32)
        out = ops.maxpool2d(x, 2, 1, 0)
        assert out.shape == (1, 1, 1, 1)
        assert out.item() == 4.0

    def test_matches_naive(self):
        x = rng.uniform(-5, 5, (2, 3, 7, 6)).astype(np.float32)
        for k, s, p in [(2, 2, 0), (3, 1, 1), (5, 1, 2)]:
            got = ops.maxpool2d(x, k, s, p)
            want = naive_maxpool2d(x, k, s, p)
            np.testing.assert_array_equal(got, want)

    def test_padding_is_ignored_not_zero(self):
        # all-negative input: zero padding would leak 0s into the result
        x = np.full((1, 1, 3, 3), -7.0, dtype=np.float32)
        out = ops.maxpool2d(x, 3, 1, 1)
        assert np.all(out == -7.0)

    def test_rejects_pad_ge_kernel(self):
        x = np.zeros((1, 1, 4, 4), dtype=np.float32)
        with pytest.raises(ShapeError, match="pad"):
            ops.maxpool2d(x, 2, 1, 2)

    def test_rejects_oversized_window(self):
        x = np.zeros((1, 1, 2, 2), dtype=np.float32)
        with pytest.raises(ShapeError, match="larger than padded input"):
            ops.maxpool2d(x, 5, 1, 1)


class TestUpsample:
    def test_scale_one_identity(self):
        x = rng.uniform(-1, 1, (1, 2, 3, 3)).astype(np.float32)
        assert np.array_equal(ops.nearest_upsample(x, 1), x)

    def test_single_pixel(self):
        x = np.full((1, 1, 1, 1), 7.0, dtype=np.float32)
        out = ops.nearest_upsample(x, 2)
        assert np.array_equal(out, np.full((1, 1, 2, 2), 7.0, dtype=np.float32))

    def test_sum_replication_identity(self):
        x = rng.uniform(-1, 1, (2, 3, 4, 5))
        for scale in (2, 3):
            out = ops.nearest_upsample(x, scale)
            assert out.sum() == pytest.approx(scale * scale * x.sum(), rel=1e-12)

    def test_rejects_bad_scale(self):
        with pytest.raises(ValueError):
            ops.nearest_upsample(np.zeros((1, 1, 2, 2)), 0)


class TestConcat:
    def test_single_input_identity(self):
        x = rng.uniform(-1, 1, (1, 2, 3, 3)).astype(np.float32)
        assert np.array_equal(ops.concat_channels([x]), x)

    def test_channel_order(self):
        a = rng.uniform(-1, 1, (1, 2, 3, 3)).astype(np.float32)
        b = rng.uniform(-1, 1, (1, 3, 3, 3)).astype(np.float32)
        out = ops.concat_channels([a, b])
        assert out.shape == (1, 5, 3, 3)
        assert np.array_equal(out[:, :2], a)

    def test_round_trip_slicing(self):
        parts = [rng.uniform(-1, 1, (2, c, 4, 4)).astype(np.float32) for c in (1, 3, 2)]
        out = ops.concat_channels(parts)
        offset = 0
        for p in parts:
            assert np.array_equal(out[:, offset:offset + p.shape[1]], p)
            offset += p.shape[1]

    def test_rejects_spatial_mismatch(self):
        a = np.zeros((1, 2, 4, 4), dtype=np.float32)
        b = np.zeros((1, 2, 4, 5), dtype=np.float32)
        with pytest.raises(ShapeError, match="input 1"):
            ops.concat_channels([a, b])


class TestSoftmax:
    def test_symmetry(self):
        out = ops.softmax_lastdim(np.array([0.0, 0.0]))
        np.testing.assert_allclose(out, [0.5, 0.5], atol=1e-12)

    def test_single_element(self):
        out = ops.softmax_lastdim(np.array([123.4]))
        np.testing.assert_allclose(out, [1.0])

    def test_stabilized_no_overflow(self):
        out = ops.softmax_lastdim(np.array([1000.0, 1000.0]))
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [0.5, 0.5], atol=1e-12)

    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=16))
    @settings(max_examples=200, deadline=None)
    def test_rows_sum_to_one(self, values):
        out = ops.softmax_lastdim(np.array(values, dtype=np.float64))
        assert abs(out.sum() - 1.0) < 1e-6
        assert np.all(out >= 0)


class TestLinear:
    def test_identity(self):
        x = rng.uniform(-1, 1, (3, 4)).astype(np.float32)
        assert np.allclose(ops.linear(x, np.eye(4, dtype=np.float32)), x)

    def test_hand_case(self):
        out = ops.linear(np.array([1.0, 1.0]), np.array([[1.0, 1.0]]), np.array([1.0]))
        np.testing.assert_allclose(out, [3.0])

    def test_matches_naive(self):
        x = rng.uniform(-1, 1, (2, 5, 6))
        w = rng.uniform(-1, 1, (4, 6))
        b = rng.uniform(-1, 1, 4)
        np.testing.assert_allclose(ops.linear(x, w, b), naive_linear(x, w, b), atol=1e-6)

    def test_rejects_dim_mismatch(self):
        with pytest.raises(ShapeError, match="weight input dim"):
            ops.linear(np.zeros((2, 3)), np.zeros((4, 5)))
