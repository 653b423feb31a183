"""Tests for the differentiable kernels."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np
import pytest

from diffbev.core import functional as F
from diffbev.core.errors import ShapeError
from diffbev.core.gradcheck import gradcheck
from diffbev.core.tensor import Tape, Tensor, count_macs, reduce_sum


class TestConv2d:
    """Tests for conv2d."""

    def test_identity_kernel(self) -> None:
        """A 1×1 kernel with weight 1 should reproduce a single-channel map."""
        x = Tensor(np.random.default_rng(0).standard_normal((1, 5, 4)))
        out = F.conv2d(x, Tensor(np.ones((1, 1, 1, 1))))
        np.testing.assert_array_equal(out.data, x.data)

    def test_all_ones_kernel_with_padding(self) -> None:
        """A 3×3 ones kernel on a padded 3×3 map of ones gives 9 at the center and 4 at corners."""
        out = F.conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), padding=1)
        assert out.data[0, 1, 1] == 9.0
        assert out.data[0, 0, 0] == 4.0
        assert out.data[0, 0, 1] == 6.0

    def test_cross_correlation_convention(self) -> None:
        """The kernel should not be flipped."""
        x = Tensor(np.arange(9, dtype=np.float64).reshape(1, 3, 3))
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 0, 0] = 1.0
        out = F.conv2d(x, Tensor(w))
        assert out.data[0, 0, 0] == 0.0

    def test_stride(self) -> None:
        """Stride 2 on a 5×5 map with a 3×3 kernel gives a 2×2 output."""
        out = F.conv2d(Tensor(np.ones((2, 5, 5))), Tensor(np.ones((3, 2, 3, 3))), stride=2)
        assert out.shape == (3, 2, 2)

    def test_bias_added_per_channel(self) -> None:
        """Bias should be broadcast over spatial positions."""
        out = F.conv2d(Tensor(np.zeros((1, 2, 2))), Tensor(np.ones((2, 1, 1, 1))), Tensor([1.0, -2.0]))
        np.testing.assert_array_equal(out.data[:, 0, 0], [1.0, -2.0])

    def test_non_integer_output_size(self) -> None:
        """Stride that does not tile the input should raise ShapeError."""
        with pytest.raises(ShapeError, match="not an integer"):
            F.conv2d(Tensor(np.ones((1, 4, 4))), Tensor(np.ones((1, 1, 3, 3))), stride=2)

    def test_even_kernel_rejected(self) -> None:
        """Even kernels should raise ShapeError."""
        with pytest.raises(ShapeError, match="odd"):
            F.conv2d(Tensor(np.ones((1, 4, 4))), Tensor(np.ones((1, 1, 2, 2))))

    def test_channel_mismatch(self) -> None:
        """Input channels must match the kernel."""
        with pytest.raises(ShapeError, match="channel"):
            F.conv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))

    def test_negative_padding(self) -> None:
        """Negative padding should raise ShapeError."""
        with pytest.raises(ShapeError):
            F.conv2d(Tensor(np.ones((1, 4, 4))), Tensor(np.ones((1, 1, 1, 1))), padding=-1)

    def test_counts_macs(self) -> None:
        """conv2d should count c_out·c_in·k²·H'·W' multiply-accumulates."""
        with count_macs() as counter:
            F.conv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((3, 2, 3, 3))), padding=1)
        assert counter.total == 3 * 2 * 9 * 16

    def test_gradient(self, float64: None) -> None:
        """Strided, padded conv gradients should match finite differences within 1e-5."""
        rng = np.random.default_rng(3)
        x, w, b = Tensor(rng.standard_normal((2, 5, 5))), Tensor(rng.standard_normal((3, 2, 3, 3))), Tensor(rng.standard_normal(3))
        weights = rng.standard_normal((3, 3, 3))
        report = gradcheck(
            lambda: reduce_sum(F.conv2d(x, w, b, stride=2, padding=1) * Tensor(weights)),
            {"x": x, "w": w, "b": b},
            tolerance=1e-5,
        )
        assert report.passed, report.failures[:3]


class TestSoftmax:
    """Tests for softmax."""

    def test_symmetric_input(self) -> None:
        """softmax([0,0]) should be [0.5,0.5]."""
        np.testing.assert_allclose(F.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_single_element(self) -> None:
        """A single entry should get probability 1."""
        np.testing.assert_array_equal(F.softmax(Tensor([123.0])).data, [1.0])

    def test_known_values(self) -> None:
        """softmax([1,2,3]) should be [0.09003, 0.24473, 0.66524]."""
        np.testing.assert_allclose(F.softmax(Tensor([1.0, 2.0, 3.0])).data, [0.09003, 0.24473, 0.66524], atol=1e-5)

    def test_rows_are_probability_vectors(self) -> None:
        """Rows should be nonnegative and sum to 1 within 1e-6."""
        x = Tensor(np.random.default_rng(4).uniform(-50, 50, size=(6, 7)))
        y = F.softmax(x, axis=1).data
        assert (y >= 0).all()
        np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-6)

    def test_large_inputs_stay_finite(self) -> None:
        """Max-subtraction should keep huge logits finite."""
        assert np.isfinite(F.softmax(Tensor([1e4, 1e4 + 1.0])).data).all()

    def test_sum_has_zero_gradient(self, float64: None) -> None:
        """sum(softmax(x)) is constant, so its gradient should vanish."""
        x = Tensor(np.random.default_rng(5).standard_normal(5), requires_grad=True)
        with Tape() as tape:
            tape.backward(reduce_sum(F.softmax(x)))
        np.testing.assert_allclose(x.grad, 0.0, atol=1e-12)

    def test_invalid_axis(self) -> None:
        """Out-of-range axes should raise ShapeError."""
        with pytest.raises(ShapeError):
            F.softmax(Tensor(np.ones((2, 2))), axis=2)


class TestActivations:
    """Tests for relu, sigmoid and log."""

    def test_relu(self) -> None:
        """relu([-1,2]) should be [0,2]."""
        np.testing.assert_array_equal(F.relu(Tensor([-1.0, 2.0])).data, [0.0, 2.0])

    def test_sigmoid_midpoint_and_extremes(self) -> None:
        """sigmoid(0)=0.5 and stays finite for large magnitudes."""
        y = F.sigmoid(Tensor([0.0, 1000.0, -1000.0])).data
        np.testing.assert_allclose(y, [0.5, 1.0, 0.0], atol=1e-7)

    def test_log_clamp_zeroes_gradient(self) -> None:
        """Entries below the floor should be clamped with zero gradient."""
        x = Tensor([0.0, 1.0], requires_grad=True)
        with Tape() as tape:
            y = F.log(x, floor=1e-7)
            tape.backward(reduce_sum(y))
        assert np.isfinite(y.data).all()
        np.testing.assert_allclose(x.grad, [0.0, 1.0])


class TestNorm2d:
    """Tests for norm2d."""

    def test_two_entry_channel(self) -> None:
        """Channel [1,3] with unit scale and zero shift should normalize to about [-1,1]."""
        x = Tensor(np.array([1.0, 3.0]).reshape(1, 1, 2))
        mean, var = Tensor(np.zeros(1)), Tensor(np.ones(1))
        out = F.norm2d(x, Tensor([1.0]), Tensor([0.0]), mean, var, training=True)
        np.testing.assert_allclose(out.data.reshape(-1), [-1.0, 1.0], atol=1e-5)

    def test_running_statistics_update(self) -> None:
        """Training mode should move running stats by momentum 0.1."""
        x = Tensor(np.array([1.0, 3.0]).reshape(1, 1, 2))
        mean, var = Tensor(np.zeros(1)), Tensor(np.ones(1))
        F.norm2d(x, Tensor([1.0]), Tensor([0.0]), mean, var, training=True)
        np.testing.assert_allclose(mean.data, [0.2])
        np.testing.assert_allclose(var.data, [1.0])

    def test_eval_uses_running_statistics(self) -> None:
        """Eval mode should normalize with the running buffers."""
        x = Tensor(np.full((1, 2, 2), 5.0))
        mean, var = Tensor([1.0]), Tensor([4.0])
        out = F.norm2d(x, Tensor([1.0]), Tensor([0.0]), mean, var, training=False)
        np.testing.assert_allclose(out.data, 2.0, atol=1e-4)
        np.testing.assert_array_equal(mean.data, [1.0])

    def test_without_buffers_uses_sample_statistics(self) -> None:
        """Without running buffers eval mode should normalize like training mode."""
        x = Tensor(np.array([1.0, 3.0]).reshape(1, 1, 2))
        out = F.norm2d(x, Tensor([1.0]), Tensor([0.0]), None, None, training=False)
        np.testing.assert_allclose(out.data.reshape(-1), [-1.0, 1.0], atol=1e-5)


class TestResampling:
    """Tests for bilinear_interpolate, avg_pool2d and scatter_add."""

    def test_interpolating_constant_map(self) -> None:
        """A constant map should stay constant at any size."""
        out = F.bilinear_interpolate(Tensor(np.full((2, 3, 3), 1.5)), (7, 5))
        assert out.shape == (2, 7, 5)
        np.testing.assert_allclose(out.data, 1.5, rtol=1e-6)

    def test_interpolation_same_size_is_identity(self) -> None:
        """Resizing to the same size should be the identity."""
        x = Tensor(np.random.default_rng(6).standard_normal((1, 4, 4)))
        np.testing.assert_allclose(F.bilinear_interpolate(x, (4, 4)).data, x.data, rtol=1e-6)

    def test_interpolation_matrix_rows_sum_to_one(self) -> None:
        """Each output row should be a convex combination of inputs."""
        mat = F.interpolation_matrix(9, 4)
        np.testing.assert_allclose(mat.sum(axis=1), 1.0)
        assert (mat >= 0).all()

    def test_interpolation_to_zero_size(self) -> None:
        """Zero-size targets should raise ShapeError."""
        with pytest.raises(ShapeError, match="zero-size"):
            F.bilinear_interpolate(Tensor(np.ones((1, 2, 2))), (0, 3))

    def test_avg_pool(self) -> None:
        """2×2 pooling should average each block."""
        x = Tensor(np.arange(16, dtype=np.float64).reshape(1, 4, 4))
        np.testing.assert_allclose(F.avg_pool2d(x, 2).data[0], [[2.5, 4.5], [10.5, 12.5]])

    def test_avg_pool_indivisible(self) -> None:
        """Spatial sizes not divisible by k should raise ShapeError."""
        with pytest.raises(ShapeError):
            F.avg_pool2d(Tensor(np.ones((1, 3, 4))), 2)

    def test_scatter_add_sums_and_drops(self) -> None:
        """Columns should sum into their cells and index -1 should be dropped."""
        values = Tensor(np.array([[1.0, 2.0, 3.0, 4.0]]))
        out = F.scatter_add(values, np.array([1, -1, 1, 0]), 3)
        np.testing.assert_array_equal(out.data, [[4.0, 4.0, 0.0]])

    def test_scatter_add_gradient_routes_back(self) -> None:
        """Dropped columns get zero gradient; kept ones get their cell's gradient."""
        values = Tensor(np.ones((1, 3)), requires_grad=True)
        with Tape() as tape:
            out = F.scatter_add(values, np.array([0, -1, 1]), 2)
            tape.backward(out, np.array([[5.0, 7.0]]))
        np.testing.assert_array_equal(values.grad, [[5.0, 0.0, 7.0]])

    def test_scatter_add_index_shape(self) -> None:
        """Index length must match the column count."""
        with pytest.raises(ShapeError):
            F.scatter_add(Tensor(np.ones((1, 3))), np.array([0, 1]), 2)


class TestTokens:
    """Tests for flatten_tokens and unflatten_tokens."""

    def test_round_trip(self) -> None:
        """Flattening then unflattening should restore the map."""
        x = Tensor(np.random.default_rng(8).standard_normal((3, 2, 4)))
        tokens = F.flatten_tokens(x)
        assert tokens.shape == (8, 3)
        np.testing.assert_array_equal(F.unflatten_tokens(tokens, 2, 4).data, x.data)


@pytest.mark.parametrize(
    ("name", "build"),
    [
        ("relu", lambda x: F.relu(x)),
        ("sigmoid", lambda x: F.sigmoid(x)),
        ("softmax", lambda x: F.softmax(x, axis=0)),
        ("bilinear", lambda x: F.bilinear_interpolate(x, (5, 3))),
        ("avg_pool", lambda x: F.avg_pool2d(x, 2)),
        ("norm2d", lambda x: F.norm2d(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), Tensor(np.zeros(2)), Tensor(np.ones(2)), True)),
    ],
)
def test_ops_pass_gradcheck_on_random_inputs(name: str, build: Callable[[Tensor], Tensor]) -> None:
    """Every listed op should pass gradcheck at 1e-3 on inputs in [-2, 2]."""
    rng = np.random.default_rng(9)
    # Keep relu away from its kink.
    data = rng.uniform(0.1, 2.0, size=(2, 4, 4)) * rng.choice([-1.0, 1.0], size=(2, 4, 4))
    x = Tensor(data)
    out_shape = build(x).shape
    weights = rng.standard_normal(out_shape)
    report = gradcheck(lambda: reduce_sum(build(x) * Tensor(weights)), {"x": x}, name=name)
    assert report.passed, report.summary()
