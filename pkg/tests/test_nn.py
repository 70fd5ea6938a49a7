"""Unit tests for the convolution/activation/loss/optimizer kernel.

Every backward pass is checked against the central finite-difference oracle;
the forward pass is checked against direct summation.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockcs.errors import ConfigError, DimensionError, GeometryError
from blockcs.nn import (AdamState, ConvSpec, adam_step, conv2d_backward,
                        conv2d_forward, finite_diff_grad, he_init, mse_loss,
                        relu_backward, relu_forward)
from blockcs.rng import Rng


def direct_conv(x4, spec, filters, bias):
    """Reference correlation by explicit loops (slow, obviously correct)."""
    n, H, W, _ = x4.shape
    h_out = (H - spec.filter_height) // spec.stride_h + 1
    w_out = (W - spec.filter_width) // spec.stride_w + 1
    out = np.zeros((n, h_out, w_out, spec.out_channels))
    for a in range(h_out):
        for b in range(w_out):
            win = x4[:, a * spec.stride_h:a * spec.stride_h + spec.filter_height,
                     b * spec.stride_w:b * spec.stride_w + spec.filter_width, :]
            out[:, a, b, :] = np.tensordot(win, filters, axes=([1, 2, 3], [0, 1, 2]))
    if bias is not None:
        out += bias
    return out


class TestConvForward:
    def test_matches_direct_summation_stride1(self, rng):
        spec = ConvSpec(3, 3, 2, 4)
        x = rng.normal((3, 9, 11, 2))
        f = rng.normal((3, 3, 2, 4))
        b = rng.normal((4,))
        got = conv2d_forward(x, spec, f, b)
        assert np.allclose(got, direct_conv(x, spec, f, b), atol=1e-12)

    def test_matches_direct_summation_strided(self, rng):
        spec = ConvSpec(4, 4, 1, 5, stride_h=4, stride_w=4, has_bias=False)
        x = rng.normal((2, 12, 16, 1))
        f = rng.normal((4, 4, 1, 5))
        got = conv2d_forward(x, spec, f)
        assert np.allclose(got, direct_conv(x, spec, f, None), atol=1e-12)

    def test_one_by_one_is_a_channel_matmul(self, rng):
        spec = ConvSpec(1, 1, 6, 3, has_bias=False)
        x = rng.normal((2, 5, 7, 6))
        f = rng.normal((1, 1, 6, 3))
        got = conv2d_forward(x, spec, f)
        assert np.allclose(got, x @ f[0, 0], atol=1e-12)

    def test_unbatched_equals_batched_row(self, rng):
        spec = ConvSpec(3, 3, 1, 2)
        x = rng.normal((6, 8, 1))
        f = rng.normal((3, 3, 1, 2))
        b = rng.normal((2,))
        single = conv2d_forward(x, spec, f, b)
        batch = conv2d_forward(x[None], spec, f, b)
        assert single.shape == (4, 6, 2)
        assert np.array_equal(single, batch[0])

    def test_deterministic(self, rng):
        spec = ConvSpec(3, 3, 2, 2)
        x = rng.normal((2, 8, 8, 2))
        f = rng.normal((3, 3, 2, 2))
        b = rng.normal((2,))
        assert np.array_equal(conv2d_forward(x, spec, f, b),
                              conv2d_forward(x, spec, f, b))

    def test_rejects_bad_geometry(self, rng):
        f = rng.normal((5, 5, 1, 1))
        b = rng.normal((1,))
        with pytest.raises(GeometryError):
            conv2d_forward(rng.normal((4, 9, 1)), ConvSpec(5, 5, 1, 1), f, b)
        with pytest.raises(GeometryError):
            # (9 - 5) not divisible by stride 3
            conv2d_forward(rng.normal((9, 9, 1)),
                           ConvSpec(5, 5, 1, 1, stride_h=3, stride_w=3), f, b)

    def test_rejects_bad_shapes(self, rng):
        spec = ConvSpec(3, 3, 2, 2)
        f = rng.normal((3, 3, 2, 2))
        b = rng.normal((2,))
        with pytest.raises(DimensionError):
            conv2d_forward(rng.normal((8, 8, 3)), spec, f, b)  # channel mismatch
        with pytest.raises(DimensionError):
            conv2d_forward(rng.normal((8, 8, 2)), spec, rng.normal((3, 3, 2, 3)), b)
        with pytest.raises(DimensionError):
            conv2d_forward(rng.normal((8, 8, 2)), spec, f, None)  # bias required
        with pytest.raises(DimensionError):
            conv2d_forward(rng.normal((2, 8, 8, 2)),
                           ConvSpec(3, 3, 2, 2, has_bias=False), f, b)  # spurious bias
        with pytest.raises(DimensionError):
            conv2d_forward(rng.normal((8, 8)), spec, f, b)  # missing channel axis

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            ConvSpec(3, 3, 1, 1, stride_h=0)
        with pytest.raises(ConfigError):
            ConvSpec(0, 3, 1, 1)


class TestConvBackward:
    @pytest.mark.parametrize("spec,hw", [
        (ConvSpec(3, 3, 2, 3), (7, 8)),
        (ConvSpec(1, 1, 4, 2, has_bias=False), (5, 6)),
        (ConvSpec(3, 3, 1, 2, stride_h=2, stride_w=2), (7, 9)),
        (ConvSpec(4, 4, 1, 3, stride_h=4, stride_w=4, has_bias=False), (8, 12)),
        (ConvSpec(2, 3, 3, 2), (6, 7)),
        (ConvSpec(3, 3, 2, 2), (3, 3)),       # output collapses to one pixel
    ])
    def test_gradients_match_finite_differences(self, spec, hw):
        rng = Rng(99)
        x = rng.normal((2,) + hw + (spec.in_channels,))
        f = rng.normal((spec.filter_height, spec.filter_width,
                        spec.in_channels, spec.out_channels)) * 0.4
        b = rng.normal((spec.out_channels,)) * 0.1 if spec.has_bias else None
        target = rng.normal(conv2d_forward(x, spec, f, b).shape)

        def loss_of(xv, fv, bv):
            return mse_loss(conv2d_forward(xv, spec, fv, bv), target, 2)[0]

        _, grad_out = mse_loss(conv2d_forward(x, spec, f, b), target, 2)
        gi, gf, gb = conv2d_backward(grad_out, x, spec, f)
        checks = [(gi, finite_diff_grad(lambda v: loss_of(v, f, b), x)),
                  (gf, finite_diff_grad(lambda v: loss_of(x, v, b), f))]
        if spec.has_bias:
            checks.append((gb, finite_diff_grad(lambda v: loss_of(x, f, v), b)))
        else:
            assert gb is None
        for analytic, numeric in checks:
            rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)
            assert rel.max() < 1e-4

    def test_rejects_mismatched_grad_shape(self, rng):
        spec = ConvSpec(3, 3, 1, 1)
        x = rng.normal((2, 6, 6, 1))
        f = rng.normal((3, 3, 1, 1))
        with pytest.raises(DimensionError):
            conv2d_backward(rng.normal((2, 5, 5, 1)), x, spec, f)

    def test_unbatched_shapes(self, rng):
        spec = ConvSpec(3, 3, 1, 2)
        x = rng.normal((6, 6, 1))
        f = rng.normal((3, 3, 1, 2))
        g = rng.normal((4, 4, 2))
        gi, gf, gb = conv2d_backward(g, x, spec, f)
        assert gi.shape == x.shape and gf.shape == f.shape and gb.shape == (2,)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_input_gradient_is_the_adjoint(self, seed):
        # For bias-free convolution, <conv(x), g> == <x, grad_input(g)>.
        r = Rng(seed)
        spec = ConvSpec(3, 3, 2, 2, has_bias=False)
        x = r.normal((2, 6, 7, 2))
        f = r.normal((3, 3, 2, 2))
        g = r.normal((2, 4, 5, 2))
        out = conv2d_forward(x, spec, f)
        gi, _, _ = conv2d_backward(g, x, spec, f)
        assert np.isclose(np.vdot(out, g), np.vdot(x, gi), rtol=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_forward_is_linear_in_input(self, seed):
        r = Rng(seed)
        spec = ConvSpec(3, 3, 1, 2, has_bias=False)
        f = r.normal((3, 3, 1, 2))
        x, y = r.normal((1, 6, 6, 1)), r.normal((1, 6, 6, 1))
        lhs = conv2d_forward(x + 2.0 * y, spec, f)
        rhs = conv2d_forward(x, spec, f) + 2.0 * conv2d_forward(y, spec, f)
        assert np.allclose(lhs, rhs, atol=1e-12)


class TestReluAndLoss:
    def test_relu_forward(self):
        x = np.array([-2.0, -0.0, 0.0, 0.5, 3.0])
        assert np.array_equal(relu_forward(x), [0.0, 0.0, 0.0, 0.5, 3.0])

    def test_relu_backward_masks_nonpositive(self):
        x = np.array([-1.0, 0.0, 2.0])
        g = np.array([5.0, 5.0, 5.0])
        assert np.array_equal(relu_backward(g, x), [0.0, 0.0, 5.0])

    def test_relu_gradcheck_away_from_kink(self, rng):
        x = rng.normal((40,))
        x = np.where(np.abs(x) < 0.1, x + 0.2, x)  # keep clear of the kink
        t = rng.normal((40,))
        analytic = relu_backward(mse_loss(relu_forward(x), t, 1)[1], x)
        numeric = finite_diff_grad(lambda v: mse_loss(relu_forward(v), t, 1)[0], x)
        assert np.allclose(analytic, numeric, rtol=1e-6, atol=1e-9)

    def test_mse_value_and_gradient_convention(self):
        p = np.array([[1.0, 2.0], [3.0, 4.0]])
        t = np.zeros((2, 2))
        loss, grad = mse_loss(p, t, 2)
        assert loss == pytest.approx((1 + 4 + 9 + 16) / (2 * 2))
        assert np.allclose(grad, p / 2)

    def test_mse_errors(self):
        with pytest.raises(DimensionError):
            mse_loss(np.zeros(3), np.zeros(4), 1)
        with pytest.raises(ConfigError):
            mse_loss(np.zeros(3), np.zeros(3), 0)


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        # With bias correction, the first update is lr * g / (|g| + ~eps).
        p = np.array([1.0, -1.0])
        g = np.array([10.0, -10.0])
        st_ = AdamState.fresh((2,), learning_rate=0.01)
        newp, newst = adam_step(p, g, st_)
        assert newst.step_count == 1
        assert np.allclose(newp, p - 0.01 * np.sign(g), atol=1e-6)

    def test_zero_gradient_keeps_parameters(self):
        p = np.array([3.0, 4.0])
        st_ = AdamState.fresh((2,), learning_rate=0.1)
        newp, _ = adam_step(p, np.zeros(2), st_)
        assert np.array_equal(newp, p)

    def test_zero_learning_rate_keeps_parameters(self, rng):
        p = rng.normal((5,))
        newp, _ = adam_step(p, rng.normal((5,)), AdamState.fresh((5,), 0.0))
        assert np.array_equal(newp, p)

    def test_accumulators_advance(self, rng):
        p = rng.normal((4,))
        state = AdamState.fresh((4,), 0.01)
        for expect in (1, 2, 3):
            p, state = adam_step(p, rng.normal((4,)), state)
            assert state.step_count == expect
        assert np.any(state.first_moment != 0) and np.any(state.second_moment != 0)

    def test_descends_a_quadratic(self):
        p = np.array([5.0])
        state = AdamState.fresh((1,), 0.1)
        for _ in range(300):
            p, state = adam_step(p, 2.0 * p, state)  # d/dp of p^2
        assert abs(p[0]) < 0.05


class TestInitAndOracle:
    def test_he_init_statistics(self):
        w = he_init((3, 3, 64, 64), fan_in=3 * 3 * 64, rng=Rng(1))
        assert w.shape == (3, 3, 64, 64)
        assert w.std() == pytest.approx(np.sqrt(2.0 / (3 * 3 * 64)), rel=0.05)
        assert abs(w.mean()) < 0.005

    def test_he_init_deterministic(self):
        assert np.array_equal(he_init((10, 10), 100, Rng(7)),
                              he_init((10, 10), 100, Rng(7)))

    def test_finite_difference_on_known_quadratic(self):
        x = np.array([1.0, -2.0, 3.0])
        g = finite_diff_grad(lambda v: float(np.sum(v * v)), x)
        assert np.allclose(g, 2 * x, rtol=1e-8, atol=1e-8)
