"""Minimal deterministic neural-network kernel.

Implements exactly what the codec needs: valid-padding 2D convolution with
forward and backward passes, ReLU, mean-squared-error loss, Adam, He weight
initialisation and a central finite-difference gradient oracle for tests.

Conventions: arrays are row-major with channel-innermost layout, i.e. images
are (H, W, C) and batches (N, H, W, C); filter banks are (fh, fw, Cin, Cout).
There is no implicit padding anywhere; callers pad explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DimensionError, GeometryError
from .rng import Rng


@dataclass(frozen=True)
class ConvSpec:
    """Static description of a convolution layer's geometry."""

    filter_height: int
    filter_width: int
    in_channels: int
    out_channels: int
    stride_h: int = 1
    stride_w: int = 1
    has_bias: bool = True

    def __post_init__(self):
        if self.stride_h < 1 or self.stride_w < 1:
            raise ConfigError("convolution strides must be >= 1")
        if min(self.filter_height, self.filter_width,
               self.in_channels, self.out_channels) < 1:
            raise ConfigError("filter extents and channel counts must be >= 1")


def _check_batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], False
    if x.ndim == 4:
        return x, True
    raise DimensionError(f"expected (H, W, C) or (N, H, W, C) input, got shape {x.shape}")


def _check_conv_args(x: np.ndarray, spec: ConvSpec, filters: np.ndarray,
                     bias: np.ndarray | None) -> tuple[np.ndarray, bool, int, int]:
    x4, batched = _check_batched(x)
    fshape = (spec.filter_height, spec.filter_width, spec.in_channels, spec.out_channels)
    if filters.shape != fshape:
        raise DimensionError(f"filters shape {filters.shape} != spec shape {fshape}")
    if x4.shape[3] != spec.in_channels:
        raise DimensionError(
            f"input has {x4.shape[3]} channels, spec expects {spec.in_channels}")
    if spec.has_bias:
        if bias is None or bias.shape != (spec.out_channels,):
            raise DimensionError("spec.has_bias requires a bias of shape (out_channels,)")
    elif bias is not None:
        raise DimensionError("bias passed to a bias-free convolution")
    H, W = x4.shape[1], x4.shape[2]
    if H < spec.filter_height or W < spec.filter_width:
        raise GeometryError(f"input {H}x{W} smaller than filter "
                            f"{spec.filter_height}x{spec.filter_width}")
    if (H - spec.filter_height) % spec.stride_h or (W - spec.filter_width) % spec.stride_w:
        raise GeometryError(
            f"input {H}x{W} not traversable by filter "
            f"{spec.filter_height}x{spec.filter_width} at stride "
            f"({spec.stride_h}, {spec.stride_w})")
    h_out = (H - spec.filter_height) // spec.stride_h + 1
    w_out = (W - spec.filter_width) // spec.stride_w + 1
    return x4, batched, h_out, w_out


def _im2col(x4: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Gather windows into (N, H', W', fh*fw*Cin) with (row, col, chan) ordering."""
    win = np.lib.stride_tricks.sliding_window_view(
        x4, (spec.filter_height, spec.filter_width), axis=(1, 2))
    win = win[:, ::spec.stride_h, ::spec.stride_w]  # (N, H', W', Cin, fh, fw)
    n, h_out, w_out = win.shape[:3]
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n, h_out, w_out, -1)


def conv2d_forward(x: np.ndarray, spec: ConvSpec, filters: np.ndarray,
                   bias: np.ndarray | None = None) -> np.ndarray:
    """Valid-padding correlation of ``x`` with ``filters``.

    Output spatial size is (H - fh)/stride + 1 per axis; each output element is
    the inner product of a filter with the corresponding input window.
    """
    x4, batched, h_out, w_out = _check_conv_args(x, spec, filters, bias)
    n = x4.shape[0]
    if spec.stride_h == 1 and spec.stride_w == 1:
        # One GEMM per filter tap over flat per-image shifts of the input, so
        # BLAS reads the input in place with no window gather.  Positions that
        # wrap across a row boundary land in output columns >= w_out and are
        # sliced away below.
        H, W = x4.shape[1], x4.shape[2]
        x2 = np.ascontiguousarray(x4).reshape(n, H * W, spec.in_channels)
        m = (h_out - 1) * W + w_out
        buf = np.empty((n, h_out * W, spec.out_channels), dtype=x2.dtype)
        target = buf[:, :m]
        scratch = np.empty_like(target)
        for i in range(spec.filter_height):
            for j in range(spec.filter_width):
                v = x2[:, i * W + j:i * W + j + m]
                if i == 0 and j == 0:
                    np.matmul(v, filters[0, 0], out=target)
                else:
                    np.matmul(v, filters[i, j], out=scratch)
                    target += scratch
        out = buf.reshape(n, h_out, W, spec.out_channels)[:, :, :w_out]
    else:
        cols = _im2col(x4, spec)
        wmat = filters.reshape(-1, spec.out_channels)
        out = cols.reshape(-1, cols.shape[3]) @ wmat
        out = out.reshape(n, h_out, w_out, spec.out_channels)
    if bias is not None:
        out += bias
    return out if batched else out[0]


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, spec: ConvSpec,
                    filters: np.ndarray):
    """Gradients of a scalar loss w.r.t. conv input, filters and bias.

    ``grad_out`` must be shaped like the forward output.  Returns
    (grad_input, grad_filters, grad_bias); grad_bias is None for bias-free
    layers.
    """
    bias = np.zeros(spec.out_channels, dtype=filters.dtype) if spec.has_bias else None
    x4, batched, h_out, w_out = _check_conv_args(x, spec, filters, bias)
    g4, gbatched = _check_batched(grad_out)
    if gbatched != batched or g4.shape != (x4.shape[0], h_out, w_out, spec.out_channels):
        raise DimensionError(f"grad_out shape {grad_out.shape} does not match the "
                             f"forward output ({x4.shape[0]}, {h_out}, {w_out}, "
                             f"{spec.out_channels})")

    n = x4.shape[0]
    grad_bias = g4.sum(axis=(0, 1, 2)) if spec.has_bias else None

    if spec.stride_h == 1 and spec.stride_w == 1:
        # Mirror of the forward flat-shift loop.  The output gradient is
        # widened back to the input row length with zero-filled wrap columns,
        # after which every tap is two GEMMs over per-image contiguous views.
        H, W = x4.shape[1], x4.shape[2]
        cin, cout = spec.in_channels, spec.out_channels
        x2 = np.ascontiguousarray(x4).reshape(n, H * W, cin)
        m = (h_out - 1) * W + w_out
        gwide = np.zeros((n, h_out, W, cout), dtype=g4.dtype)
        gwide[:, :, :w_out] = g4
        gm = gwide.reshape(n, h_out * W, cout)[:, :m]
        grad_filters = np.empty_like(filters)
        grad_input = np.zeros((n, H, W, cin), dtype=x4.dtype)
        gx2 = grad_input.reshape(n, H * W, cin)
        scratch = np.empty((n, m, cin), dtype=x2.dtype)
        for i in range(spec.filter_height):
            for j in range(spec.filter_width):
                v = x2[:, i * W + j:i * W + j + m]
                grad_filters[i, j] = np.matmul(v.transpose(0, 2, 1), gm).sum(axis=0)
                np.matmul(gm, filters[i, j].T, out=scratch)
                gx2[:, i * W + j:i * W + j + m] += scratch
    else:
        gmat = np.ascontiguousarray(g4).reshape(-1, spec.out_channels)
        cols = _im2col(x4, spec)
        grad_filters = (cols.reshape(-1, cols.shape[3]).T @ gmat).reshape(filters.shape)
        # Scatter grad back through each window position; slices overlap for
        # stride < filter size, so accumulate.
        gcols = (gmat @ filters.reshape(-1, spec.out_channels).T)
        gcols = gcols.reshape(n, h_out, w_out, spec.filter_height, spec.filter_width,
                              spec.in_channels)
        grad_input = np.zeros_like(x4)
        sh, sw = spec.stride_h, spec.stride_w
        for i in range(spec.filter_height):
            for j in range(spec.filter_width):
                grad_input[:, i:i + sh * (h_out - 1) + 1:sh,
                           j:j + sw * (w_out - 1) + 1:sw, :] += gcols[:, :, :, i, j, :]
    if not batched:
        grad_input = grad_input[0]
    return grad_input, grad_filters, grad_bias


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Pass gradient where the forward input was > 0 (subgradient 0 at 0)."""
    return np.where(x > 0, grad_out, 0)


def mse_loss(prediction: np.ndarray, target: np.ndarray, batch_count: int):
    """Batch-mean squared error with the 1/(2N) convention.

    loss = sum((prediction - target)**2) / (2 * batch_count), and the gradient
    w.r.t. the prediction is (prediction - target) / batch_count.
    """
    if prediction.shape != target.shape:
        raise DimensionError(f"prediction {prediction.shape} vs target {target.shape}")
    if batch_count < 1:
        raise ConfigError("batch_count must be >= 1")
    diff = prediction - target
    loss = float(np.sum(diff * diff)) / (2.0 * batch_count)
    return loss, diff / batch_count


@dataclass(frozen=True)
class AdamState:
    """Per-parameter Adam accumulator; adam_step returns an advanced copy."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, shape, learning_rate: float, dtype=np.float64, **kw) -> "AdamState":
        return cls(first_moment=np.zeros(shape, dtype=dtype),
                   second_moment=np.zeros(shape, dtype=dtype),
                   step_count=0, learning_rate=learning_rate, **kw)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState):
    """One bias-corrected Adam update; returns (new_param, new_state)."""
    if param.shape != grad.shape or param.shape != state.first_moment.shape:
        raise DimensionError("param, grad and moments must share a shape")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_param = param - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_param, replace(state, first_moment=m, second_moment=v, step_count=t)


def he_init(shape, fan_in: int, rng: Rng) -> np.ndarray:
    """Zero-mean Gaussian weights with std sqrt(2/fan_in) (ReLU-scaled)."""
    if fan_in < 1:
        raise ConfigError("fan_in must be >= 1")
    return rng.normal(shape, std=np.sqrt(2.0 / fan_in))


def finite_diff_grad(loss_fn, point: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function, in 64-bit precision."""
    if eps <= 0:
        raise ConfigError("eps must be positive")
    x0 = np.asarray(point, dtype=np.float64)
    grad = np.empty(x0.shape, dtype=np.float64)
    for idx in np.ndindex(x0.shape):
        xp = x0.copy()
        xp[idx] += eps
        xm = x0.copy()
        xm[idx] -= eps
        grad[idx] = (loss_fn(xp) - loss_fn(xm)) / (2.0 * eps)
    return grad
