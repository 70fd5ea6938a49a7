"""The learned block-sampling codec.

Three stages, trained end to end on the identity task (input and label are the
same image):

* a bias-free sampling convolution whose B x B stride-B filters play the role
  of an n_B x B^2 measurement matrix,
* a bias-free 1x1 initial-reconstruction convolution followed by a fixed
  reshape/concatenate step that reassembles per-block pixel vectors into an
  image,
* a stack of 3x3 convolutions (ReLU between layers) that refines the initial
  estimate at full resolution.

The sampling filters flatten row-major, so the matrix exported by
``export_sampling_matrix`` reproduces ``sample`` exactly and can drive the
classical pipeline unchanged.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from . import datapipe
from .blocks import block_combine, block_split
from .errors import ConfigError, DimensionError, FormatError, GeometryError
from .measurement import MeasurementMatrix
from .nn import (AdamState, ConvSpec, adam_step, conv2d_backward, conv2d_forward,
                 he_init, mse_loss, relu_backward, relu_forward)
from .rng import Rng

_MAGIC = b"CSNT"
_VERSION = 1


@dataclass(frozen=True)
class CsNetConfig:
    """Architecture knobs for the learned codec."""

    block_size: int = 32
    sampling_ratio: float = 0.1
    deep_depth: int = 5
    deep_width: int = 64
    deep_filter: int = 3
    seed: int = 0
    final_relu: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if self.block_size < 2:
            raise ConfigError("block_size must be >= 2")
        if not 0.0 < self.sampling_ratio <= 1.0:
            raise ConfigError("sampling_ratio must lie in (0, 1]")
        if self.n_measurements < 1:
            raise ConfigError(
                f"sampling_ratio {self.sampling_ratio} gives no measurements for "
                f"block size {self.block_size}")
        if self.deep_depth < 1 or self.deep_width < 1:
            raise ConfigError("deep_depth and deep_width must be >= 1")
        if self.deep_filter < 1 or self.deep_filter % 2 == 0:
            raise ConfigError("deep_filter must be odd so padding preserves size")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be 'float32' or 'float64'")

    @property
    def n_measurements(self) -> int:
        return int(self.sampling_ratio * self.block_size * self.block_size)

    def deep_channels(self, layer: int) -> tuple[int, int]:
        """(in, out) channel counts of 1-based deep layer ``layer``."""
        cin = 1 if layer == 1 else self.deep_width
        cout = 1 if layer == self.deep_depth else self.deep_width
        return cin, cout


@dataclass
class CsNetModel:
    """Learned parameters of the three sub-networks."""

    config: CsNetConfig
    sampling_filters: np.ndarray                      # (B, B, 1, n_B), no bias
    init_filters: np.ndarray                          # (1, 1, n_B, B^2), no bias
    deep_layers: list[tuple[np.ndarray, np.ndarray]]  # (filters, bias) per layer

    def __post_init__(self):
        cfg = self.config
        b, n = cfg.block_size, cfg.n_measurements
        if self.sampling_filters.shape != (b, b, 1, n):
            raise DimensionError(f"sampling_filters shape {self.sampling_filters.shape}"
                                 f" != {(b, b, 1, n)}")
        if self.init_filters.shape != (1, 1, n, b * b):
            raise DimensionError(f"init_filters shape {self.init_filters.shape}"
                                 f" != {(1, 1, n, b * b)}")
        if len(self.deep_layers) != cfg.deep_depth:
            raise DimensionError(f"{len(self.deep_layers)} deep layers, expected "
                                 f"{cfg.deep_depth}")
        f = cfg.deep_filter
        for i, (filters, bias) in enumerate(self.deep_layers, start=1):
            cin, cout = cfg.deep_channels(i)
            if filters.shape != (f, f, cin, cout) or bias.shape != (cout,):
                raise DimensionError(f"deep layer {i}: filters {filters.shape} / bias "
                                     f"{bias.shape}, expected {(f, f, cin, cout)} / "
                                     f"({cout},)")

    def parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        """All trainable arrays in canonical (file-format) order."""
        yield "sampling_filters", self.sampling_filters
        yield "init_filters", self.init_filters
        for i, (filters, bias) in enumerate(self.deep_layers, start=1):
            yield f"deep{i}.filters", filters
            yield f"deep{i}.bias", bias

    def with_parameters(self, arrays: dict[str, np.ndarray]) -> "CsNetModel":
        """Copy of the model with the named parameter arrays replaced."""
        deep = [(arrays.get(f"deep{i}.filters", f_), arrays.get(f"deep{i}.bias", b_))
                for i, (f_, b_) in enumerate(self.deep_layers, start=1)]
        return CsNetModel(
            config=self.config,
            sampling_filters=arrays.get("sampling_filters", self.sampling_filters),
            init_filters=arrays.get("init_filters", self.init_filters),
            deep_layers=deep)

    def astype(self, dtype: str) -> "CsNetModel":
        nd = np.dtype(dtype)
        return CsNetModel(
            config=replace(self.config, dtype=dtype),
            sampling_filters=self.sampling_filters.astype(nd),
            init_filters=self.init_filters.astype(nd),
            deep_layers=[(f.astype(nd), b.astype(nd)) for f, b in self.deep_layers])


class ForwardPass(NamedTuple):
    measurements: np.ndarray
    initial: np.ndarray
    final: np.ndarray


def _sampling_spec(cfg: CsNetConfig) -> ConvSpec:
    b = cfg.block_size
    return ConvSpec(b, b, 1, cfg.n_measurements, stride_h=b, stride_w=b, has_bias=False)


def _init_spec(cfg: CsNetConfig) -> ConvSpec:
    return ConvSpec(1, 1, cfg.n_measurements, cfg.block_size ** 2, has_bias=False)


def _deep_spec(cfg: CsNetConfig, layer: int) -> ConvSpec:
    cin, cout = cfg.deep_channels(layer)
    return ConvSpec(cfg.deep_filter, cfg.deep_filter, cin, cout, has_bias=True)


def build_model(config: CsNetConfig) -> CsNetModel:
    """He-initialised model; fan_in is fh*fw*Cin per layer, biases start at zero.

    Deterministic given config.seed: tensors are drawn from one stream in
    canonical parameter order.
    """
    rng = Rng(config.seed)
    dt = np.dtype(config.dtype)
    b, n = config.block_size, config.n_measurements
    sampling = he_init((b, b, 1, n), fan_in=b * b, rng=rng).astype(dt)
    init = he_init((1, 1, n, b * b), fan_in=n, rng=rng).astype(dt)
    deep = []
    f = config.deep_filter
    for i in range(1, config.deep_depth + 1):
        cin, cout = config.deep_channels(i)
        filters = he_init((f, f, cin, cout), fan_in=f * f * cin, rng=rng).astype(dt)
        deep.append((filters, np.zeros(cout, dtype=dt)))
    return CsNetModel(config=config, sampling_filters=sampling, init_filters=init,
                      deep_layers=deep)


def pad_symmetric(x: np.ndarray, pad: int) -> np.ndarray:
    """Mirror-pad the two spatial axes of (..., H, W, C) by ``pad`` pixels."""
    if pad == 0:
        return x
    widths = [(0, 0)] * (x.ndim - 3) + [(pad, pad), (pad, pad), (0, 0)]
    return np.pad(x, widths, mode="symmetric")


def pad_symmetric_adjoint(grad: np.ndarray, pad: int) -> np.ndarray:
    """Adjoint of pad_symmetric: fold border gradients onto their mirror source."""
    if pad == 0:
        return grad
    h = grad.shape[-3] - 2 * pad
    w = grad.shape[-2] - 2 * pad
    if min(h, w) < pad:
        raise GeometryError("padding wider than the unpadded image is not supported")
    rows = grad[..., pad:pad + h, :, :].copy()
    for k in range(pad):
        rows[..., k, :, :] += grad[..., pad - 1 - k, :, :]
        rows[..., h - 1 - k, :, :] += grad[..., pad + h + k, :, :]
    out = rows[..., :, pad:pad + w, :].copy()
    for k in range(pad):
        out[..., :, k, :] += rows[..., :, pad - 1 - k, :]
        out[..., :, w - 1 - k, :] += rows[..., :, pad + w + k, :]
    return out


def sample(model: CsNetModel, image: np.ndarray) -> np.ndarray:
    """Non-overlapping block measurements: (H, W, 1) -> (H/B, W/B, n_B)."""
    return conv2d_forward(image, _sampling_spec(model.config), model.sampling_filters)


def initial_reconstruct(model: CsNetModel, measurements: np.ndarray) -> np.ndarray:
    """Linear per-block estimate: (h, w, n_B) -> (h*B, w*B, 1)."""
    vec = conv2d_forward(measurements, _init_spec(model.config), model.init_filters)
    return block_combine(vec, model.config.block_size)


def deep_reconstruct(model: CsNetModel, initial: np.ndarray) -> np.ndarray:
    """Refinement stack; symmetric padding keeps the spatial size unchanged."""
    cfg = model.config
    pad = (cfg.deep_filter - 1) // 2
    x = initial
    for i, (filters, bias) in enumerate(model.deep_layers, start=1):
        z = conv2d_forward(pad_symmetric(x, pad), _deep_spec(cfg, i), filters, bias)
        x = relu_forward(z) if (i < cfg.deep_depth or cfg.final_relu) else z
    return x


def forward(model: CsNetModel, image: np.ndarray) -> ForwardPass:
    """Full codec pass returning all three stages for inspection."""
    measurements = sample(model, image)
    initial = initial_reconstruct(model, measurements)
    final = deep_reconstruct(model, initial)
    return ForwardPass(measurements, initial, final)


def loss_and_gradients(model: CsNetModel, batch: np.ndarray):
    """Reconstruction loss on a batch and its gradient for every parameter.

    The batch (N, H, W, 1) serves as both input and label.  Returns
    (loss, gradients) with gradients keyed like ``model.parameters()``.
    """
    if batch.ndim != 4 or batch.shape[3] != 1:
        raise DimensionError(f"expected batch of shape (N, H, W, 1), got {batch.shape}")
    cfg = model.config
    n = batch.shape[0]
    pad = (cfg.deep_filter - 1) // 2

    sampling_spec = _sampling_spec(cfg)
    init_spec = _init_spec(cfg)
    measurements = conv2d_forward(batch, sampling_spec, model.sampling_filters)
    vec = conv2d_forward(measurements, init_spec, model.init_filters)
    x = block_combine(vec, cfg.block_size)
    padded, preact = [], []
    for i, (filters, bias) in enumerate(model.deep_layers, start=1):
        p = pad_symmetric(x, pad)
        z = conv2d_forward(p, _deep_spec(cfg, i), filters, bias)
        padded.append(p)
        preact.append(z)
        x = relu_forward(z) if (i < cfg.deep_depth or cfg.final_relu) else z

    loss, d = mse_loss(x, batch, n)

    grads: dict[str, np.ndarray] = {}
    for i in range(cfg.deep_depth, 0, -1):
        filters, _ = model.deep_layers[i - 1]
        if i < cfg.deep_depth or cfg.final_relu:
            d = relu_backward(d, preact[i - 1])
        d, gw, gb = conv2d_backward(d, padded[i - 1], _deep_spec(cfg, i), filters)
        grads[f"deep{i}.filters"] = gw
        grads[f"deep{i}.bias"] = gb
        d = pad_symmetric_adjoint(d, pad)
    d = block_split(d, cfg.block_size)
    d, gw, _ = conv2d_backward(d, measurements, init_spec, model.init_filters)
    grads["init_filters"] = gw
    _, gw, _ = conv2d_backward(d, batch, sampling_spec, model.sampling_filters)
    grads["sampling_filters"] = gw
    return loss, grads


def make_adam_states(model: CsNetModel, learning_rate: float) -> dict[str, AdamState]:
    dt = np.dtype(model.config.dtype)
    return {name: AdamState.fresh(arr.shape, learning_rate, dtype=dt)
            for name, arr in model.parameters()}


def set_learning_rate(states: dict[str, AdamState], rate: float) -> dict[str, AdamState]:
    return {name: replace(st, learning_rate=rate) for name, st in states.items()}


def train_step(model: CsNetModel, batch: np.ndarray, states: dict[str, AdamState]):
    """One Adam update of every parameter; returns (loss, model, states)."""
    loss, grads = loss_and_gradients(model, batch)
    new_params, new_states = {}, {}
    for name, arr in model.parameters():
        new_params[name], new_states[name] = adam_step(arr, grads[name], states[name])
    return loss, model.with_parameters(new_params), new_states


@dataclass(frozen=True)
class TrainSchedule:
    """Epoch/iteration budget and the staged learning-rate plan."""

    epochs: int
    iterations_per_epoch: int
    batch_size: int
    learning_rate_stages: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if min(self.epochs, self.iterations_per_epoch, self.batch_size) < 1:
            raise ConfigError("epochs, iterations_per_epoch and batch_size must be >= 1")
        expect = 1
        for first, last, rate in self.learning_rate_stages:
            if first != expect or last < first:
                raise ConfigError("learning_rate_stages must partition the epoch range")
            if rate <= 0:
                raise ConfigError("learning rates must be positive")
            expect = last + 1
        if expect != self.epochs + 1:
            raise ConfigError("learning_rate_stages must cover epochs 1"
                              f"..{self.epochs}")

    def rate_for_epoch(self, epoch: int) -> float:
        for first, last, rate in self.learning_rate_stages:
            if first <= epoch <= last:
                return rate
        raise ConfigError(f"epoch {epoch} outside schedule range")

    @classmethod
    def staged(cls, epochs: int, iterations_per_epoch: int, batch_size: int,
               base_rate: float = 1e-3) -> "TrainSchedule":
        """Three stages at base, base/10, base/100 over 50%/30%/20% of epochs."""
        e1 = max(1, round(epochs * 0.5))
        e2 = max(e1, min(epochs - 1, round(epochs * 0.8))) if epochs > 1 else e1
        stages = [(1, e1, base_rate)]
        if e2 > e1:
            stages.append((e1 + 1, e2, base_rate / 10))
        if epochs > e2:
            stages.append((e2 + 1, epochs, base_rate / 100))
        return cls(epochs, iterations_per_epoch, batch_size, tuple(stages))

    @classmethod
    def full_scale(cls) -> "TrainSchedule":
        """The full-size recipe: 100 epochs x 1400 iterations, batch 64."""
        return cls(100, 1400, 64, ((1, 50, 1e-3), (51, 80, 1e-4), (81, 100, 1e-5)))

    @classmethod
    def desk_scale(cls) -> "TrainSchedule":
        """CPU-friendly default: 10 epochs x 100 iterations, batch 16."""
        return cls(10, 100, 16, ((1, 5, 1e-3), (6, 8, 1e-4), (9, 10, 1e-5)))


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    learning_rate: float


def train(model: CsNetModel, patches: np.ndarray, schedule: TrainSchedule, rng: Rng):
    """Run the staged schedule over a fixed patch set.

    ``patches`` is (count, P, P, 1) with P a block-size multiple; each epoch
    reshuffles it and consumes ``iterations_per_epoch`` full batches.  Returns
    (trained model, per-epoch EpochStats history).
    """
    if patches.ndim != 4 or patches.shape[0] == 0:
        raise ConfigError("training requires a non-empty (count, P, P, 1) patch array")
    if patches.shape[0] // schedule.batch_size < schedule.iterations_per_epoch:
        raise ConfigError(
            f"{patches.shape[0]} patches cannot fill {schedule.iterations_per_epoch} "
            f"batches of {schedule.batch_size}")
    dt = np.dtype(model.config.dtype)
    patches = patches.astype(dt, copy=False)
    states = make_adam_states(model, schedule.rate_for_epoch(1))
    history: list[EpochStats] = []
    for epoch in range(1, schedule.epochs + 1):
        rate = schedule.rate_for_epoch(epoch)
        states = set_learning_rate(states, rate)
        losses = []
        batches = datapipe.batch_iter(patches, schedule.batch_size, rng)
        for _ in range(schedule.iterations_per_epoch):
            loss, model, states = train_step(model, next(batches), states)
            losses.append(loss)
        history.append(EpochStats(epoch, sum(losses) / len(losses), rate))
    return model, history


def export_sampling_matrix(model: CsNetModel) -> MeasurementMatrix:
    """Row k of the matrix is sampling filter k flattened row-major."""
    b = model.config.block_size
    entries = model.sampling_filters[:, :, 0, :].reshape(b * b, -1).T
    return MeasurementMatrix(block_size=b, entries=entries.astype(np.float64))


def import_sampling_filters(matrix: MeasurementMatrix, dtype: str = "float64") -> np.ndarray:
    """Inverse of export: matrix rows become (B, B, 1, n_B) sampling filters."""
    b = matrix.block_size
    filters = matrix.entries.T.reshape(b, b, 1, matrix.rows)
    return filters.astype(np.dtype(dtype))


def save_model(model: CsNetModel, path) -> None:
    """Write the bit-exact binary model file.

    Layout (little-endian): magic ``CSNT``; uint32 version, block size, per-block
    measurement count, deep depth, deep width, deep filter size; then every
    parameter tensor in canonical order as raw float32, no per-tensor headers.
    The seed and final_relu flag are not part of the format.
    """
    cfg = model.config
    header = _MAGIC + struct.pack("<IIIIII", _VERSION, cfg.block_size,
                                  cfg.n_measurements, cfg.deep_depth,
                                  cfg.deep_width, cfg.deep_filter)
    chunks = [header]
    for _, arr in model.parameters():
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_model(path) -> CsNetModel:
    raw = Path(path).read_bytes()
    if len(raw) < 28 or raw[:4] != _MAGIC:
        raise FormatError(f"{path}: bad magic, expected {_MAGIC!r}")
    version, b, n, m, d, f = struct.unpack("<IIIIII", raw[4:28])
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if b < 2:
        raise FormatError(f"{path}: block size {b} out of range")
    if not 1 <= n <= b * b:
        raise FormatError(f"{path}: measurement count {n} inconsistent with "
                          f"block size {b}")
    try:
        cfg = CsNetConfig(block_size=b, sampling_ratio=n / (b * b), deep_depth=m,
                          deep_width=d, deep_filter=f, dtype="float32")
    except ConfigError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if cfg.n_measurements != n:
        raise FormatError(f"{path}: measurement count {n} inconsistent with "
                          f"block size {b}")

    shapes = [(b, b, 1, n), (1, 1, n, b * b)]
    for i in range(1, m + 1):
        cin, cout = cfg.deep_channels(i)
        shapes += [(f, f, cin, cout), (cout,)]
    expect = 28 + sum(int(np.prod(s)) for s in shapes) * 4
    if len(raw) != expect:
        raise FormatError(f"{path}: payload truncated, want {expect} bytes "
                          f"got {len(raw)}")

    offset = 28
    arrays = []
    for s in shapes:
        count = int(np.prod(s))
        arrays.append(np.frombuffer(raw, dtype="<f4", count=count,
                                    offset=offset).reshape(s).copy())
        offset += count * 4
    deep = [(arrays[2 + 2 * i], arrays[3 + 2 * i]) for i in range(m)]
    return CsNetModel(config=cfg, sampling_filters=arrays[0], init_filters=arrays[1],
                      deep_layers=deep)
