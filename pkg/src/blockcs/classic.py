"""Classical block-compressed-sensing pipeline.

Sampling applies an explicit per-block measurement matrix; reconstruction is a
minimum-mean-square-error (MMSE) linear estimate followed by smoothed projected
Landweber (SPL) iterations that alternate a data-consistency projection with
hard thresholding in an orthonormal 2D DCT domain, plus an optional adaptive
Wiener smoothing pass between iterations.

Images in this module are 2D float64 arrays in [0, 1]; measurements keep the
block grid layout ``(h_blocks, w_blocks, n_measurements)`` produced by
``block_sample``.  All block flattening goes through :mod:`blockcs.blocks`, so
matrices round-trip exactly with the learned-codec sampling layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .blocks import block_combine, block_split
from .errors import ConfigError, DimensionError, GeometryError, NumericalError
from .measurement import MeasurementMatrix
from .rng import Rng

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class SplConfig:
    """Knobs of the smoothed projected Landweber reconstruction."""

    gamma: float = 1.0            # projection step is (1/gamma) * adjoint residual
    tau0_fraction: float = 0.1    # initial threshold as a fraction of max |coeff|
    tau_decay: float = 0.95       # geometric threshold decay per iteration
    max_iters: int = 200
    rel_tol: float = 1e-4         # stop when ||x_new - x|| / ||x|| drops below
    wiener_window: int = 3        # odd window >= 3, or 0 to disable smoothing

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.tau_decay < 1:
            raise ConfigError(f"tau_decay must lie in (0, 1), got {self.tau_decay}")
        if self.tau0_fraction < 0:
            raise ConfigError(f"tau0_fraction must be >= 0, got {self.tau0_fraction}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol < 0:
            raise ConfigError(f"rel_tol must be >= 0, got {self.rel_tol}")
        if self.wiener_window != 0 and (self.wiener_window % 2 == 0
                                        or self.wiener_window < 3):
            raise ConfigError(f"wiener_window must be 0 or an odd value >= 3, "
                              f"got {self.wiener_window}")


@dataclass(frozen=True)
class Autocorrelation:
    """Separable first-order autoregressive pixel covariance of a block."""

    rho: float
    matrix: np.ndarray  # (B*B, B*B), symmetric positive definite, unit diagonal


@dataclass(frozen=True)
class SplIteration:
    iteration: int   # 1-based
    tau: float
    residual: float  # ||y - Phi x|| after the final projection of this iteration
    change: float    # relative image change versus the previous iterate


@dataclass
class SplLog:
    initial_residual: float
    entries: list[SplIteration] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.entries)


def make_gaussian_matrix(n_rows: int, block_size: int, rng: Rng,
                         orthonormalize: bool = True) -> MeasurementMatrix:
    """I.i.d. standard-Gaussian measurement matrix, optionally with the rows
    replaced by an orthonormal basis of their span (two-pass modified
    Gram-Schmidt for numerical robustness)."""
    b2 = block_size * block_size
    if not 1 <= n_rows <= b2:
        raise ConfigError(f"row count {n_rows} outside [1, {b2}] for block size {block_size}")
    entries = rng.normal((n_rows, b2))
    if orthonormalize:
        q = np.empty_like(entries)
        for k in range(n_rows):
            v = entries[k].copy()
            for _ in range(2):
                if k:
                    v -= q[:k].T @ (q[:k] @ v)
            norm = np.linalg.norm(v)
            if norm < 1e-10:
                raise NumericalError(f"row {k} became numerically dependent "
                                     "during orthonormalization")
            q[k] = v / norm
        entries = q
    return MeasurementMatrix(block_size=block_size, entries=entries)


def ar1_autocorrelation(block_size: int, rho: float = 0.95) -> Autocorrelation:
    """Block autocorrelation R[(i,j),(k,l)] = rho^(|i-k| + |j-l|) over row-major
    pixel indices; separable, hence the Kronecker square of the 1D model."""
    if not 0 <= rho < 1:
        raise ConfigError(f"rho must lie in [0, 1), got {rho}")
    idx = np.arange(block_size)
    t = rho ** np.abs(idx[:, None] - idx[None, :])
    return Autocorrelation(rho=rho, matrix=np.kron(t, t))


def _as_image(image: np.ndarray) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 3 and x.shape[2] == 1:
        x = x[:, :, 0]
    if x.ndim != 2:
        raise DimensionError(f"expected a 2D image, got shape {image.shape}")
    return x


def block_sample(image: np.ndarray, phi: MeasurementMatrix) -> np.ndarray:
    """Measure every non-overlapping block: y_j = Phi_B x_j, row-major blocks."""
    x = _as_image(image)
    vectors = block_split(x[:, :, None], phi.block_size)
    return vectors @ phi.entries.T


def mmse_matrix(phi: MeasurementMatrix, autocorr: Autocorrelation) -> np.ndarray:
    """Linear MMSE reconstruction operator R Phi^T (Phi R Phi^T)^{-1}.

    Computed with a symmetric linear solve; a Gram matrix with condition
    estimate beyond 1e12 (or a non-positive eigenvalue) raises NumericalError.
    """
    r = autocorr.matrix
    if r.shape != (phi.cols, phi.cols):
        raise DimensionError(f"autocorrelation shape {r.shape} does not match "
                             f"block size {phi.block_size}")
    gram = phi.entries @ r @ phi.entries.T
    eigs = np.linalg.eigvalsh(gram)
    if eigs[0] <= 0 or eigs[-1] / eigs[0] > _COND_LIMIT:
        raise NumericalError(
            f"measurement Gram matrix is numerically rank deficient "
            f"(condition estimate {eigs[-1] / max(eigs[0], 1e-300):.3e})")
    return np.linalg.solve(gram, phi.entries @ r).T


def mmse_initial(measurements: np.ndarray, phi_tilde: np.ndarray) -> np.ndarray:
    """Per-block linear estimate x~_j = Phi~_B y_j, reassembled into an image."""
    phi_tilde = np.asarray(phi_tilde, dtype=np.float64)
    if phi_tilde.ndim != 2:
        raise DimensionError(f"reconstruction matrix must be 2D, got {phi_tilde.shape}")
    block_size = math.isqrt(phi_tilde.shape[0])
    if block_size * block_size != phi_tilde.shape[0]:
        raise DimensionError(f"reconstruction matrix row count {phi_tilde.shape[0]} "
                             "is not a squared block size")
    y = np.asarray(measurements, dtype=np.float64)
    if y.ndim != 3 or y.shape[2] != phi_tilde.shape[1]:
        raise DimensionError(f"measurements shape {y.shape} does not match "
                             f"reconstruction matrix {phi_tilde.shape}")
    return block_combine(y @ phi_tilde.T, block_size)[:, :, 0]


@lru_cache(maxsize=None)
def dct_basis(block_size: int) -> np.ndarray:
    """Orthonormal type-II DCT basis C; coefficients of X are C @ X @ C.T."""
    n = np.arange(block_size)
    c = np.cos(np.pi * (2 * n[None, :] + 1) * n[:, None] / (2 * block_size))
    c *= np.sqrt(2.0 / block_size)
    c[0] /= np.sqrt(2.0)
    c.setflags(write=False)
    return c


def dct2_forward(blocks: np.ndarray) -> np.ndarray:
    """Orthonormal 2D DCT of (..., B, B) blocks."""
    b = blocks.shape[-1]
    if blocks.ndim < 2 or blocks.shape[-2] != b:
        raise DimensionError(f"expected (..., B, B) blocks, got shape {blocks.shape}")
    c = dct_basis(b)
    return c @ blocks @ c.T


def dct2_inverse(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dct2_forward`."""
    b = coeffs.shape[-1]
    if coeffs.ndim < 2 or coeffs.shape[-2] != b:
        raise DimensionError(f"expected (..., B, B) coefficients, got shape {coeffs.shape}")
    c = dct_basis(b)
    return c.T @ coeffs @ c


def hard_threshold(coeffs: np.ndarray, tau: float) -> np.ndarray:
    """Zero every entry with |value| < tau; the boundary |value| = tau is kept."""
    if tau < 0:
        raise ConfigError(f"tau must be >= 0, got {tau}")
    return np.where(np.abs(coeffs) >= tau, coeffs, 0.0)


def wiener_smooth(image: np.ndarray, window: int) -> np.ndarray:
    """Adaptive local Wiener filter with image-estimated noise power.

    Per pixel, with mean m and biased variance v over the symmetric-padded
    window and noise power nu = mean of the local variances:
    ``out = m + max(v - nu, 0) / max(v, nu) * (x - m)``.
    """
    if window % 2 == 0 or window < 3:
        raise ConfigError(f"window must be odd and >= 3, got {window}")
    x = _as_image(image)
    pad = window // 2
    padded = np.pad(x, pad, mode="symmetric")
    tiles = np.lib.stride_tricks.sliding_window_view(padded, (window, window))
    mean = tiles.mean(axis=(2, 3))
    var = (tiles * tiles).mean(axis=(2, 3)) - mean * mean
    var = np.maximum(var, 0.0)
    nu = var.mean()
    denom = np.maximum(var, nu)
    gain = np.where(denom > 0, np.maximum(var - nu, 0.0) / np.where(denom > 0, denom, 1.0), 0.0)
    return mean + gain * (x - mean)


def landweber_project(vectors: np.ndarray, measurements: np.ndarray,
                      phi: MeasurementMatrix, gamma: float) -> np.ndarray:
    """Data-consistency step per block: x + (1/gamma) Phi^T (y - Phi x)."""
    return vectors + (measurements - vectors @ phi.entries.T) @ phi.entries / gamma


def _grid_blocks(vectors: np.ndarray, block_size: int) -> np.ndarray:
    h, w = vectors.shape[:2]
    return vectors.reshape(h, w, block_size, block_size)


def spl_reconstruct(measurements: np.ndarray, phi: MeasurementMatrix,
                    autocorr: Autocorrelation,
                    config: SplConfig = SplConfig(),
                    phi_tilde: np.ndarray | None = None) -> tuple[np.ndarray, SplLog]:
    """Smoothed projected Landweber reconstruction from block measurements.

    Starts from the MMSE estimate; each iteration applies optional Wiener
    smoothing, a Landweber projection, hard thresholding in the DCT domain
    with a geometrically decaying threshold, and a final projection.  Stops on
    small relative image change or after ``max_iters`` iterations.  Callers
    reconstructing many images with one matrix can pass a precomputed
    ``mmse_matrix`` result as ``phi_tilde``.
    """
    y = np.asarray(measurements, dtype=np.float64)
    if y.ndim != 3 or y.shape[2] != phi.rows:
        raise DimensionError(f"measurements shape {y.shape} does not match "
                             f"matrix with {phi.rows} rows")
    b = phi.block_size
    if phi_tilde is None:
        phi_tilde = mmse_matrix(phi, autocorr)
    x = mmse_initial(y, phi_tilde)

    # The threshold scale comes from the AC coefficients of the initial
    # estimate: the DC term is a mean offset, not a sparsity candidate, and for
    # [0, 1] images it dominates the maximum by a factor of about the block
    # size, which would push tau far above all detail coefficients.
    # Thresholding itself still acts on every coefficient.
    v0 = block_split(x[:, :, None], b)
    c0 = dct2_forward(_grid_blocks(v0, b)).copy()
    c0[..., 0, 0] = 0.0
    tau0 = config.tau0_fraction * np.abs(c0).max()
    log = SplLog(initial_residual=float(np.linalg.norm(y - v0 @ phi.entries.T)))

    for i in range(config.max_iters):
        prev = x
        if config.wiener_window:
            x = wiener_smooth(x, config.wiener_window)
        v = block_split(x[:, :, None], b)
        v = landweber_project(v, y, phi, config.gamma)
        tau = tau0 * config.tau_decay ** i
        coeffs = hard_threshold(dct2_forward(_grid_blocks(v, b)), tau)
        v = dct2_inverse(coeffs).reshape(v.shape)
        v = landweber_project(v, y, phi, config.gamma)
        x = block_combine(v, b)[:, :, 0]

        residual = float(np.linalg.norm(y - v @ phi.entries.T))
        if not np.isfinite(residual):
            raise NumericalError(
                f"SPL diverged at iteration {i + 1}; for matrices without "
                "orthonormal rows set gamma to at least the largest squared "
                "singular value of the measurement matrix")
        change = float(np.linalg.norm(x - prev) / max(np.linalg.norm(prev), 1e-12))
        log.entries.append(SplIteration(iteration=i + 1, tau=float(tau),
                                        residual=residual, change=change))
        if change < config.rel_tol:
            break
    return x, log
