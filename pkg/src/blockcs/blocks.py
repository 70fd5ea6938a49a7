"""Block <-> image index permutations shared by both codec pipelines.

A single flattening convention is used everywhere: blocks tile the image in
row-major block order, and within a block pixels are flattened row-major.
``block_split`` and ``block_combine`` are exact inverses of each other.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, GeometryError


def _grid(shape, block_size: int, what: str) -> tuple[int, int]:
    H, W = shape
    if H % block_size or W % block_size:
        raise GeometryError(f"{what} {H}x{W} is not a multiple of block size {block_size}")
    return H // block_size, W // block_size


def block_split(image: np.ndarray, block_size: int) -> np.ndarray:
    """(..., H, W, 1) image -> (..., H/B, W/B, B*B) per-block pixel vectors."""
    if image.ndim < 3 or image.shape[-1] != 1:
        raise DimensionError(f"expected a single-channel image, got shape {image.shape}")
    b = block_size
    h, w = _grid(image.shape[-3:-1], b, "image")
    lead = image.shape[:-3]
    x = image.reshape(lead + (h, b, w, b))
    x = np.moveaxis(x, -3, -2)  # (..., h, w, b, b)
    return np.ascontiguousarray(x).reshape(lead + (h, w, b * b))


def block_combine(vectors: np.ndarray, block_size: int) -> np.ndarray:
    """(..., h, w, B*B) per-block vectors -> (..., h*B, w*B, 1) image."""
    b = block_size
    if vectors.ndim < 3 or vectors.shape[-1] != b * b:
        raise DimensionError(
            f"expected (..., h, w, {b * b}) block vectors, got shape {vectors.shape}")
    lead = vectors.shape[:-3]
    h, w = vectors.shape[-3], vectors.shape[-2]
    x = vectors.reshape(lead + (h, w, b, b))
    x = np.moveaxis(x, -2, -3)  # (..., h, b, w, b)
    return np.ascontiguousarray(x).reshape(lead + (h * b, w * b, 1))
