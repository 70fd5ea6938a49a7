"""Explicit per-block measurement matrices and their on-disk format.

The CSMX file layout (little-endian throughout): magic ``CSMX``, uint32
version (currently 1), uint32 row count, uint32 column count (the squared
block size), then the matrix entries as row-major float64.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

_MAGIC = b"CSMX"
_VERSION = 1


@dataclass(frozen=True)
class MeasurementMatrix:
    """n_B x B^2 linear operator mapping a flattened block to its measurements."""

    block_size: int
    entries: np.ndarray

    def __post_init__(self):
        b2 = self.block_size * self.block_size
        if self.entries.ndim != 2 or self.entries.shape[1] != b2:
            raise ConfigError(f"entries shape {self.entries.shape} does not match "
                              f"block size {self.block_size} (want columns {b2})")
        if not 1 <= self.entries.shape[0] <= b2:
            raise ConfigError(f"row count {self.entries.shape[0]} outside [1, {b2}]")

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]


def save_matrix(matrix: MeasurementMatrix, path) -> None:
    payload = np.ascontiguousarray(matrix.entries, dtype="<f8").tobytes()
    header = _MAGIC + struct.pack("<III", _VERSION, matrix.rows, matrix.cols)
    Path(path).write_bytes(header + payload)


def load_matrix(path) -> MeasurementMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != _MAGIC:
        raise FormatError(f"{path}: bad magic, expected {_MAGIC!r}")
    version, rows, cols = struct.unpack("<III", raw[4:16])
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    block = math.isqrt(cols)
    if block * block != cols:
        raise FormatError(f"{path}: column count {cols} is not a squared block size")
    expect = 16 + rows * cols * 8
    if len(raw) != expect:
        raise FormatError(f"{path}: payload truncated, want {expect} bytes got {len(raw)}")
    entries = np.frombuffer(raw[16:], dtype="<f8").reshape(rows, cols).copy()
    try:
        return MeasurementMatrix(block_size=block, entries=entries)
    except ConfigError as exc:
        raise FormatError(f"{path}: {exc}") from exc
