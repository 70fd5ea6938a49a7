"""Image quality metrics, wall-clock timing and CSV evaluation reports.

PSNR uses peak 1.0 to match the [0, 1] pixel contract and reports identical
images as ``float('inf')``.  SSIM is the standard windowed form (11x11
Gaussian, sigma 1.5, C1 = 0.01^2, C2 = 0.03^2) averaged over valid window
positions only, so scores do not depend on a padding rule.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, GeometryError

RECORD_HEADER = ["algorithm", "image", "ratio", "psnr_db", "ssim", "seconds"]
SUMMARY_HEADER = ["algorithm", "ratio", "mean_psnr_db", "mean_ssim", "mean_seconds", "n"]

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class EvalRecord:
    algorithm: str
    image: str
    sampling_ratio: float
    psnr_db: float
    ssim: float
    seconds: float


@dataclass(frozen=True)
class AggregateRow:
    algorithm: str
    sampling_ratio: float
    mean_psnr_db: float      # mean over records with finite PSNR
    mean_ssim: float
    mean_seconds: float
    count: int               # total records in the group
    has_infinite: bool       # true when some record reported infinite PSNR


@dataclass
class EvalReport:
    records: list[EvalRecord] = field(default_factory=list)
    aggregates: list[AggregateRow] = field(default_factory=list)


def _as_pair(reference, test) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(reference, test, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; infinite for identical images."""
    if peak <= 0:
        raise DimensionError(f"peak must be positive, got {peak}")
    a, b = _as_pair(reference, test)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def _ssim_kernel() -> np.ndarray:
    half = _SSIM_WINDOW // 2
    g = np.exp(-np.arange(-half, half + 1) ** 2 / (2.0 * _SSIM_SIGMA ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _windowed(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    tiles = np.lib.stride_tricks.sliding_window_view(x, kernel.shape)
    return np.tensordot(tiles, kernel, axes=([2, 3], [0, 1]))


def ssim(reference, test) -> float:
    """Mean structural similarity over valid 11x11 window positions."""
    a, b = _as_pair(reference, test)
    if a.ndim == 3 and a.shape[2] == 1:
        a, b = a[:, :, 0], b[:, :, 0]
    if a.ndim != 2:
        raise DimensionError(f"SSIM expects grayscale images, got shape {a.shape}")
    if a.shape[0] < _SSIM_WINDOW or a.shape[1] < _SSIM_WINDOW:
        raise GeometryError(f"image {a.shape} smaller than the "
                            f"{_SSIM_WINDOW}x{_SSIM_WINDOW} SSIM window")
    k = _ssim_kernel()
    mu_a = _windowed(a, k)
    mu_b = _windowed(b, k)
    var_a = _windowed(a * a, k) - mu_a * mu_a
    var_b = _windowed(b * b, k) - mu_b * mu_b
    cov = _windowed(a * b, k) - mu_a * mu_b
    num = (2 * mu_a * mu_b + _SSIM_C1) * (2 * cov + _SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    return float(np.mean(num / den))


def time_op(action):
    """Run ``action()`` and return ``(result, wall_seconds)``."""
    start = time.perf_counter()
    result = action()
    return result, time.perf_counter() - start


def aggregate(records: list[EvalRecord]) -> EvalReport:
    """Group records by (algorithm, ratio) in first-appearance order and take
    arithmetic means; infinite-PSNR records are excluded from the PSNR mean and
    flagged.  Groups with no finite PSNR member are dropped with a warning."""
    order: list[tuple[str, float]] = []
    groups: dict[tuple[str, float], list[EvalRecord]] = {}
    for rec in records:
        key = (rec.algorithm, rec.sampling_ratio)
        if key not in groups:
            order.append(key)
            groups[key] = []
        groups[key].append(rec)
    rows = []
    for key in order:
        members = groups[key]
        finite = [r.psnr_db for r in members if np.isfinite(r.psnr_db)]
        has_inf = len(finite) < len(members)
        if not finite:
            warnings.warn(f"group {key[0]} @ ratio {key[1]}: all PSNR values "
                          "infinite, aggregate omitted")
            continue
        rows.append(AggregateRow(
            algorithm=key[0],
            sampling_ratio=key[1],
            mean_psnr_db=float(np.mean(finite)),
            mean_ssim=float(np.mean([r.ssim for r in members])),
            mean_seconds=float(np.mean([r.seconds for r in members])),
            count=len(members),
            has_infinite=has_inf,
        ))
    return EvalReport(records=list(records), aggregates=rows)


def write_records_csv(records: list[EvalRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_HEADER)
        for r in records:
            writer.writerow([r.algorithm, r.image, repr(float(r.sampling_ratio)),
                             repr(float(r.psnr_db)), repr(float(r.ssim)),
                             repr(float(r.seconds))])


def read_records_csv(path) -> list[EvalRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RECORD_HEADER:
            raise FormatError(f"{path}: expected header {','.join(RECORD_HEADER)}")
        out = []
        for row in reader:
            if len(row) != len(RECORD_HEADER):
                raise FormatError(f"{path}: malformed row {row!r}")
            out.append(EvalRecord(algorithm=row[0], image=row[1],
                                  sampling_ratio=float(row[2]), psnr_db=float(row[3]),
                                  ssim=float(row[4]), seconds=float(row[5])))
    return out


def write_summary_csv(rows: list[AggregateRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for r in rows:
            writer.writerow([r.algorithm, repr(float(r.sampling_ratio)),
                             repr(float(r.mean_psnr_db)), repr(float(r.mean_ssim)),
                             repr(float(r.mean_seconds)), r.count])


def read_summary_csv(path) -> list[AggregateRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SUMMARY_HEADER:
            raise FormatError(f"{path}: expected header {','.join(SUMMARY_HEADER)}")
        out = []
        for row in reader:
            if len(row) != len(SUMMARY_HEADER):
                raise FormatError(f"{path}: malformed row {row!r}")
            out.append(AggregateRow(algorithm=row[0], sampling_ratio=float(row[1]),
                                    mean_psnr_db=float(row[2]), mean_ssim=float(row[3]),
                                    mean_seconds=float(row[4]), count=int(row[5]),
                                    has_infinite=False))
    return out
