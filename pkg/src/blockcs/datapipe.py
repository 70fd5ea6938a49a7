"""Image ingestion, patch extraction and batching.

Input formats are 8-bit binary PGM (P5) and 8-bit grayscale/RGB PNG; outputs
are always PGM.  Pixels live in [0, 1] as float64 throughout the pipeline.
The whole pipeline is deterministic given the file bytes and a seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, FormatError, GeometryError
from .rng import Rng

_LUMA = (0.299, 0.587, 0.114)


@dataclass
class ImageRecord:
    name: str
    pixels: np.ndarray            # (H, W, 1) float64 in [0, 1]
    original_dims: tuple[int, int]


@dataclass
class PatchSet:
    patches: np.ndarray           # (count, P, P, 1) float64
    sources: list[str]
    seed: int


def _parse_pgm(raw: bytes, path) -> np.ndarray:
    # Tokenised header: P5, width, height, maxval; '#' comments allowed.
    pos = 0
    tokens = []
    while len(tokens) < 4:
        if pos >= len(raw):
            raise FormatError(f"{path}: truncated PGM header")
        c = raw[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            nl = raw.find(b"\n", pos)
            pos = len(raw) if nl < 0 else nl + 1
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace():
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: non-numeric PGM header fields") from None
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad PGM dimensions {width}x{height}")
    if not 0 < maxval < 256:
        raise FormatError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    pos += 1  # single whitespace byte after maxval
    data = raw[pos:pos + width * height]
    if len(data) != width * height:
        raise FormatError(f"{path}: PGM pixel data truncated")
    arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width)
    return arr.astype(np.float64) / maxval


def _load_png(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode in ("I", "I;16", "F"):
                raise FormatError(f"{path}: only 8-bit PNG supported (mode {img.mode})")
            if img.mode == "L":
                return np.asarray(img, dtype=np.float64) / 255.0
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: cannot decode PNG ({exc})") from exc
    return _LUMA[0] * rgb[:, :, 0] + _LUMA[1] * rgb[:, :, 1] + _LUMA[2] * rgb[:, :, 2]


def load_image(path) -> ImageRecord:
    """Read a PGM/PNG file into a [0, 1] luminance image."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc})") from exc
    if raw[:2] == b"P5":
        gray = _parse_pgm(raw, path)
    elif raw[:8] == b"\x89PNG\r\n\x1a\n":
        gray = _load_png(path)
    else:
        raise FormatError(f"{path}: unsupported format (neither P5 PGM nor PNG)")
    pixels = np.clip(gray, 0.0, 1.0)[:, :, None]
    return ImageRecord(name=path.stem, pixels=pixels,
                       original_dims=(pixels.shape[0], pixels.shape[1]))


def save_image(pixels: np.ndarray, path) -> None:
    """Write a [0, 1] image as binary 8-bit PGM: round(clamp(x, 0, 1) * 255)."""
    x = np.asarray(pixels, dtype=np.float64)
    if x.ndim == 3 and x.shape[2] == 1:
        x = x[:, :, 0]
    if x.ndim != 2:
        raise GeometryError(f"expected a single-channel image, got shape {pixels.shape}")
    data = np.rint(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P5\n{x.shape[1]} {x.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def quantize(pixels: np.ndarray) -> np.ndarray:
    """Round-trip through the 8-bit output representation."""
    x = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    return np.rint(x * 255.0) / 255.0


def pad_to_block_multiple(image: np.ndarray, block_size: int):
    """Mirror-pad bottom/right to the next block multiple; returns (padded, dims)."""
    if block_size < 2:
        raise ConfigError("block_size must be >= 2")
    h, w = image.shape[0], image.shape[1]
    pad_h = (-h) % block_size
    pad_w = (-w) % block_size
    widths = [(0, pad_h), (0, pad_w)] + [(0, 0)] * (image.ndim - 2)
    return np.pad(image, widths, mode="symmetric"), (h, w)


def crop_to_original(image: np.ndarray, original_dims: tuple[int, int]) -> np.ndarray:
    h, w = original_dims
    return image[:h, :w]


def augment(patch: np.ndarray, mode: int) -> np.ndarray:
    """Dihedral-group transform: modes 0-3 rotate by 90*mode degrees, modes 4-7
    additionally flip horizontally.  Pure index permutation, always a copy."""
    if not 0 <= mode <= 7:
        raise ConfigError(f"augment mode {mode} outside 0..7")
    k = mode % 4
    if k % 2 and patch.shape[0] != patch.shape[1]:
        raise GeometryError("90-degree rotations require a square patch")
    out = np.rot90(patch, k, axes=(0, 1))
    if mode >= 4:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def extract_patches(images: list[ImageRecord], patch_size: int, count: int,
                    rng: Rng) -> PatchSet:
    """Uniformly random augmented patches, drawn with replacement across images.

    Per patch the stream is consumed in the order: image index, top, left,
    augmentation mode.  Images smaller than the patch are skipped with a warning.
    """
    if patch_size < 1 or count < 1:
        raise ConfigError("patch_size and count must be >= 1")
    eligible = []
    for rec in images:
        if rec.pixels.shape[0] >= patch_size and rec.pixels.shape[1] >= patch_size:
            eligible.append(rec)
        else:
            warnings.warn(f"{rec.name}: smaller than patch size {patch_size}, skipped")
    if not eligible:
        raise ConfigError(f"no image is at least {patch_size}x{patch_size}")
    patches = np.empty((count, patch_size, patch_size, 1), dtype=np.float64)
    sources = []
    for i in range(count):
        rec = eligible[rng.randbelow(len(eligible))]
        h, w = rec.pixels.shape[0], rec.pixels.shape[1]
        top = rng.randbelow(h - patch_size + 1)
        left = rng.randbelow(w - patch_size + 1)
        mode = rng.randbelow(8)
        patch = rec.pixels[top:top + patch_size, left:left + patch_size]
        patches[i] = augment(patch, mode)
        sources.append(rec.name)
    return PatchSet(patches=patches, sources=sources, seed=rng.seed)


def batch_iter(patches: np.ndarray, batch_size: int, rng: Rng):
    """One epoch of full batches over a freshly shuffled patch order."""
    n = patches.shape[0]
    if batch_size < 1 or batch_size > n:
        raise ConfigError(f"batch_size {batch_size} not in [1, {n}]")
    perm = rng.permutation(n)
    for start in range(0, n - batch_size + 1, batch_size):
        yield patches[perm[start:start + batch_size]]


def list_image_files(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    files = sorted(p for p in d.iterdir()
                   if p.suffix.lower() in (".pgm", ".png") and p.is_file())
    if not files:
        raise ConfigError(f"{directory} contains no .pgm/.png images")
    return files


def load_directory(directory) -> list[ImageRecord]:
    return [load_image(p) for p in list_image_files(directory)]


# Spatial frequencies (cycles/pixel) of the texture overlay.  The set is
# closed under 90-degree rotations and flips so dihedral patch augmentation
# keeps the training distribution identical to the held-out one.
TEXTURE_FREQUENCIES = ((0.25, 0.0), (0.0, 0.25), (0.125, 0.125), (0.125, -0.125))


def make_synthetic_corpus(count: int, size: int, rng: Rng,
                          prefix: str = "synth") -> list[ImageRecord]:
    """Synthetic test images: piecewise-smooth content (a base gradient plus
    random half-plane steps, disks and Gaussian bumps) overlaid with two or
    three oriented sinusoidal textures of random amplitude and phase, clamped
    to [0, 1].  The texture component gives the corpus structure that a
    generic smoothness prior cannot represent but a learned sampler can."""
    if count < 1 or size < 8:
        raise ConfigError("need count >= 1 and size >= 8")
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / (size - 1)
    ypix, xpix = np.mgrid[0:size, 0:size].astype(np.float64)
    records = []
    for i in range(count):
        theta = rng.uniform() * 2 * np.pi
        axis = (xx * np.cos(theta) + yy * np.sin(theta)) - 0.5
        img = rng.uniform(low=0.3, high=0.7) + rng.uniform(low=-0.5, high=0.5) * axis
        for _ in range(2 + rng.randbelow(3)):
            kind = rng.randbelow(3)
            amp = rng.uniform(low=0.15, high=0.45) * (1 if rng.randbelow(2) else -1)
            cx, cy = rng.uniform(), rng.uniform()
            if kind == 0:
                phi = rng.uniform() * 2 * np.pi
                proj = (xx - cx) * np.cos(phi) + (yy - cy) * np.sin(phi)
                img = img + amp * (proj > 0)
            elif kind == 1:
                r = rng.uniform(low=0.08, high=0.3)
                img = img + amp * ((xx - cx) ** 2 + (yy - cy) ** 2 < r * r)
            else:
                s = rng.uniform(low=0.05, high=0.2)
                img = img + amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))
        for _ in range(2 + rng.randbelow(2)):
            fx, fy = TEXTURE_FREQUENCIES[rng.randbelow(len(TEXTURE_FREQUENCIES))]
            amp = rng.uniform(low=0.15, high=0.30)
            phase = rng.uniform() * 2 * np.pi
            img = img + amp * np.cos(2 * np.pi * (fx * xpix + fy * ypix) + phase)
        pixels = np.clip(img, 0.0, 1.0)[:, :, None]
        records.append(ImageRecord(name=f"{prefix}{i:03d}", pixels=pixels,
                                   original_dims=(size, size)))
    return records
