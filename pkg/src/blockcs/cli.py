"""Command-line front end for the block compressed-sensing toolkit.

Commands: ``train``, ``reconstruct``, ``baseline``, ``eval``, ``export-matrix``.
Every command reads defaults from an optional ``--config`` key=value file, with
explicit flags taking precedence.  All randomness flows from one ``--seed``
fanned out into documented sub-streams: measurement matrix = seed+1, model
initialisation = seed+2, patch extraction = seed+3, epoch shuffling = seed+4.

Exit codes: 0 success, 2 configuration error, 3 I/O or file-format error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import classic, datapipe, metrics, model as modellib
from .errors import (BlockCsError, ConfigError, DimensionError, FormatError,
                     GeometryError, NumericalError)
from .measurement import load_matrix, save_matrix
from .rng import Rng

LOSS_HEADER = ["epoch", "mean_loss", "learning_rate"]
SPL_LOG_HEADER = ["iteration", "tau", "residual", "change"]

SEED_MATRIX = 1
SEED_INIT = 2
SEED_PATCHES = 3
SEED_SHUFFLE = 4


# --------------------------------------------------------------------------
# Run configuration: dataclasses with a flat key=value text representation.
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    images: str = ""
    out: str = ""
    history: str = "loss_history.csv"
    block: int = 32
    ratio: float = 0.1
    epochs: int = 100
    iters: int = 1400
    batch: int = 64
    patch: int = 96
    depth: int = 5
    width: int = 64
    filter: int = 3
    lr: float = 1e-3
    seed: int = 0
    dtype: str = "float64"


@dataclass(frozen=True)
class ReconstructConfig:
    model: str = ""
    images: str = ""
    outdir: str = ""
    records: str = ""           # default: <outdir>/records.csv
    stage: str = "both"         # both | initial | final
    block: int = 0              # 0 = take from the model file
    ratio: float = 0.0          # 0 = take from the model file


@dataclass(frozen=True)
class BaselineConfig:
    images: str = ""
    outdir: str = ""
    records: str = ""           # default: <outdir>/records.csv
    matrix: str = ""            # optional CSMX file replacing the generated matrix
    block: int = 32
    ratio: float = 0.1
    seed: int = 0
    rho: float = 0.95
    gamma: float = 0.0          # 0 = auto (1 for orthonormal rows, else largest sigma^2)
    tau0: float = 0.1
    tau_decay: float = 0.95
    spl_iters: int = 200
    spl_tol: float = 1e-4
    wiener: int = 3


@dataclass(frozen=True)
class EvalConfig:
    images: str = ""
    outdir: str = ""
    ratios: str = "0.1,0.2,0.3,0.4,0.5"
    models: str = ""            # semicolon-joined RATIO=PATH pairs
    algorithms: str = "net,mmse,spl"
    block: int = 32
    seed: int = 0
    rho: float = 0.95
    gamma: float = 0.0          # 0 = auto (1 for orthonormal rows, else largest sigma^2)
    tau0: float = 0.1
    tau_decay: float = 0.95
    spl_iters: int = 200
    spl_tol: float = 1e-4
    wiener: int = 3


@dataclass(frozen=True)
class ExportMatrixConfig:
    model: str = ""
    out: str = ""


_CONVERTERS = {"int": int, "float": float, "str": str}


def render_config(config) -> str:
    """Flat key=value text form of a run configuration."""
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        lines.append(f"{f.name}={value!r}" if isinstance(value, float)
                     else f"{f.name}={value}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def build_config(cls, file_values: dict[str, str], flag_values: dict):
    """Merge config-file values and command-line flags (flags win) into cls."""
    known = {f.name: f for f in fields(cls)}
    for key in file_values:
        if key not in known:
            raise ConfigError(f"unknown config key '{key}' for {cls.__name__}")
    merged = {}
    for name, f in known.items():
        if flag_values.get(name) is not None:
            merged[name] = flag_values[name]
        elif name in file_values:
            try:
                merged[name] = _CONVERTERS[f.type](file_values[name])
            except ValueError:
                raise ConfigError(f"config key '{name}': cannot parse "
                                  f"{file_values[name]!r} as {f.type}") from None
    return cls(**merged)


def parse_config(cls, text: str):
    """Inverse of :func:`render_config`."""
    return build_config(cls, parse_config_text(text), {})


def _config_from_args(cls, args) -> object:
    file_values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        file_values = parse_config_text(path.read_text(encoding="utf-8"))
    flag_values = {f.name: getattr(args, f.name, None) for f in fields(cls)}
    return build_config(cls, file_values, flag_values)


# --------------------------------------------------------------------------
# Shared helpers
# --------------------------------------------------------------------------

def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _load_inputs(path_str: str) -> list[datapipe.ImageRecord]:
    path = Path(path_str)
    if path.is_file():
        return [datapipe.load_image(path)]
    return datapipe.load_directory(path)


def _outdir(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_gamma(gamma: float, phi) -> float:
    """``0`` selects gamma automatically: 1.0 when the matrix rows are
    orthonormal, otherwise the largest squared singular value, which keeps the
    Landweber step non-expansive."""
    if gamma:
        return gamma
    gram = phi.entries @ phi.entries.T
    if np.abs(gram - np.eye(phi.rows)).max() < 1e-8:
        return 1.0
    top = float(np.linalg.eigvalsh(gram)[-1])
    print(f"note: matrix rows are not orthonormal; using gamma={top:.6g} "
          "(largest squared singular value); pass --gamma to override",
          file=sys.stderr)
    return top


def _spl_config(cfg, gamma: float) -> classic.SplConfig:
    return classic.SplConfig(gamma=gamma, tau0_fraction=cfg.tau0,
                             tau_decay=cfg.tau_decay, max_iters=cfg.spl_iters,
                             rel_tol=cfg.spl_tol, wiener_window=cfg.wiener)


def _scored(algorithm: str, rec: datapipe.ImageRecord, ratio: float,
            reconstruction: np.ndarray, seconds: float) -> metrics.EvalRecord:
    """Score a reconstruction against the source image on the 8-bit grid the
    saved output uses, so reported metrics match the files on disk."""
    reference = rec.pixels[:, :, 0]
    test = datapipe.quantize(reconstruction)
    return metrics.EvalRecord(algorithm=algorithm, image=rec.name,
                              sampling_ratio=ratio, psnr_db=metrics.psnr(reference, test),
                              ssim=metrics.ssim(reference, test), seconds=seconds)


def _write_loss_history(history, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOSS_HEADER)
        for stats in history:
            writer.writerow([stats.epoch, repr(float(stats.mean_loss)),
                             repr(float(stats.learning_rate))])


def _write_spl_log(log: classic.SplLog, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SPL_LOG_HEADER)
        for e in log.entries:
            writer.writerow([e.iteration, repr(e.tau), repr(e.residual), repr(e.change)])


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_train(cfg: TrainConfig) -> int:
    _require(bool(cfg.images), "--images is required")
    _require(bool(cfg.out), "--out is required")
    _require(0 < cfg.ratio <= 1, f"--ratio must lie in (0, 1], got {cfg.ratio}")
    _require(cfg.block >= 2, f"--block must be >= 2, got {cfg.block}")
    _require(cfg.epochs >= 1, f"--epochs must be >= 1, got {cfg.epochs}")
    _require(cfg.iters >= 1, f"--iters must be >= 1, got {cfg.iters}")
    _require(cfg.batch >= 1, f"--batch must be >= 1, got {cfg.batch}")
    _require(cfg.patch % cfg.block == 0,
             f"--patch {cfg.patch} must be a multiple of --block {cfg.block}")
    _require(cfg.dtype in ("float32", "float64"),
             f"--dtype must be float32 or float64, got {cfg.dtype}")

    net_cfg = modellib.CsNetConfig(
        block_size=cfg.block, sampling_ratio=cfg.ratio, deep_depth=cfg.depth,
        deep_width=cfg.width, deep_filter=cfg.filter, seed=cfg.seed + SEED_INIT,
        dtype=cfg.dtype)
    net = modellib.build_model(net_cfg)
    images = _load_inputs(cfg.images)
    patch_count = cfg.iters * cfg.batch
    patches = datapipe.extract_patches(images, cfg.patch, patch_count,
                                       Rng(cfg.seed + SEED_PATCHES))
    schedule = modellib.TrainSchedule.staged(cfg.epochs, cfg.iters, cfg.batch, cfg.lr)
    print(f"training: B={cfg.block} ratio={cfg.ratio} n_B={net_cfg.n_measurements} "
          f"depth={cfg.depth} width={cfg.width} dtype={cfg.dtype} "
          f"patches={patch_count}x{cfg.patch}px")
    net, history = modellib.train(net, patches.patches, schedule,
                                  Rng(cfg.seed + SEED_SHUFFLE))
    for stats in history:
        print(f"epoch {stats.epoch:3d}/{cfg.epochs}  "
              f"loss {stats.mean_loss:.6e}  lr {stats.learning_rate:g}")
    modellib.save_model(net, cfg.out)
    _write_loss_history(history, cfg.history)
    print(f"wrote {cfg.out} and {cfg.history}")
    return 0


def cmd_reconstruct(cfg: ReconstructConfig) -> int:
    _require(bool(cfg.model), "--model is required")
    _require(bool(cfg.images), "--images is required")
    _require(bool(cfg.outdir), "--outdir is required")
    _require(cfg.stage in ("both", "initial", "final"),
             f"--stage must be both, initial or final, got {cfg.stage!r}")
    net = modellib.load_model(cfg.model)
    b = net.config.block_size
    if cfg.block and cfg.block != b:
        raise ConfigError(f"--block {cfg.block} does not match model block size {b}")
    if cfg.ratio and int(cfg.ratio * b * b) != net.config.n_measurements:
        raise ConfigError(f"--ratio {cfg.ratio} does not match the model's "
                          f"{net.config.n_measurements} measurements per block")
    ratio = net.config.n_measurements / (b * b)
    out = _outdir(cfg.outdir)
    records = []
    for rec in _load_inputs(cfg.images):
        padded, dims = datapipe.pad_to_block_multiple(rec.pixels, b)
        x = padded.astype(net.config.dtype)
        (measurements, t_sample) = metrics.time_op(lambda: modellib.sample(net, x))
        (initial, t_init) = metrics.time_op(
            lambda: modellib.initial_reconstruct(net, measurements))
        t_initial = t_sample + t_init
        if cfg.stage in ("both", "initial"):
            est = datapipe.crop_to_original(initial, dims)[:, :, 0]
            datapipe.save_image(est, out / f"{rec.name}.initial.pgm")
            records.append(_scored("net-initial", rec, ratio, est, t_initial))
        if cfg.stage in ("both", "final"):
            (final, t_deep) = metrics.time_op(
                lambda: modellib.deep_reconstruct(net, initial))
            est = datapipe.crop_to_original(final, dims)[:, :, 0]
            datapipe.save_image(est, out / f"{rec.name}.final.pgm")
            records.append(_scored("net", rec, ratio, est, t_initial + t_deep))
        line = "  ".join(f"{r.algorithm} {r.psnr_db:.2f} dB" for r in records
                         if r.image == rec.name)
        print(f"{rec.name}: {line}")
    metrics.write_records_csv(records, cfg.records or out / "records.csv")
    return 0


def cmd_baseline(cfg: BaselineConfig) -> int:
    _require(bool(cfg.images), "--images is required")
    _require(bool(cfg.outdir), "--outdir is required")
    _require(0 < cfg.ratio <= 1, f"--ratio must lie in (0, 1], got {cfg.ratio}")
    _require(cfg.block >= 2, f"--block must be >= 2, got {cfg.block}")
    if cfg.matrix:
        phi = load_matrix(cfg.matrix)
        if cfg.block and phi.block_size != cfg.block:
            raise ConfigError(f"--block {cfg.block} does not match matrix block "
                              f"size {phi.block_size}")
    else:
        n_b = int(cfg.ratio * cfg.block * cfg.block)
        _require(n_b >= 1, f"--ratio {cfg.ratio} yields no measurements "
                           f"at block size {cfg.block}")
        phi = classic.make_gaussian_matrix(n_b, cfg.block,
                                           Rng(cfg.seed + SEED_MATRIX))
    b = phi.block_size
    ratio = phi.rows / phi.cols
    autocorr = classic.ar1_autocorrelation(b, cfg.rho)
    phi_tilde = classic.mmse_matrix(phi, autocorr)
    spl_cfg = _spl_config(cfg, _resolve_gamma(cfg.gamma, phi))
    out = _outdir(cfg.outdir)
    records = []
    for rec in _load_inputs(cfg.images):
        padded, dims = datapipe.pad_to_block_multiple(rec.pixels, b)
        y = classic.block_sample(padded[:, :, 0], phi)
        (linear, t_mmse) = metrics.time_op(lambda: classic.mmse_initial(y, phi_tilde))
        ((spl_image, log), t_spl) = metrics.time_op(
            lambda: classic.spl_reconstruct(y, phi, autocorr, spl_cfg,
                                            phi_tilde=phi_tilde))
        est_mmse = datapipe.crop_to_original(linear, dims)
        est_spl = datapipe.crop_to_original(spl_image, dims)
        datapipe.save_image(est_mmse, out / f"{rec.name}.mmse.pgm")
        datapipe.save_image(est_spl, out / f"{rec.name}.spl.pgm")
        _write_spl_log(log, out / f"{rec.name}.spl_log.csv")
        records.append(_scored("mmse", rec, ratio, est_mmse, t_mmse))
        records.append(_scored("spl", rec, ratio, est_spl, t_spl))
        print(f"{rec.name}: mmse {records[-2].psnr_db:.2f} dB  "
              f"spl {records[-1].psnr_db:.2f} dB ({log.iterations} iters)")
    metrics.write_records_csv(records, cfg.records or out / "records.csv")
    return 0


def _parse_ratio_list(text: str) -> list[float]:
    try:
        ratios = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"--ratios: cannot parse {text!r}") from None
    _require(bool(ratios), "--ratios must name at least one sampling ratio")
    for r in ratios:
        _require(0 < r <= 1, f"--ratios entry {r} outside (0, 1]")
    return ratios


def _parse_model_map(text: str) -> dict[float, str]:
    mapping = {}
    for tok in text.split(";"):
        tok = tok.strip()
        if not tok:
            continue
        ratio_str, sep, path = tok.partition("=")
        _require(bool(sep), f"--model entries must look like RATIO=PATH, got {tok!r}")
        try:
            mapping[float(ratio_str)] = path
        except ValueError:
            raise ConfigError(f"--model: cannot parse ratio {ratio_str!r}") from None
    return mapping


def cmd_eval(cfg: EvalConfig) -> int:
    _require(bool(cfg.images), "--images is required")
    _require(bool(cfg.outdir), "--outdir is required")
    _require(cfg.block >= 2, f"--block must be >= 2, got {cfg.block}")
    ratios = _parse_ratio_list(cfg.ratios)
    model_map = _parse_model_map(cfg.models)
    algorithms = [a.strip() for a in cfg.algorithms.split(",") if a.strip()]
    for a in algorithms:
        _require(a in ("net", "mmse", "spl"),
                 f"--algorithms entries must be net, mmse or spl, got {a!r}")
    images = _load_inputs(cfg.images)
    out = _outdir(cfg.outdir)
    b = cfg.block
    records = []
    for ratio in ratios:
        net = None
        if "net" in algorithms:
            if ratio in model_map:
                net = modellib.load_model(model_map[ratio])
                if net.config.block_size != b:
                    raise ConfigError(
                        f"model {model_map[ratio]} has block size "
                        f"{net.config.block_size}, eval uses --block {b}")
                if net.config.n_measurements != int(ratio * b * b):
                    raise ConfigError(
                        f"model {model_map[ratio]} has {net.config.n_measurements} "
                        f"measurements per block, ratio {ratio} implies {int(ratio * b * b)}")
            else:
                print(f"warning: no model for ratio {ratio}, skipping net",
                      file=sys.stderr)
        classical = [a for a in algorithms if a != "net"]
        phi = autocorr = phi_tilde = None
        if classical:
            n_b = int(ratio * b * b)
            _require(n_b >= 1, f"ratio {ratio} yields no measurements at block size {b}")
            phi = classic.make_gaussian_matrix(n_b, b, Rng(cfg.seed + SEED_MATRIX))
            autocorr = classic.ar1_autocorrelation(b, cfg.rho)
            phi_tilde = classic.mmse_matrix(phi, autocorr)
            spl_cfg = _spl_config(cfg, _resolve_gamma(cfg.gamma, phi))
        for rec in images:
            padded, dims = datapipe.pad_to_block_multiple(rec.pixels, b)
            if net is not None:
                x = padded.astype(net.config.dtype)
                (result, seconds) = metrics.time_op(lambda: modellib.forward(net, x))
                est = datapipe.crop_to_original(result.final, dims)[:, :, 0]
                records.append(_scored("net", rec, ratio, est, seconds))
            if classical:
                y = classic.block_sample(padded[:, :, 0], phi)
                if "mmse" in classical:
                    (linear, seconds) = metrics.time_op(
                        lambda: classic.mmse_initial(y, phi_tilde))
                    est = datapipe.crop_to_original(linear, dims)
                    records.append(_scored("mmse", rec, ratio, est, seconds))
                if "spl" in classical:
                    ((spl_image, _log), seconds) = metrics.time_op(
                        lambda: classic.spl_reconstruct(y, phi, autocorr, spl_cfg,
                                                        phi_tilde=phi_tilde))
                    est = datapipe.crop_to_original(spl_image, dims)
                    records.append(_scored("spl", rec, ratio, est, seconds))
    report = metrics.aggregate(records)
    metrics.write_records_csv(records, out / "records.csv")
    metrics.write_summary_csv(report.aggregates, out / "summary.csv")
    print(f"{'algorithm':<10} {'ratio':>6} {'psnr_db':>9} {'ssim':>7} "
          f"{'seconds':>9} {'n':>3}")
    for row in report.aggregates:
        star = "*" if row.has_infinite else ""
        print(f"{row.algorithm:<10} {row.sampling_ratio:>6.2f} "
              f"{row.mean_psnr_db:>9.2f}{star} {row.mean_ssim:>7.4f} "
              f"{row.mean_seconds:>9.4f} {row.count:>3}")
    print(f"wrote {out / 'records.csv'} and {out / 'summary.csv'}")
    return 0


def cmd_export_matrix(cfg: ExportMatrixConfig) -> int:
    _require(bool(cfg.model), "--model is required")
    _require(bool(cfg.out), "--out is required")
    net = modellib.load_model(cfg.model)
    matrix = modellib.export_sampling_matrix(net)
    save_matrix(matrix, cfg.out)
    print(f"wrote {cfg.out}: {matrix.rows}x{matrix.cols} "
          f"(block {matrix.block_size})")
    return 0


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

def _add_config_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE",
                   help="key=value file supplying defaults; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockcs",
        description="Block compressed sensing: learned and classical codecs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the learned codec on an image corpus")
    _add_config_flag(p)
    p.add_argument("--images", help="training image directory (PGM/PNG)")
    p.add_argument("--out", help="output model file (CSNT)")
    p.add_argument("--history", help="loss history CSV path [loss_history.csv]")
    p.add_argument("--block", type=int, help="block size B [32]")
    p.add_argument("--ratio", type=float, help="sampling ratio in (0,1] [0.1]")
    p.add_argument("--epochs", type=int, help="training epochs [100]")
    p.add_argument("--iters", type=int, help="iterations per epoch [1400]")
    p.add_argument("--batch", type=int, help="batch size [64]")
    p.add_argument("--patch", type=int, help="training patch size, multiple of B [96]")
    p.add_argument("--depth", type=int, help="deep stack layer count [5]")
    p.add_argument("--width", type=int, help="deep stack channel count [64]")
    p.add_argument("--filter", type=int, help="deep stack filter size [3]")
    p.add_argument("--lr", type=float, help="stage-1 learning rate [1e-3]")
    p.add_argument("--seed", type=int, help="master seed [0]")
    p.add_argument("--dtype", help="float32 or float64 [float64]")
    p.set_defaults(cls=TrainConfig, run=cmd_train)

    p = sub.add_parser("reconstruct", help="reconstruct images with a trained model")
    _add_config_flag(p)
    p.add_argument("--model", help="model file (CSNT)")
    p.add_argument("--images", help="input image file or directory")
    p.add_argument("--outdir", help="output directory")
    p.add_argument("--records", help="metrics CSV path [<outdir>/records.csv]")
    p.add_argument("--stage", choices=("both", "initial", "final"),
                   help="which reconstruction stages to emit [both]")
    p.add_argument("--block", type=int, help="expected block size (model must match)")
    p.add_argument("--ratio", type=float, help="expected ratio (model must match)")
    p.set_defaults(cls=ReconstructConfig, run=cmd_reconstruct)

    p = sub.add_parser("baseline", help="classical MMSE + SPL reconstruction")
    _add_config_flag(p)
    p.add_argument("--images", help="input image file or directory")
    p.add_argument("--outdir", help="output directory")
    p.add_argument("--records", help="metrics CSV path [<outdir>/records.csv]")
    p.add_argument("--matrix", help="CSMX measurement matrix to reuse "
                                    "(default: generate from seed)")
    p.add_argument("--block", type=int, help="block size B [32]")
    p.add_argument("--ratio", type=float, help="sampling ratio in (0,1] [0.1]")
    p.add_argument("--seed", type=int, help="master seed [0]")
    p.add_argument("--rho", type=float, help="AR(1) autocorrelation parameter [0.95]")
    p.add_argument("--gamma", type=float, help="Landweber scaling factor; 0 = auto [0]")
    p.add_argument("--tau0", type=float, help="initial threshold fraction [0.1]")
    p.add_argument("--tau-decay", dest="tau_decay", type=float,
                   help="threshold decay per iteration [0.95]")
    p.add_argument("--spl-iters", dest="spl_iters", type=int,
                   help="SPL iteration cap [200]")
    p.add_argument("--spl-tol", dest="spl_tol", type=float,
                   help="SPL relative-change stop [1e-4]")
    p.add_argument("--wiener", type=int, help="Wiener window (odd >= 3) or 0 [3]")
    p.set_defaults(cls=BaselineConfig, run=cmd_baseline)

    p = sub.add_parser("eval", help="sweep sampling ratios and produce report CSVs")
    _add_config_flag(p)
    p.add_argument("--images", help="test image file or directory")
    p.add_argument("--outdir", help="output directory")
    p.add_argument("--ratios", help="comma-separated ratios [0.1,0.2,0.3,0.4,0.5]")
    p.add_argument("--model", action="append", dest="models", metavar="RATIO=PATH",
                   help="model file for one ratio; repeatable")
    p.add_argument("--algorithms", help="subset of net,mmse,spl [net,mmse,spl]")
    p.add_argument("--block", type=int, help="block size B [32]")
    p.add_argument("--seed", type=int, help="master seed [0]")
    p.add_argument("--rho", type=float, help="AR(1) autocorrelation parameter [0.95]")
    p.add_argument("--gamma", type=float, help="Landweber scaling factor; 0 = auto [0]")
    p.add_argument("--tau0", type=float, help="initial threshold fraction [0.1]")
    p.add_argument("--tau-decay", dest="tau_decay", type=float,
                   help="threshold decay per iteration [0.95]")
    p.add_argument("--spl-iters", dest="spl_iters", type=int,
                   help="SPL iteration cap [200]")
    p.add_argument("--spl-tol", dest="spl_tol", type=float,
                   help="SPL relative-change stop [1e-4]")
    p.add_argument("--wiener", type=int, help="Wiener window (odd >= 3) or 0 [3]")
    p.set_defaults(cls=EvalConfig, run=cmd_eval)

    p = sub.add_parser("export-matrix",
                       help="export a model's sampling layer as a CSMX matrix")
    _add_config_flag(p)
    p.add_argument("--model", help="model file (CSNT)")
    p.add_argument("--out", help="output matrix file (CSMX)")
    p.set_defaults(cls=ExportMatrixConfig, run=cmd_export_matrix)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "models", None) is not None:
        args.models = ";".join(args.models)
    try:
        cfg = _config_from_args(args.cls, args)
        return args.run(cfg)
    except (ConfigError, DimensionError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except BlockCsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
