#!/usr/bin/env python3
"""Desk-scale end-to-end experiment: corpus -> training -> evaluation.

Generates a synthetic corpus, trains the sampling/reconstruction network at
one sampling ratio, then compares it against the linear MMSE estimate and
(optionally) the iterative thresholding pipeline on held-out images.  Writes
the corpus, the model, the loss history, per-image records and an aggregate
summary into the output directory.  Fully deterministic per seed.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from blockcs import classic, datapipe, metrics
from blockcs.model import (CsNetConfig, TrainSchedule, build_model, forward,
                           save_model, train)
from blockcs.rng import Rng

SEED_MATRIX, SEED_INIT, SEED_PATCHES, SEED_SHUFFLE = 1, 2, 3, 4


def parse_args() -> argparse.Namespace:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--train-count", type=int, default=50)
    p.add_argument("--held-count", type=int, default=5)
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--block", type=int, default=32)
    p.add_argument("--ratio", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--patch-count", type=int, default=1600)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--rho", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dtype", default="float64", choices=["float32", "float64"])
    p.add_argument("--with-spl", action="store_true",
                   help="also run the iterative pipeline on held images")
    p.add_argument("--spl-iters", type=int, default=100)
    return p.parse_args()


def quantized(x: np.ndarray) -> np.ndarray:
    return datapipe.quantize(np.clip(x, 0.0, 1.0))


def main() -> int:
    args = parse_args()
    out = Path(args.out)
    (out / "train").mkdir(parents=True, exist_ok=True)
    (out / "held").mkdir(parents=True, exist_ok=True)
    (out / "recon").mkdir(parents=True, exist_ok=True)

    train_set = datapipe.make_synthetic_corpus(
        args.train_count, args.image_size, Rng(args.seed + 100), prefix="train")
    held_set = datapipe.make_synthetic_corpus(
        args.held_count, args.image_size, Rng(args.seed + 1000), prefix="held")
    for rec in train_set:
        datapipe.save_image(rec.pixels, out / "train" / f"{rec.name}.pgm")
    for rec in held_set:
        datapipe.save_image(rec.pixels, out / "held" / f"{rec.name}.pgm")

    patches = datapipe.extract_patches(train_set, args.patch,
                                       args.iters * args.batch,
                                       Rng(args.seed + SEED_PATCHES))
    config = CsNetConfig(block_size=args.block, sampling_ratio=args.ratio,
                         deep_depth=args.depth, deep_width=args.width,
                         seed=args.seed + SEED_INIT, dtype=args.dtype)
    model = build_model(config)
    schedule = TrainSchedule.staged(args.epochs, args.iters, args.batch,
                                    base_rate=args.lr)

    start = time.perf_counter()
    model, history = train(model, patches.patches, schedule,
                           Rng(args.seed + SEED_SHUFFLE))
    train_minutes = (time.perf_counter() - start) / 60.0
    save_model(model, out / "model.csnt")
    with open(out / "loss_history.csv", "w", encoding="ascii") as fh:
        fh.write("epoch,mean_loss,learning_rate\n")
        for row in history:
            fh.write(f"{row.epoch},{row.mean_loss!r},{row.learning_rate!r}\n")

    phi = classic.make_gaussian_matrix(config.n_measurements, args.block,
                                       Rng(args.seed + SEED_MATRIX))
    autocorr = classic.ar1_autocorrelation(args.block, args.rho)
    phi_tilde = classic.mmse_matrix(phi, autocorr)
    spl_config = classic.SplConfig(max_iters=args.spl_iters)

    records = []
    for rec in held_set:
        ref = rec.pixels[:, :, 0]
        padded, dims = datapipe.pad_to_block_multiple(rec.pixels, args.block)

        fp, net_seconds = metrics.time_op(
            lambda: forward(model, padded.astype(model.config.dtype)))
        for stage, field in (("net-initial", fp.initial), ("net", fp.final)):
            img = quantized(datapipe.crop_to_original(field, dims)[:, :, 0])
            datapipe.save_image(img[:, :, None],
                                out / "recon" / f"{rec.name}.{stage}.pgm")
            records.append(metrics.EvalRecord(
                stage, rec.name, args.ratio, metrics.psnr(ref, img),
                metrics.ssim(ref, img), net_seconds))

        y = classic.block_sample(padded, phi)
        mm, mm_seconds = metrics.time_op(
            lambda: classic.mmse_initial(y, phi_tilde))
        img = quantized(datapipe.crop_to_original(mm[:, :, None], dims)[:, :, 0])
        datapipe.save_image(img[:, :, None],
                            out / "recon" / f"{rec.name}.mmse.pgm")
        records.append(metrics.EvalRecord(
            "mmse", rec.name, args.ratio, metrics.psnr(ref, img),
            metrics.ssim(ref, img), mm_seconds))

        if args.with_spl:
            (recon, _), spl_seconds = metrics.time_op(
                lambda: classic.spl_reconstruct(y, phi, autocorr, spl_config,
                                                phi_tilde=phi_tilde))
            img = quantized(
                datapipe.crop_to_original(recon[:, :, None], dims)[:, :, 0])
            datapipe.save_image(img[:, :, None],
                                out / "recon" / f"{rec.name}.spl.pgm")
            records.append(metrics.EvalRecord(
                "spl", rec.name, args.ratio, metrics.psnr(ref, img),
                metrics.ssim(ref, img), spl_seconds))

    metrics.write_records_csv(records, out / "records.csv")
    summary = metrics.aggregate(records).aggregates
    metrics.write_summary_csv(summary, out / "summary.csv")

    print(f"trained {args.epochs}x{args.iters} (batch {args.batch}, "
          f"patch {args.patch}) in {train_minutes:.1f} min; "
          f"first/last epoch loss {history[0].mean_loss:.3f} / "
          f"{history[-1].mean_loss:.3f}")
    for row in summary:
        print(f"{row.algorithm:12s} ratio {row.sampling_ratio:.2f}  "
              f"psnr {row.mean_psnr_db:6.2f} dB  ssim {row.mean_ssim:.4f}  "
              f"{row.mean_seconds * 1e3:8.1f} ms  (n={row.count})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
