"""Command-line interface: config plumbing, the five subcommands end to end on
tiny inputs, and the exit-code contract."""

import numpy as np
import pytest

from blockcs import cli
from blockcs.datapipe import load_image, make_synthetic_corpus, save_image
from blockcs.errors import ConfigError
from blockcs.measurement import load_matrix
from blockcs.metrics import read_records_csv, read_summary_csv
from blockcs.model import export_sampling_matrix, load_model
from blockcs.rng import Rng

# One tiny corpus shared by the command tests: 6 training images and one probe.
TRAIN_ARGS = "--block 8 --ratio 0.25 --epochs 2 --iters 3 --batch 2 --patch 16 " \
             "--depth 2 --width 6 --seed 5"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    images = root / "images"
    images.mkdir()
    for rec in make_synthetic_corpus(6, 32, Rng(77)):
        save_image(rec.pixels, images / f"{rec.name}.pgm")
    probe = root / "probe"
    probe.mkdir()
    save_image(make_synthetic_corpus(1, 32, Rng(99))[0].pixels, probe / "probe.pgm")
    return root


@pytest.fixture(scope="module")
def trained_model(workspace):
    out = workspace / "model.csnt"
    history = workspace / "loss.csv"
    rc = cli.main(f"train --images {workspace}/images --out {out} "
                  f"--history {history} {TRAIN_ARGS}".split())
    assert rc == 0
    return out


class TestConfigPlumbing:
    def test_render_parse_round_trip(self):
        cfg = cli.TrainConfig(images="/a b", lr=0.00125, seed=9)
        back = cli.parse_config(cli.TrainConfig, cli.render_config(cfg))
        assert back == cfg

    def test_file_values_apply_and_flags_override(self):
        text = "block = 16\nratio = 0.5\n# comment\n\nseed = 3\n"
        cfg = cli.build_config(cli.TrainConfig, cli.parse_config_text(text),
                              {"ratio": 0.25})
        assert cfg.block == 16
        assert cfg.ratio == 0.25   # flag wins
        assert cfg.seed == 3

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            cli.build_config(cli.TrainConfig, {"blocc": "8"}, {})

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError):
            cli.parse_config_text("this has no equals sign")

    def test_bad_value_type_rejected(self):
        with pytest.raises(ConfigError):
            cli.build_config(cli.TrainConfig, {"block": "eight"}, {})


class TestTrain:
    def test_writes_model_and_history(self, workspace, trained_model):
        model = load_model(trained_model)
        assert model.config.block_size == 8
        assert model.config.n_measurements == 16
        assert model.config.deep_depth == 2
        lines = (workspace / "loss.csv").read_text().strip().splitlines()
        assert lines[0] == "epoch,mean_loss,learning_rate"
        assert len(lines) == 3  # header + 2 epochs

    def test_same_seed_reproduces_history(self, workspace, trained_model):
        rerun = workspace / "rerun"
        rerun.mkdir()
        rc = cli.main(f"train --images {workspace}/images --out {rerun}/m.csnt "
                      f"--history {rerun}/loss.csv {TRAIN_ARGS}".split())
        assert rc == 0
        assert (rerun / "loss.csv").read_bytes() == (workspace / "loss.csv").read_bytes()

    def test_config_file_equivalent_to_flags(self, workspace, tmp_path):
        text = (f"images = {workspace}/images\nout = {tmp_path}/m.csnt\n"
                f"history = {tmp_path}/loss.csv\nblock = 8\nratio = 0.25\n"
                "epochs = 1\niters = 2\nbatch = 2\npatch = 16\ndepth = 2\n"
                "width = 6\nseed = 5\n")
        cfg_file = tmp_path / "train.cfg"
        cfg_file.write_text(text)
        assert cli.main(["train", "--config", str(cfg_file)]) == 0
        assert (tmp_path / "m.csnt").exists()

    def test_invalid_ratio_is_config_error(self, workspace, capsys):
        rc = cli.main(f"train --images {workspace}/images --out /tmp/x.csnt "
                      "--ratio 1.5".split())
        assert rc == 2
        assert "ratio" in capsys.readouterr().err

    def test_missing_image_directory_is_io_error(self, tmp_path):
        rc = cli.main(f"train --images {tmp_path}/nowhere --out {tmp_path}/m.csnt "
                      "--epochs 1 --iters 1 --batch 1 --patch 16 --block 8".split())
        assert rc == 3


class TestReconstruct:
    def test_writes_stage_images_and_records(self, workspace, trained_model):
        outdir = workspace / "recon"
        rc = cli.main(f"reconstruct --model {trained_model} "
                      f"--images {workspace}/probe --outdir {outdir}".split())
        assert rc == 0
        assert (outdir / "probe.initial.pgm").exists()
        assert (outdir / "probe.final.pgm").exists()
        records = read_records_csv(outdir / "records.csv")
        assert {r.algorithm for r in records} == {"net-initial", "net"}
        assert all(r.image == "probe" for r in records)
        assert all(np.isfinite(r.seconds) for r in records)

    def test_output_matches_original_dimensions(self, workspace, trained_model):
        # 20x28 is not a block multiple: the command pads then crops back.
        odd = workspace / "odd"
        odd.mkdir()
        save_image(make_synthetic_corpus(1, 32, Rng(3))[0].pixels[:20, :28],
                   odd / "odd.pgm")
        outdir = workspace / "recon_odd"
        rc = cli.main(f"reconstruct --model {trained_model} --images {odd} "
                      f"--outdir {outdir}".split())
        assert rc == 0
        rec = load_image(outdir / "odd.final.pgm")
        assert rec.original_dims == (20, 28)

    def test_block_mismatch_is_config_error(self, workspace, trained_model):
        rc = cli.main(f"reconstruct --model {trained_model} "
                      f"--images {workspace}/probe --outdir {workspace}/x "
                      "--block 16".split())
        assert rc == 2

    def test_single_stage_selection(self, workspace, trained_model):
        outdir = workspace / "recon_final"
        rc = cli.main(f"reconstruct --model {trained_model} "
                      f"--images {workspace}/probe --outdir {outdir} "
                      "--stage final".split())
        assert rc == 0
        assert (outdir / "probe.final.pgm").exists()
        assert not (outdir / "probe.initial.pgm").exists()


class TestBaseline:
    def test_writes_estimates_and_iteration_logs(self, workspace):
        outdir = workspace / "base"
        rc = cli.main(f"baseline --images {workspace}/probe --outdir {outdir} "
                      "--block 8 --ratio 0.25 --seed 5 --spl-iters 10".split())
        assert rc == 0
        assert (outdir / "probe.mmse.pgm").exists()
        assert (outdir / "probe.spl.pgm").exists()
        log = (outdir / "probe.spl_log.csv").read_text().splitlines()
        assert log[0] == "iteration,tau,residual,change"
        records = read_records_csv(outdir / "records.csv")
        assert {r.algorithm for r in records} == {"mmse", "spl"}

    def test_accepts_exported_matrix(self, workspace, trained_model):
        matrix_path = workspace / "phi.csmx"
        rc = cli.main(f"export-matrix --model {trained_model} "
                      f"--out {matrix_path}".split())
        assert rc == 0
        outdir = workspace / "base_mat"
        rc = cli.main(f"baseline --images {workspace}/probe --outdir {outdir} "
                      f"--matrix {matrix_path} --block 8 --ratio 0.25 "
                      "--spl-iters 5".split())
        assert rc == 0

    def test_matrix_block_mismatch_is_config_error(self, workspace, trained_model):
        matrix_path = workspace / "phi8.csmx"
        assert cli.main(f"export-matrix --model {trained_model} "
                        f"--out {matrix_path}".split()) == 0
        rc = cli.main(f"baseline --images {workspace}/probe --outdir {workspace}/y "
                      f"--matrix {matrix_path} --block 16".split())
        assert rc == 2


class TestEval:
    def test_sweeps_ratios_and_writes_reports(self, workspace, trained_model):
        outdir = workspace / "eval"
        rc = cli.main(f"eval --images {workspace}/probe --outdir {outdir} "
                      f"--ratios 0.25,0.5 --model 0.25={trained_model} "
                      "--block 8 --seed 5 --spl-iters 5".split())
        assert rc == 0
        records = read_records_csv(outdir / "records.csv")
        algs = {(r.algorithm, r.sampling_ratio) for r in records}
        assert ("net", 0.25) in algs
        assert ("mmse", 0.25) in algs and ("mmse", 0.5) in algs
        assert ("spl", 0.5) in algs
        assert ("net", 0.5) not in algs  # no model supplied for 0.5
        summary = read_summary_csv(outdir / "summary.csv")
        assert len(summary) == len({(r.algorithm, r.sampling_ratio) for r in records})

    def test_missing_model_ratio_warns_but_succeeds(self, workspace, capsys):
        outdir = workspace / "eval_warn"
        rc = cli.main(f"eval --images {workspace}/probe --outdir {outdir} "
                      "--ratios 0.25 --algorithms net,mmse --block 8 "
                      "--spl-iters 5".split())
        assert rc == 0
        assert "no model" in capsys.readouterr().err.lower()

    def test_model_with_wrong_geometry_is_config_error(self, workspace,
                                                       trained_model):
        outdir = workspace / "eval_bad"
        rc = cli.main(f"eval --images {workspace}/probe --outdir {outdir} "
                      f"--ratios 0.5 --model 0.5={trained_model} --block 8 "
                      "--algorithms net".split())
        assert rc == 2  # model was trained at ratio 0.25, not 0.5


class TestExportMatrix:
    def test_export_matches_in_memory_model(self, workspace, trained_model):
        out = workspace / "exported.csmx"
        assert cli.main(f"export-matrix --model {trained_model} --out {out}".split()) == 0
        matrix = load_matrix(out)
        expected = export_sampling_matrix(load_model(trained_model))
        assert matrix.block_size == expected.block_size
        assert np.allclose(matrix.entries, expected.entries, atol=1e-7)


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_model_file_is_io_error(self, workspace):
        rc = cli.main(f"reconstruct --model {workspace}/ghost.csnt "
                      f"--images {workspace}/probe --outdir {workspace}/z".split())
        assert rc == 3

    def test_corrupt_model_file_is_io_error(self, workspace):
        bad = workspace / "bad.csnt"
        bad.write_bytes(b"not a model at all")
        rc = cli.main(f"export-matrix --model {bad} --out {workspace}/m.csmx".split())
        assert rc == 3
