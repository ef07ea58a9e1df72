"""Command-line workflow: artifacts, reproducibility, exit codes."""

import numpy as np
import pytest

from csdm import load, load_header, load_samples
from csdm.cli import emit_heatmap, main
from csdm.errors import ConfigError, DegenerateRangeError

CONFIG = """\
[run]
seed = 0

[grid]
nx = 8
ny = 8

[prior]
kind = inclusion-fixed

[physics]
kind = elastostatic

[measurement]
kind = truncated-gaussian
sigma_frac = 0.05

[dataset]
n_train = 16

[schedule]
sigma1 = 2.0
sigma_l = 0.05
levels = 8

[train]
iterations = 40
batch_size = 8
lr = 1e-3
lr_final = 0
width = 8
depth = 1
dilations = 1
checkpoint_every = 20

[sample]
epsilon = 1e-4
steps_per_level = 2
n_samples = 8
batch_size = 8

[validate]
ensemble = 30
noise_fracs = 0.05,0.1
index = 0
"""


class TestHeatmap:
    def test_header_and_exact_bytes(self, tmp_path):
        p = tmp_path / "f.pgm"
        field = np.array([[0.0, 0.5], [1.0, 0.25]])
        emit_heatmap(field, p, 0.0, 1.0)
        raw = p.read_bytes()
        assert raw.startswith(b"P5\n2 2\n255\n")
        # rows are flipped so the top image row is the largest y
        want = np.array([[255, 64], [0, 128]], dtype=np.uint8)
        assert raw[len(b"P5\n2 2\n255\n"):] == want.tobytes()

    def test_constant_zero(self, tmp_path):
        p = tmp_path / "f.pgm"
        emit_heatmap(np.zeros((3, 4)), p, 0.0, 1.0)
        assert p.read_bytes() == b"P5\n4 3\n255\n" + bytes(12)

    def test_clamps_out_of_range(self, tmp_path):
        p = tmp_path / "f.pgm"
        emit_heatmap(np.array([[-5.0, 7.0]]), p, 0.0, 1.0)
        assert p.read_bytes()[-2:] == bytes([0, 255])

    def test_degenerate_range(self, tmp_path):
        with pytest.raises(DegenerateRangeError):
            emit_heatmap(np.zeros((2, 2)), tmp_path / "f.pgm", 1.0, 1.0)

    def test_non_2d_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            emit_heatmap(np.zeros((1, 2, 2)), tmp_path / "f.pgm", 0.0, 1.0)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen-data + train + sample + validate in one output directory."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.ini"
    cfg.write_text(CONFIG)
    out = root / "out"
    argv = ["--config", str(cfg), "--out", str(out)]
    assert main(["gen-data"] + argv) == 0
    assert main(["train"] + argv) == 0
    assert main(["sample"] + argv + ["--index", "1"]) == 0
    assert main(["validate"] + argv) == 0
    return {"cfg": cfg, "out": out, "root": root}


class TestArtifacts:
    def test_dataset(self, pipeline):
        data = load(pipeline["out"] / "dataset.csdm")
        assert data.n == 16
        assert data.x.shape == (16, 1, 8, 8)

    def test_checkpoint_and_loss(self, pipeline):
        loss = (pipeline["out"] / "loss.csv").read_text().strip().split("\n")
        assert loss[0] == "iteration,loss"
        assert len(loss) > 2
        iters = [int(r.split(",")[0]) for r in loss[1:]]
        assert iters == sorted(iters)
        assert iters[-1] == 39  # checkpoint chunking keeps global numbering

    def test_samples_artifact(self, pipeline):
        header, arr = load_samples(pipeline["out"] / "samples.csdm")
        assert arr.shape == (8, 1, 8, 8)
        assert header["record_index"] == 1
        assert header["checkpoint_iteration"] == 40
        assert header["sampler"]["n_samples"] == 8
        assert header["schedule"]["L"] == 8
        assert len(header["measurement_digest"]) == 32
        assert len(header["source_dataset_digest"]) == 32

    def test_sample_reports(self, pipeline):
        out = pipeline["out"]
        rows = (out / "summary.csv").read_text().strip().split("\n")
        assert rows[0] == "channel,iy,ix,mean,std"
        assert len(rows) == 1 + 8 * 8
        for name in ("mean.pgm", "std.pgm"):
            raw = (out / name).read_bytes()
            assert raw.startswith(b"P5\n8 8\n255\n")
            assert len(raw) == len(b"P5\n8 8\n255\n") + 64

    def test_validate_report(self, pipeline):
        out = pipeline["out"]
        rows = (out / "validate.csv").read_text().strip().split("\n")
        assert rows[0] == ("noise_frac,rmse_mean,rmse_std,ess,csdm_std_l2,"
                           "n_samples,n_ensemble")
        assert len(rows) == 3
        fracs = [float(r.split(",")[0]) for r in rows[1:]]
        assert fracs == [0.05, 0.1]
        for r in rows[1:]:
            cols = r.split(",")
            assert 1.0 <= float(cols[3]) <= 30.0    # ess within ensemble size
            assert cols[5] == "8" and cols[6] == "30"
        assert (out / "oracle_logw_0.05.csv").exists()
        assert (out / "oracle_logw_0.1.csv").exists()

    def test_gen_data_stdout(self, pipeline, capsys):
        out2 = pipeline["root"] / "echo"
        assert main(["gen-data", "--config", str(pipeline["cfg"]),
                     "--out", str(out2)]) == 0
        text = capsys.readouterr().out
        assert "n=16 grid=8x8" in text
        assert "header_digest=" in text
        assert "u_max=" in text

    def test_hyperparams_stdout(self, pipeline, capsys):
        assert main(["hyperparams", "--config", str(pipeline["cfg"]),
                     "--data", str(pipeline["out"] / "dataset.csdm")]) == 0
        text = capsys.readouterr().out
        for token in ("suggest_sigma1", "gamma = ", "check_gamma",
                      "check_epsilon_squared", "check_epsilon_printed",
                      "recommended_epsilon"):
            assert token in text


class TestReproducibility:
    def test_rerun_produces_identical_bytes(self, pipeline):
        cfg = pipeline["cfg"]
        out_b = pipeline["root"] / "rerun"
        argv = ["--config", str(cfg), "--out", str(out_b)]
        assert main(["gen-data"] + argv) == 0
        assert main(["train"] + argv) == 0
        assert main(["sample"] + argv + ["--index", "1"]) == 0
        for name in ("dataset.csdm", "checkpoint.csmw", "samples.csdm"):
            a = (pipeline["out"] / name).read_bytes()
            b = (out_b / name).read_bytes()
            assert a == b, f"{name} differs between reruns"

    def test_seed_override_changes_dataset(self, pipeline):
        cfg = pipeline["cfg"]
        out_b = pipeline["root"] / "seeded"
        assert main(["gen-data", "--config", str(cfg), "--out", str(out_b),
                     "--seed", "7"]) == 0
        header = load_header(out_b / "dataset.csdm")
        assert header["seed"] == 7
        a = (pipeline["out"] / "dataset.csdm").read_bytes()
        b = (out_b / "dataset.csdm").read_bytes()
        assert a != b


class TestExitCodes:
    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "bad.ini"
        cfg.write_text(CONFIG + "\n[extra]\nmystery = 1\n")
        assert main(["gen-data", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2

    def test_missing_required_kind(self, tmp_path):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[physics]\nkind = elastostatic\n"
                       "[measurement]\nkind = truncated-gaussian\n")
        assert main(["gen-data", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["gen-data", "--config", str(tmp_path / "absent.ini"),
                     "--out", str(tmp_path / "o")]) == 4

    def test_corrupt_dataset(self, pipeline, tmp_path):
        raw = (pipeline["out"] / "dataset.csdm").read_bytes()
        bad = tmp_path / "trunc.csdm"
        bad.write_bytes(raw[:-20])
        assert main(["train", "--config", str(pipeline["cfg"]),
                     "--out", str(tmp_path / "o"), "--data", str(bad)]) == 4

    def test_sample_index_out_of_range(self, pipeline, tmp_path):
        assert main(["sample", "--config", str(pipeline["cfg"]),
                     "--out", str(tmp_path / "o"),
                     "--checkpoint", str(pipeline["out"] / "checkpoint.csmw"),
                     "--data", str(pipeline["out"] / "dataset.csdm"),
                     "--index", "999"]) == 2

    def test_checkpoint_data_mismatch(self, pipeline, tmp_path):
        # a dataset on a different grid must be rejected for sampling
        cfg2 = tmp_path / "other.ini"
        cfg2.write_text(CONFIG.replace("nx = 8", "nx = 6")
                              .replace("ny = 8", "ny = 6"))
        out2 = tmp_path / "o2"
        assert main(["gen-data", "--config", str(cfg2), "--out",
                     str(out2)]) == 0
        assert main(["sample", "--config", str(pipeline["cfg"]),
                     "--out", str(tmp_path / "o3"),
                     "--checkpoint", str(pipeline["out"] / "checkpoint.csmw"),
                     "--data", str(out2 / "dataset.csdm")]) == 2

    def test_bad_thread_env(self, pipeline, monkeypatch):
        monkeypatch.setenv("CSDM_THREADS", "many")
        assert main(["hyperparams", "--config", str(pipeline["cfg"])]) == 2
