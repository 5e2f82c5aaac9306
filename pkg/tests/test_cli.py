from __future__ import annotations

import json
import re
import subprocess
import sys

import numpy as np
import pytest

from sinn.cli import main
from sinn.ensemble import Ensemble, load_ensemble, save_ensemble
from sinn.model import load_checkpoint
from sinn.stats import AcfCurve, PdfEstimate, TransitionCurve
from sinn.train import TrainReport

SMALL = """\
preset = ou
seed = 3
data.stride = 10
data.trajectory_count = 6
data.trajectory_length = 40
data.burn_in = 100
model.hidden_size = 2
train.batch_size = 8
train.validation_size = 8
train.seq_len = 30
train.eval_interval = 5
train.max_iterations = 10
train.max_restarts = 0
train.stop_threshold = 1e9
target.max_lag = 5
target.grid_points = 30
"""

ERROR_LINE = re.compile(r'^sinn-error code=(\w+) message=(".*")$')


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "small.txt"
    p.write_text(SMALL)
    return p


def error_of(capsys):
    lines = capsys.readouterr().err.strip().splitlines()
    m = ERROR_LINE.match(lines[-1])
    assert m, lines
    return m.group(1), json.loads(m.group(2))


def test_generate_writes_ensembles_and_metadata(cfg_file, tmp_path, capsys):
    out = tmp_path / "gen"
    assert main(["generate", "--config", str(cfg_file), "--out", str(out)]) == 0
    coarse = load_ensemble(out / "coarse.sine")
    fine = load_ensemble(out / "fine.sine")
    assert coarse.data.shape == (6, 40, 1) and coarse.dt == pytest.approx(0.01)
    assert fine.time == 39 * 10 + 1
    np.testing.assert_array_equal(fine.data[:, ::10], coarse.data)
    meta = (out / "meta.txt").read_text()
    assert "seed = 3" in meta and "coarse_shape = 6, 40, 1" in meta
    assert (out / "trajectories.png").stat().st_size > 0
    assert "generated coarse=6x40x1" in capsys.readouterr().out


def test_generate_threads_match_serial(cfg_file, tmp_path):
    for threads in ("0", "3"):
        main(["generate", "--config", str(cfg_file), "--out", str(tmp_path / threads), "--threads", threads,
              "--coarse-only"])
    assert (tmp_path / "0" / "coarse.sine").read_bytes() == (tmp_path / "3" / "coarse.sine").read_bytes()
    assert not (tmp_path / "0" / "fine.sine").exists()


def test_seed_flag_changes_data(cfg_file, tmp_path):
    main(["generate", "--config", str(cfg_file), "--out", str(tmp_path / "a"), "--coarse-only"])
    main(["generate", "--config", str(cfg_file), "--out", str(tmp_path / "b"), "--coarse-only", "--seed", "4"])
    a, b = (load_ensemble(tmp_path / d / "coarse.sine") for d in "ab")
    assert not np.array_equal(a.data, b.data)
    assert "seed = 4" in (tmp_path / "b" / "config.txt").read_text()


def test_train_sample_stats_pipeline(cfg_file, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg_file), "--out", str(out)]) == 0
    assert "converged=true" in capsys.readouterr().out
    rep = TrainReport.from_csv((out / "report.csv").read_text())
    assert rep.entries[0].iteration == 5
    ck = load_checkpoint(out / "checkpoint.sinn")
    assert ck.dt == pytest.approx(0.01) and ck.config.hidden_size == 2
    assert "train.seq_len = 30" in (out / "config.txt").read_text()
    assert (out / "loss.png").exists()

    assert main(["sample", "--checkpoint", str(out / "checkpoint.sinn"), "--out", str(out),
                 "--batch", "12", "--steps", "25", "--seed", "1"]) == 0
    e = load_ensemble(out / "samples.sine")
    assert e.data.shape == (12, 25, 1) and e.dt == pytest.approx(0.01)
    main(["sample", "--checkpoint", str(out / "checkpoint.sinn"), "--out", str(out), "--batch", "12",
          "--steps", "25", "--seed", "1", "--threads", "4", "--name", "t.sine"])
    assert (out / "t.sine").read_bytes() == (out / "samples.sine").read_bytes()

    st = out / "stats"
    assert main(["stats", "--ensemble", str(out / "samples.sine"), "--out", str(st), "--max-lag", "10"]) == 0
    acf = AcfCurve.from_csv((st / "acf.csv").read_text())
    AcfCurve.from_csv((st / "acf2.csv").read_text())
    pdf = PdfEstimate.from_csv((st / "pdf.csv").read_text())
    assert acf.values[0] == 1.0 and acf.lags.max() == 10
    assert pdf.grid.size == 100
    assert (st / "acf.png").exists() and (st / "pdf.png").exists()


def test_train_is_reproducible(cfg_file, tmp_path):
    for d in ("a", "b"):
        main(["train", "--config", str(cfg_file), "--out", str(tmp_path / d)])
    ra, rb = (TrainReport.from_csv((tmp_path / d / "report.csv").read_text()) for d in "ab")
    assert ra == rb
    assert load_checkpoint(tmp_path / "a" / "checkpoint.sinn").params.equals(
        load_checkpoint(tmp_path / "b" / "checkpoint.sinn").params)


def test_train_failure_exit_code(cfg_file, tmp_path, capsys):
    out = tmp_path / "fail"
    cfg_file.write_text(SMALL.replace("1e9", "0"))
    code = main(["train", "--config", str(cfg_file), "--out", str(out), "--max-iterations", "5"])
    assert code == 3
    assert error_of(capsys)[0] == "TrainingFailed"
    assert (out / "checkpoint.sinn").exists() and (out / "report.csv").exists()


def test_stats_methods_agree(tmp_path):
    e = Ensemble(np.random.default_rng(0).normal(size=(7, 300, 1)), 0.5)
    save_ensemble(e, tmp_path / "e.sine")
    for m in ("fft", "brute"):
        assert main(["stats", "--ensemble", str(tmp_path / "e.sine"), "--out", str(tmp_path / m),
                     "--method", m, "--max-lag", "200"]) == 0
    a, b = (AcfCurve.from_csv((tmp_path / m / "acf.csv").read_text()) for m in ("fft", "brute"))
    np.testing.assert_allclose(a.values, b.values, atol=1e-10, rtol=0)


def test_rate_command(tmp_path, capsys):
    rng = np.random.default_rng(2)
    # two-state telegraph signal with a known flip probability
    flips = rng.random((400, 600)) < 0.01
    x = np.where(np.cumsum(flips, axis=1) % 2 == 0, -1.0, 1.0)
    x[:200] *= -1
    save_ensemble(Ensemble(x[:, :, None], 0.2), tmp_path / "t.sine")
    assert main(["rate", "--ensemble", str(tmp_path / "t.sine"), "--out", str(tmp_path),
                 "--window", "2", "6"]) == 0
    line = capsys.readouterr().out.strip()
    assert line == (tmp_path / "rate.txt").read_text().strip()
    k = float(re.search(r"k_ab=(\S+)", line).group(1))
    assert k == pytest.approx(0.01 / 0.2, rel=0.3)
    assert "window=2.0,6.0" in line
    curve = TransitionCurve.from_csv((tmp_path / "transition.csv").read_text())
    assert curve.values[0] == 0.0
    assert (tmp_path / "transition.png").exists()


def test_rate_degenerate(tmp_path, capsys):
    save_ensemble(Ensemble(np.ones((3, 50, 1)), 1.0), tmp_path / "pos.sine")
    assert main(["rate", "--ensemble", str(tmp_path / "pos.sine"), "--out", str(tmp_path)]) == 1
    assert error_of(capsys)[0] == "DegenerateError"


def test_corrupt_checkpoint_is_format_error(tmp_path, capsys):
    (tmp_path / "bad.sinn").write_bytes(b"NOPE" + bytes(40))
    assert main(["sample", "--checkpoint", str(tmp_path / "bad.sinn"), "--out", str(tmp_path)]) == 1
    code, msg = error_of(capsys)
    assert code == "FormatError" and "magic" in msg


def test_empty_ensemble_is_format_error(tmp_path, capsys):
    (tmp_path / "empty.sine").write_bytes(b"")
    assert main(["stats", "--ensemble", str(tmp_path / "empty.sine"), "--out", str(tmp_path)]) == 1
    assert error_of(capsys)[0] == "FormatError"


def test_invalid_config_reported(tmp_path, capsys):
    p = tmp_path / "bad.txt"
    p.write_text("preset = ou\ndata.trajectory_count = 0\n")
    assert main(["generate", "--config", str(p), "--out", str(tmp_path)]) == 1
    assert error_of(capsys)[0] == "ParameterError"


def test_minimal_sample(cfg_file, tmp_path):
    main(["train", "--config", str(cfg_file), "--out", str(tmp_path), "--max-iterations", "1"])
    assert main(["sample", "--checkpoint", str(tmp_path / "checkpoint.sinn"), "--out", str(tmp_path),
                 "--batch", "1", "--steps", "2", "--name", "m.csv"]) == 0
    text = (tmp_path / "m.csv").read_text()
    assert len(text.strip().splitlines()) >= 2


def test_console_script_usage_errors():
    r = subprocess.run([sys.executable, "-m", "sinn.cli", "generate", "--threads", "-1"],
                       capture_output=True, text=True)
    assert r.returncode != 0
    r = subprocess.run([sys.executable, "-m", "sinn.cli", "stats", "--ensemble", "/nonexistent.sine",
                        "--out", "/tmp"], capture_output=True, text=True)
    assert r.returncode == 1
    assert ERROR_LINE.match(r.stderr.strip().splitlines()[-1])
