import csv
import json
import zlib

import numpy as np
import pytest

from lisce.harness.config import parse_config
from lisce.harness.runner import MSE_COLUMNS, RATE_COLUMNS, run_experiment


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cfg(text, **kw):
    return parse_config(text, overrides=kw)


def test_mse_vs_rho_trends(tmp_path):
    c = cfg("experiment = mse-vs-rho\nM = 4\nK = 3\ntrials = 400\ngamma_tr_db = 0\n")
    run_experiment(c, tmp_path)
    data = rows(tmp_path / "mse_vs_rho.csv")
    assert tuple(data[0].keys()) == MSE_COLUMNS
    ls = [float(r["mse_total_db"]) for r in data if r["method"] == "ls"]
    lm = [float(r["mse_total_db"]) for r in data if r["method"] == "lmmse-analytic"]
    assert np.ptp(ls) < 0.3
    assert np.all(np.diff(lm) < 0)
    assert all(r["seed"] == "0" for r in data)


def test_mm_trace_rows(tmp_path):
    c = cfg("experiment = mm-trace\nM = 2\nK = 3\nmm_inits = 3\n")
    m = run_experiment(c, tmp_path)
    data = rows(tmp_path / "mm_trace.csv")
    assert data[0]["init"] == "dft"
    for i in range(3):
        mse = [float(r["mse_linear"]) for r in data if r["init"] == f"random-{i}"]
        assert len(mse) > 1 and np.all(np.diff(mse) <= 1e-9 * np.array(mse[:-1]))
    assert {o["file"] for o in m.outputs} == {"config.txt", "mm_trace.csv"}


def test_identical_seed_gives_identical_bytes(tmp_path):
    c = cfg("experiment = mse-vs-snr\nM = 3\nK = 2\ntrials = 50\nsnr_db = -5, 5\n")
    m1 = run_experiment(c, tmp_path / "a")
    m2 = run_experiment(c.replace(threads=2), tmp_path / "b")
    # Worker count changes the config echo but not the results.
    a = (tmp_path / "a" / "mse_vs_snr.csv").read_bytes()
    assert a == (tmp_path / "b" / "mse_vs_snr.csv").read_bytes()
    assert m1.outputs[1] == m2.outputs[1]
    c3 = run_experiment(c.replace(seed=1), tmp_path / "c")
    assert c3.outputs[1]["crc32"] != m1.outputs[1]["crc32"]


def test_manifest_crcs_match_files(tmp_path):
    c = cfg("experiment = rate-vs-k\nM = 2\nK_grid = 1, 3\ntrials = 20\nmethods = genie, ls\n")
    run_experiment(c, tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    for entry in man["outputs"]:
        data = (tmp_path / entry["file"]).read_bytes()
        assert entry["crc32"] == f"{zlib.crc32(data) & 0xFFFFFFFF:08x}"
    data = rows(tmp_path / "rate_vs_k.csv")
    assert tuple(data[0].keys()) == RATE_COLUMNS
    assert {r["T_p"] for r in data} == {"2", "4"}


def test_failure_removes_partial_outputs(tmp_path):
    c = cfg("experiment = mse-vs-snr\nM = 2\nK = 1\ntrials = 5\nmethods = ls, dncnn\n"
            "dncnn_weights = missing.lisw\n")
    with pytest.raises(FileNotFoundError):
        run_experiment(c, tmp_path)
    assert list(tmp_path.iterdir()) == []


def test_train_then_evaluate(tmp_path):
    wpath = tmp_path / "w.lisw"
    c = cfg("experiment = train\narch = ffdnet\nM = 4\nK = 3\nD = 3\nN_f = 2\n"
            "n_train = 200\nn_val = 100\nn_test = 100\nmax_epochs = 3\n"
            "train_snr_db = -5, 0, 5\n", weights=str(wpath))
    m = run_experiment(c, tmp_path / "t")
    assert wpath.exists()
    log = rows(tmp_path / "t" / "training_log.csv")
    assert len(log) == 3
    test = rows(tmp_path / "t" / "test_mse.csv")
    assert {r["method"] for r in test} == {"ls", "lmmse", "ffdnet"}
    assert {r["snr_db"] for r in test} == {"-5.0", "0.0", "5.0"}
    assert any("best epoch" in n for n in m.notes)
    e = cfg("experiment = rate-vs-snr\nM = 4\nK = 3\ntrials = 20\nmethods = ffdnet, lmmse\n"
            "train_snr_db = -5, 0, 5\n", ffdnet_weights=str(wpath))
    man = run_experiment(e, tmp_path / "r")
    assert any("outside its training set" in n for n in man.notes)


def test_gen_data_and_analytic_only(tmp_path):
    c = cfg("experiment = gen-data\nM = 2\nK = 1\nn_train = 4\nn_val = 2\nn_test = 2\n")
    m = run_experiment(c, tmp_path)
    assert "dataset.lisd" in {o["file"] for o in m.outputs}
    a = cfg("experiment = mse-vs-snr\nM = 2\nK = 1\n")
    run_experiment(a, tmp_path / "an", analytic_only=True)
    methods = {r["method"] for r in rows(tmp_path / "an" / "mse_vs_snr.csv")}
    assert methods == {"ls-analytic", "lmmse-analytic"}
    with pytest.raises(ValueError):
        run_experiment(cfg("experiment = mm-trace\n"), tmp_path / "x", analytic_only=True)
