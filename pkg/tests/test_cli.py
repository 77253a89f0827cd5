import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from aatr.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, load_model, main
from aatr.dataio import read_wide_csv, write_wide_csv
from aatr.grid import FunctionalDataset, make_grid, standardize
from aatr.ridge import solve_min_norm_ls

FAST = [
    "--Q", "1",
    "--lambda-count", "3", "--lambda-min", "0.01", "--lambda-max", "100",
    "--de-init-budget", "300", "--de-reshape-budget", "100",
    "--max-alt-iters", "2", "--jobs", "1",
]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def sim(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--shape", "rect1", "--n", "40", "--p", "50", "--seed", "3", "-o", str(out)]) == 0
    return out


def test_simulate_layout(tmp_path):
    out = tmp_path / "s"
    code = main(["simulate", "--shape", "rect1", "--dependence", "dependent", "--seed", "7", "--p", "100", "-o", str(out)])
    assert code == EXIT_OK
    data = rows(out / "data.csv")
    assert len(data) == 101 and all(len(r) == 101 for r in data)
    assert data[0][:2] == ["y", "x_1"]
    assert rows(out / "true_beta.csv")[0] == ["t", "beta"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["seeds"]["seed"] == 7


def test_simulate_byte_identical(tmp_path):
    args = ["simulate", "--shape", "rect2", "--n", "10", "--p", "20", "--seed", "9"]
    main(args + ["-o", str(tmp_path / "a")])
    main(args + ["-o", str(tmp_path / "b")])
    assert (tmp_path / "a/data.csv").read_bytes() == (tmp_path / "b/data.csv").read_bytes()


def test_simulate_noiseless_min_norm(tmp_path):
    main(["simulate", "--shape", "smooth", "--sigma", "0", "--n", "60", "--p", "30", "-o", str(tmp_path)])
    x, y, _ = read_wide_csv(tmp_path / "data.csv")
    ds = standardize(FunctionalDataset(make_grid(30), x, y))
    fit = solve_min_norm_ls(ds)
    assert np.max(np.abs(fit.fitted(ds) - y)) < 1e-6


def test_aatr_seed_env(tmp_path, monkeypatch):
    args = ["simulate", "--n", "5", "--p", "20"]
    main(args + ["--seed", "4", "-o", str(tmp_path / "a")])
    monkeypatch.setenv("AATR_SEED", "4")
    main(args + ["--seed", "99", "-o", str(tmp_path / "b")])
    assert (tmp_path / "a/data.csv").read_bytes() == (tmp_path / "b/data.csv").read_bytes()
    monkeypatch.setenv("AATR_SEED", "four")
    assert main(args + ["-o", str(tmp_path / "c")]) == EXIT_USAGE


def test_fit_predict_round_trip(sim, tmp_path):
    out = tmp_path / "fit"
    assert main(["fit", "--data", str(sim / "data.csv"), *FAST, "-o", str(out)]) == 0
    for name in ("model.json", "cv_table.csv", "curves.csv", "trace.csv", "fitted.csv", "manifest.json"):
        assert (out / name).is_file()
    assert rows(out / "curves.csv")[0] == ["t", "beta", "gamma"]
    assert len(rows(out / "cv_table.csv")) == 1 + 3
    model = json.loads((out / "model.json").read_text())
    assert set(model) >= {"version", "grid", "beta0", "beta", "gamma", "lambda", "q", "col_means", "col_scales"}
    x, _, _ = read_wide_csv(sim / "data.csv")
    xfile = tmp_path / "x.csv"
    write_wide_csv(xfile, x)
    pout = tmp_path / "pred"
    assert main(["predict", "--model", str(out / "model.json"), "--data", str(xfile), "-o", str(pout)]) == 0
    pred = np.array([float(r[1]) for r in rows(pout / "predictions.csv")[1:]])
    fitted = np.array([float(r[2]) for r in rows(out / "fitted.csv")[1:]])
    np.testing.assert_allclose(pred, fitted, rtol=0, atol=1e-10)


def test_fit_recovers_noiseless_rect(tmp_path):
    sim = tmp_path / "sim"
    main(["simulate", "--shape", "rect1", "--sigma", "0", "--seed", "1", "-o", str(sim)])
    out = tmp_path / "fit"
    args = ["fit", "--data", str(sim / "data.csv"), "--Q", "1", "--lambda-count", "3",
            "--lambda-min", "0.01", "--lambda-max", "100", "--de-reshape-budget", "300",
            "--max-alt-iters", "3", "--jobs", "1", "-o", str(out)]
    assert main(args) == 0
    fit, _ = load_model(out / "model.json")
    beta = np.array([float(r[1]) for r in rows(out / "curves.csv")[1:]])
    true = np.array([float(r[1]) for r in rows(sim / "true_beta.csv")[1:]])
    assert np.corrcoef(beta / fit.col_scales, true)[0, 1] > 0.95


@pytest.mark.parametrize("method", ["ridge", "roughness", "mnlstsq"])
def test_fit_baselines(sim, tmp_path, method):
    out = tmp_path / method
    assert main(["fit", "--data", str(sim / "data.csv"), "--method", method, *FAST, "-o", str(out)]) == 0
    model = json.loads((out / "model.json").read_text())
    assert model["method"] == method and model["gamma"] is None
    assert rows(out / "curves.csv")[0] == ["t", "beta", "gamma"]


def test_predict_p_mismatch_and_empty(sim, tmp_path):
    out = tmp_path / "fit"
    main(["fit", "--data", str(sim / "data.csv"), "--method", "ridge", *FAST, "-o", str(out)])
    bad = tmp_path / "bad.csv"
    write_wide_csv(bad, np.zeros((2, 40)))
    code = main(["predict", "--model", str(out / "model.json"), "--data", str(bad), "-o", str(tmp_path / "p")])
    assert code == EXIT_DATA
    empty = tmp_path / "empty.csv"
    empty.write_text(",".join(f"x_{j + 1}" for j in range(50)) + "\n")
    pout = tmp_path / "pe"
    assert main(["predict", "--model", str(out / "model.json"), "--data", str(empty), "-o", str(pout)]) == 0
    assert rows(pout / "predictions.csv") == [["unit", "prediction"]]


def test_p_mismatch_message(sim, tmp_path, capsys):
    out = tmp_path / "fit"
    main(["fit", "--data", str(sim / "data.csv"), "--method", "mnlstsq", "-o", str(out)])
    bad = tmp_path / "bad.csv"
    write_wide_csv(bad, np.zeros((1, 40)))
    main(["predict", "--model", str(out / "model.json"), "--data", str(bad), "-o", str(tmp_path / "p")])
    err = capsys.readouterr().err
    assert "p=40" in err and "p=50" in err


def test_missing_file_and_usage(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert main(["fit", "--data", str(missing), "-o", str(tmp_path / "o")]) == EXIT_DATA
    assert str(missing) in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--bogus"])
    assert exc.value.code == EXIT_USAGE
    assert main(["fit", "-o", str(tmp_path / "o")]) == EXIT_USAGE
    assert main(["fit", "--data", "x", "--folds", "1", "-o", str(tmp_path / "o")]) == EXIT_USAGE


def test_fit_long_format(tmp_path):
    lines, resp = ["unit,time,value"], ["unit,response"]
    rng = np.random.default_rng(0)
    for d in range(12):
        c = rng.normal(size=2)
        for h in range(24):
            lines.append(f"day{d:02d},{h:02d}:30,{c[0] + c[1] * np.sin(h / 4)}")
        resp.append(f"day{d:02d},{np.exp(c[0] / 3 + 1)}")
    (tmp_path / "c.csv").write_text("\n".join(lines) + "\n")
    (tmp_path / "r.csv").write_text("\n".join(resp) + "\n")
    out = tmp_path / "fit"
    code = main(["fit", "--curves", str(tmp_path / "c.csv"), "--responses", str(tmp_path / "r.csv"),
                 "--p", "40", "--transform", "log", "--method", "ridge", *FAST, "-o", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["inputs"]) == 2


def test_benchmark_means(sim, tmp_path):
    out = tmp_path / "bench"
    code = main(["benchmark", "--data", str(sim / "data.csv"), "--method", "ridge,mnlstsq",
                 "--method", "aatr", *FAST, "-o", str(out)])
    assert code == 0
    res = {r[0]: r for r in rows(out / "results.csv")[1:]}
    assert set(res) == {"ridge", "mnlstsq", "aatr"}
    folds = rows(out / "folds.csv")[1:]
    for m, r in res.items():
        vals = [float(f[2]) for f in folds if f[0] == m]
        assert len(vals) == 3
        assert abs(float(r[1]) - float(np.mean(vals))) < 1e-12
    assert len(rows(out / "aatr_selection.csv")) == 4
    assert main(["benchmark", "--method", "lasso", "-o", str(out)]) == EXIT_USAGE


def test_rerun_reproduces(sim, tmp_path):
    out = tmp_path / "fit"
    main(["fit", "--data", str(sim / "data.csv"), *FAST, "--seed", "5", "-o", str(out)])
    again = tmp_path / "again"
    assert main(["rerun", str(out / "manifest.json"), "-o", str(again)]) == 0
    for name in ("model.json", "cv_table.csv", "curves.csv", "fitted.csv"):
        assert (out / name).read_bytes() == (again / name).read_bytes()
    sim2 = tmp_path / "sim2"
    assert main(["rerun", str(sim / "manifest.json"), "-o", str(sim2)]) == 0
    assert (sim / "data.csv").read_bytes() == (sim2 / "data.csv").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "aatr", "simulate", "--n", "3", "--p", "12", "-o", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "data.csv").is_file()
