import numpy as np
import pytest

from kfc.cli import main
from kfc.data import read_csv


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("gen")
    assert run("generate", "--family", "gauss2d", "--task", "regression", "--seed", 7, "--out", d) == 0
    return d


def test_generate_sizes_and_idempotence(data_dir, tmp_path):
    assert read_csv(data_dir / "train.csv").n == 1500 and read_csv(data_dir / "test.csv").n == 450
    assert run("generate", "--family", "gauss2d", "--task", "regression", "--seed", 7, "--out", tmp_path) == 0
    assert (tmp_path / "train.csv").read_bytes() == (data_dir / "train.csv").read_bytes()


def test_missing_flag_is_usage_error(capsys):
    assert run("generate", "--task", "regression", "--out", "x") == 1
    err = capsys.readouterr().err
    assert "usage" in err and "--family" in err


def test_bad_choice_and_no_command():
    assert run("generate", "--family", "cauchy", "--task", "regression", "--out", "x") == 1
    assert run() == 1


def test_train_predict_evaluate(data_dir, tmp_path, capsys):
    m, p = tmp_path / "m.json", tmp_path / "p.csv"
    assert run("train", "--data", data_dir / "train.csv", "--task", "regression", "--model", m,
               "--grid-size", 40) == 0
    assert run("predict", "--model", m, "--data", data_dir / "train.csv", "--out", p) == 0
    capsys.readouterr()
    assert run("evaluate", "--pred", p, "--data", data_dir / "train.csv") == 0
    err = float(capsys.readouterr().out.strip().split(",")[1])
    y = read_csv(data_dir / "train.csv").y
    assert np.isfinite(err) and err <= np.sqrt(np.mean((y - y.mean()) ** 2))
    # idempotent
    p2 = tmp_path / "p2.csv"
    run("predict", "--model", m, "--data", data_dir / "train.csv", "--out", p2)
    assert p.read_bytes() == p2.read_bytes()


def test_evaluate_identical(data_dir, capsys):
    assert run("evaluate", "--pred", data_dir / "test.csv", "--data", data_dir / "test.csv") == 0
    assert capsys.readouterr().out.strip() == "rmse,0.0"


def test_predict_dimension_mismatch(data_dir, tmp_path, capsys):
    m = tmp_path / "m.json"
    run("train", "--data", data_dir / "test.csv", "--task", "regression", "--model", m, "--grid-size", 10,
        "--divergences", "euclid")
    q = tmp_path / "q.csv"
    q.write_text("x1,x2,x3\n1,2,3\n")
    assert run("predict", "--model", m, "--data", q, "--out", tmp_path / "o.csv") == 2
    assert "DimensionMismatch" in capsys.readouterr().err


def test_data_error_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y\n1,oops\n")
    assert run("train", "--data", bad, "--task", "regression", "--model", tmp_path / "m.json") == 2


def test_config_file(data_dir, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("K: 2\ndivergences: [euclid, gkl]\ngrid-size: 10\ntask: regression\n")
    m = tmp_path / "m.json"
    assert run("train", "--config", cfg, "--data", data_dir / "test.csv", "--model", m, "--K", 1) == 0
    from kfc.serialize import load
    ens = load(m)
    assert ens.members[0].K == 1 and len(ens.members) == 2  # flag beats file; file beats default
    cfg.write_text("bogus: 1\n")
    assert run("train", "--config", cfg, "--data", data_dir / "test.csv", "--task", "regression",
               "--model", m) == 1


def test_bench_smoke(tmp_path):
    out = tmp_path / "b"
    assert run("bench", "--families", "pois", "--task", "classification", "--reps", 2, "--n-train", 40,
               "--n-test", 10, "--grid-size", 10, "--grid-size-2d", 4, "--out", out) == 0
    head = (out / "report.csv").read_text().splitlines()
    assert head[0] == "dataset,estimator,kernel,metric,mean,sd"
    assert any(line.startswith("pois,gkl,,nmi,") for line in head)
    assert (out / "table_nmi.csv").exists() and (out / "table_errors.csv").exists()
    assert (out / "replications.csv").exists()


def test_bench_real_k_range(data_dir, tmp_path):
    out = tmp_path / "s"
    assert run("bench", "--real", data_dir / "test.csv", "--task", "regression", "--k-range", "1..3",
               "--reps", 2, "--methods", "comb2", "--kernels", "gaussian", "--grid-size", 10, "--out", out) == 0
    table = (out / "k_sweep_table.csv").read_text().splitlines()
    assert table[0].startswith("dataset,K,statistic,euclid")
    assert len(table) == 1 + 3 * 2


def test_bad_k_range():
    assert run("bench", "--task", "regression", "--k-range", "0..3", "--out", "x") == 1
