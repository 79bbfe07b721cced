import csv
import json
import subprocess
import sys

import pytest

from fieldclt.cli import main

CONFIGS = {
    "simulate": "model.variant = linear\nmodel.q = 3\nmodel.truncation = 4\nexperiment.rect = 6x5\nexperiment.reps = 7\n",
    "sigma2": ("model.variant = linear\nmodel.q = 3\nmodel.truncation = 3\nexperiment.schedule = 8x8, 16x16\n"
               "experiment.reps = 40\nmc.m = 2\nmc.grids = 3\n"),
    "clt": "model.variant = iid\nexperiment.schedule = 4x4, 8x8\nexperiment.reps = 60\nmc.sigma2_reps = 50\n",
    "fdd": "model.variant = iid\nexperiment.rect = 8x8\nexperiment.reps = 50\nmc.sigma2_reps = 30\ntest.t_grid = 0.5, 1\n",
    "projective": ("model.variant = functional\nmodel.coefficients = product\nmodel.q = 3\nmodel.truncation = 2\n"
                   "model.functional = tanh\nmc.kmax = 2\nmc.lmax = 2\nmc.outer = 64\nmc.inner = 4\n"),
    "counterexample": "counterexample.kind = product\ncounterexample.n = 8\nexperiment.reps = 200\n",
    "oracle": "oracle.check = commuting\noracle.rows = 3\noracle.cols = 3\noracle.instances = 5\n",
}

HEADERS = {
    "simulate": {"simulate.csv": "rep,sum,mean,sum_sq"},
    "sigma2": {"sigma2.csv": "method,scale,estimate,se"},
    "clt": {"clt.csv": "scale,rep_count,sigma2_hat,ks_stat,ks_p"},
    "fdd": {"fdd.csv": "s1,s2,t1,t2,cov,target,se,z"},
    "projective": {"projective.csv": "k,l,norm,se,partial,partial_se",
                   "condition_series.csv": "K,partial,cauchy_gap"},
    "counterexample": {"counterexample.csv": "test,statistic,p_value,reject"},
    "oracle": {"oracle.csv": "instance,deviation"},
}


def write(tmp_path, kind, extra="", base=True):
    path = tmp_path / "run.cfg"
    body = CONFIGS[kind] if base else ""
    path.write_text(f"experiment.kind = {kind}\nexperiment.seed = 11\n{body}{extra}")
    return path


def run(tmp_path, kind, *args, extra="", out="out", base=True):
    cfg = write(tmp_path, kind, extra, base)
    return main([kind, "--config", str(cfg), "--out", str(tmp_path / out), *args])


@pytest.mark.parametrize("kind", sorted(CONFIGS))
def test_every_kind_runs_and_documents_outputs(tmp_path, kind):
    assert run(tmp_path, kind) == 0
    out = tmp_path / "out"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema"] == "fieldclt.run/1"
    assert summary["kind"] == kind
    assert summary["config"]["experiment"]["seed"] == 11
    assert summary["rng"]["seed"] == 11 and summary["rng"]["streams"]
    for fname, header in HEADERS[kind].items():
        with open(out / fname, newline="") as fh:
            rows = list(csv.reader(fh))
        assert ",".join(rows[0]) == header
        assert len(rows) > 1


@pytest.mark.parametrize("kind", ["simulate", "fdd", "projective"])
def test_byte_identical_reruns_and_worker_counts(tmp_path, kind):
    assert run(tmp_path, kind, "--workers", "1", out="a") == 0
    assert run(tmp_path, kind, "--workers", "1", out="b") == 0
    assert run(tmp_path, kind, "--workers", "4", out="c") == 0
    for fname in HEADERS[kind]:
        a = (tmp_path / "a" / fname).read_bytes()
        assert a == (tmp_path / "b" / fname).read_bytes()
        assert a == (tmp_path / "c" / fname).read_bytes()


def test_seed_override_changes_results(tmp_path):
    assert run(tmp_path, "simulate", out="a") == 0
    assert run(tmp_path, "simulate", "--seed", "12", out="b") == 0
    a = (tmp_path / "a" / "simulate.csv").read_text()
    assert a != (tmp_path / "b" / "simulate.csv").read_text()
    assert json.loads((tmp_path / "b" / "summary.json").read_text())["rng"]["seed"] == 12


def test_raw_output(tmp_path):
    assert run(tmp_path, "simulate", "--raw") == 0
    with open(tmp_path / "out" / "simulate_raw.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["rep", "i", "j", "value"] and len(rows) == 1 + 7 * 6 * 5


def test_counterexample_report(tmp_path):
    extra = "experiment.reps = 10000\ncounterexample.n = 64\ntest.alpha = 0.001\n"
    assert run(tmp_path, "counterexample", extra=extra, base=False) == 0
    res = json.loads((tmp_path / "out" / "summary.json").read_text())["results"]
    assert res["tests"]["normality"]["reject"]
    assert "ks_vs_product_normal" in res["tests"]


def test_oracle_commuting_report(tmp_path):
    assert run(tmp_path, "oracle") == 0
    res = json.loads((tmp_path / "out" / "summary.json").read_text())["results"]
    assert res["max_deviation"] <= 1e-12


def test_oracle_distribution_report(tmp_path):
    extra = "oracle.check = distribution\noracle.function = product_lag\nexperiment.rect = 2x2\nexperiment.reps = 2000\n"
    assert run(tmp_path, "oracle", extra=extra, base=False) == 0
    res = json.loads((tmp_path / "out" / "summary.json").read_text())["results"]
    assert abs(res["mean"]) <= 1e-12 and abs(res["variance"] - 4) <= 1e-12
    assert res["sup_cdf_distance"] < 0.06


def test_invalid_config_exit_1(tmp_path, capsys):
    assert run(tmp_path, "simulate", extra="model.colour = red\nexperiment.reps = 0\n") == 1
    err = capsys.readouterr().err
    assert "model.colour" in err and "experiment.reps" in err


def test_kind_mismatch_and_missing_file_exit_1(tmp_path):
    cfg = write(tmp_path, "simulate")
    assert main(["clt", "--config", str(cfg)]) == 1
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert main(["simulate", "--config", str(cfg), "--workers", "0"]) == 1


def test_capacity_failure_exit_2(tmp_path, capsys):
    extra = "oracle.rows = 5\noracle.cols = 5\n"
    assert run(tmp_path, "oracle", extra=extra, base=False) == 2
    assert "CapacityError" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, "simulate")
    proc = subprocess.run([sys.executable, "-m", "fieldclt.cli", "simulate", "--config", str(cfg),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "simulate.csv").exists()
