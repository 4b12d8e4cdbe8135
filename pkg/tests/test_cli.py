import json

import numpy as np
import pytest

from urnphylo import __version__, spectral
from urnphylo.cli import main
from urnphylo.models import read_traces
from urnphylo.rng import RNG_ALGORITHM
from urnphylo.tree import to_newick

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def check_metadata(meta, seed):
    assert meta["tool"] == "urnphylo"
    assert meta["version"] == __version__
    assert meta["rng_algorithm"] == RNG_ALGORITHM
    assert meta["base_seed"] == seed
    assert len(meta["config_hash"]) == 16


# -- generate -----------------------------------------------------------------


def test_generate_smoke(capsys):
    code, out, _ = run(capsys, "generate", "--model", "yhk", "--n", "6", "--seed", "1")
    assert code == 0
    lines = out.splitlines()
    check_metadata(json.loads(lines[0][2:]), 1)
    assert lines[1].endswith(";")
    assert lines[2].startswith("# A=")


def test_generate_two_leaves(capsys):
    code, out, _ = run(capsys, "generate", "--model", "pda", "--n", "2", "--seed-tree", "t2",
                       "--format", "json")
    assert code == 0
    rec = json.loads(out)["trees"][0]
    assert rec["newick"] == "(1,2);"
    assert rec["B"] == 1 and rec["A"] == 0


def test_generate_unrooted_small(capsys):
    code, _, err = run(capsys, "generate", "--model", "yhk", "--unrooted", "--n", "5")
    assert code == 2
    assert "undefined" in err
    code, out, _ = run(capsys, "generate", "--unrooted", "--n", "5", "--no-stats")
    assert code == 0
    assert "A=" not in out


def test_generate_deterministic_with_trace(capsys, tmp_path):
    trace = tmp_path / "t.jsonl"
    args = ("generate", "--model", "pda", "--n", "30", "--seed", "9", "--count", "3",
            "--format", "json")
    _, a, _ = run(capsys, *args, "--trace", str(trace))
    _, b, _ = run(capsys, *args)
    assert json.loads(a) == json.loads(b)
    traces = read_traces(trace.read_text())
    assert len(traces) == 3
    for tr, rec in zip(traces, json.loads(a)["trees"]):
        assert to_newick(tr.replay()) == rec["newick"]


@pytest.mark.parametrize("argv", [
    ["generate", "--n", "5", "--seed-tree", "((1,2);"],
    ["generate", "--n", "2", "--seed-tree", "t3"],
    ["generate"],
    ["generate", "--n", "5", "--model", "moran"],
    ["frobnicate"],
])
def test_generate_config_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


# -- enumerate / spectral ---------------------------------------------------------


def test_enumerate_pda_four(capsys):
    code, out, _ = run(capsys, "enumerate", "--model", "pda", "--n", "4")
    assert code == 0
    rep = json.loads(out)
    assert rep["pmf"] == {"(0,2)": "1/5", "(1,1)": "4/5"}
    assert rep["moments"]["mean_b"] == "6/5"
    check_metadata(rep["metadata"], None)


def test_enumerate_csv_and_cap(capsys):
    code, out, _ = run(capsys, "enumerate", "--n", "5", "--edges", "--format", "csv")
    assert code == 0 and out.startswith("E1,E2")
    assert run(capsys, "enumerate", "--n", "13")[0] == 2


def test_spectral_yhk(capsys):
    code, out, _ = run(capsys, "spectral", "--model", "yhk")
    assert code == 0
    rep = json.loads(out)
    assert rep["s_v1"] == ["1/3", "1/3", "1/6", "1/6"]
    assert rep["sigma"][0] == ["23/105", "-97/315", "23/210", "-13/630"]
    assert rep["sigma_ab"] == [["23/420", "-1/45"], ["-1/45", "2/45"]]


def test_spectral_matrix(capsys):
    code, out, _ = run(capsys, "spectral", "--matrix", "0,0,0,1;2,-2,1,0;-2,4,-1,0;0,2,0,-1")
    assert code == 0
    rep = json.loads(out)
    assert np.allclose(rep["eigenvalues"], [1, 0, -2, -3], atol=1e-8)
    assert run(capsys, "spectral", "--matrix", "0,-1;1,0")[0] == 2
    assert run(capsys, "spectral", "--matrix", "1,2;3")[0] == 2


# -- urn-run ------------------------------------------------------------------


def test_urn_run(capsys):
    code, out, _ = run(capsys, "urn-run", "--model", "yhk", "--steps", "10", "--seed", "3")
    assert code == 0
    lines = out.splitlines()
    check_metadata(json.loads(lines[0][2:]), 3)
    assert lines[1] == "step,C1,C2,C3,C4,t,drawn"
    assert lines[2] == "0,0,2,0,0,2,"
    assert lines[-1].startswith("10,") and lines[-1].split(",")[5] == "12"


def test_urn_run_errors(capsys):
    assert run(capsys, "urn-run", "--matrix", "1,0;0,1")[0] == 2
    assert run(capsys, "urn-run", "--matrix", "3,0;0,1", "--initial", "1,1")[0] == 2
    assert run(capsys, "urn-run", "--matrix", "3,0;0,1", "--initial", "1,1",
               "--allow-unbalanced")[0] == 0
    code, _, err = run(capsys, "urn-run", "--matrix", "1,0;-3,4", "--initial", "0,1",
                       "--allow-unbalanced", "--steps", "1")
    assert code == 1 and "tenability" in err


# -- simulate -----------------------------------------------------------------


def test_simulate_toml_round_trip(capsys, tmp_path):
    cfg = tmp_path / "camp.toml"
    cfg.write_text('[simulate]\nmodel = "pda"\nn = 60\nreplicates = 40\nbase_seed = 3\n')
    dumped = tmp_path / "eff.toml"
    code, out, _ = run(capsys, "simulate", "--config", str(cfg), "--replicates", "50",
                       "--dump-config", str(dumped), "--tests", "mean,cov")
    assert code in (0, 1)
    rep = json.loads(out)
    assert rep["replicates"] == 50 and rep["config"]["model"] == "pda"
    check_metadata(rep["metadata"], 3)
    eff = tomllib.loads(dumped.read_text())["simulate"]
    assert eff == rep["config"]
    # feeding the effective config back reproduces the run bit-exactly
    code2, out2, _ = run(capsys, "simulate", "--config", str(dumped))
    rep2 = json.loads(out2)
    assert code2 == code
    assert rep2["cov_z_ab"] == rep["cov_z_ab"]
    assert rep2["metadata"]["config_hash"] == rep["metadata"]["config_hash"]


def test_simulate_raw_csv(capsys, tmp_path):
    raw = tmp_path / "raw.csv"
    code, _, _ = run(capsys, "simulate", "--n", "20", "--replicates", "10", "--raw-csv", str(raw),
                     "--tests", "cov")
    assert code in (0, 1)
    assert len(raw.read_text().splitlines()) == 11


@pytest.mark.parametrize("text", ['[simulate]\nreplicates = 1\n', '[simulate]\nflavour = 1\n',
                                  '[simulate\n'])
def test_simulate_config_errors(capsys, tmp_path, text):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(text)
    assert run(capsys, "simulate", "--config", str(cfg))[0] == 2


def test_simulate_failing_test_exit(capsys):
    # eight replicates cannot meet a 10% covariance tolerance
    code, out, _ = run(capsys, "simulate", "--n", "30", "--replicates", "8", "--tests", "cov",
                       "--seed", "1")
    assert code == 1
    assert json.loads(out)["passed"] is False


# -- verify -------------------------------------------------------------------


def test_verify_spectral(capsys, tmp_path):
    report = tmp_path / "rep.json"
    code, out, _ = run(capsys, "verify", "--suite", "spectral", "--report", str(report))
    assert code == 0
    assert "FAIL" not in out
    rep = json.loads(report.read_text())
    assert rep["passed"] and rep["checks"]
    check_metadata(rep["metadata"], 0)


def test_verify_urn(capsys):
    code, out, _ = run(capsys, "verify", "--suite", "urn")
    assert code == 0
    assert out.count("PASS") == 8


def test_verify_all_catches_broken_sigma(capsys, monkeypatch):
    real = spectral.sigma
    monkeypatch.setattr(spectral, "sigma", lambda sp: real(sp) * 2)
    code, out, _ = run(capsys, "verify", "--suite", "all")
    assert code == 1
    assert "FAIL  [spectral]" in out


def test_version(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0 and __version__ in out
