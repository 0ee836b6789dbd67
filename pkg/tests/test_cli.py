import csv
import json
import os

import pytest

from hydroq import cli


def write_scenario(tmp_path, days=1, n=1, seed=7):
    cfg = {
        "n_households": n,
        "rng_seed": seed,
        "profiles": {"synthetic": {"seed": seed, "days": days}},
    }
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli_run")
    scen = write_scenario(tmp)
    out = str(tmp / "out")
    rc = cli.main(["run", "--scenario", scen, "--out-dir", out,
                   "--days", "1", "--sweeps", "150", "--restarts", "4", "--dump-model"])
    assert rc == cli.EXIT_OK
    return scen, out


def test_run_produces_all_outputs(run_dir):
    _, out = run_dir
    for name in ("trajectory.csv", "summary.json", "model.txt",
                 "plot_power_profiles.csv", "plot_soc.csv",
                 "plot_unit_power.csv", "plot_hydrogen.csv"):
        assert os.path.exists(os.path.join(out, name)), name
    summary = json.loads(open(os.path.join(out, "summary.json")).read())
    assert summary["steps"] == 96


def test_validate_clean_trajectory(run_dir, capsys):
    scen, out = run_dir
    rc = cli.main(["validate", "--scenario", scen,
                   "--trajectory", os.path.join(out, "trajectory.csv")])
    assert rc == cli.EXIT_OK
    assert "no violations" in capsys.readouterr().out


def test_validate_flags_corruption(run_dir, tmp_path):
    scen, out = run_dir
    src = os.path.join(out, "trajectory.csv")
    bad = tmp_path / "bad.csv"
    with open(src) as f:
        rows = list(csv.reader(f))
    # corrupt a logged SOC value mid-run
    rows[20][10] = "0.99"
    with open(bad, "w", newline="") as f:
        csv.writer(f).writerows(rows)
    rc = cli.main(["validate", "--scenario", scen, "--trajectory", str(bad),
                   "--out-dir", str(tmp_path / "vout")])
    assert rc == cli.EXIT_VALIDATION
    assert os.path.exists(tmp_path / "vout" / "violations.csv")


def test_validate_empty_trajectory(run_dir, tmp_path):
    scen, _ = run_dir
    empty = tmp_path / "empty.csv"
    empty.write_text("nonsense\n")
    rc = cli.main(["validate", "--scenario", scen, "--trajectory", str(empty)])
    assert rc == cli.EXIT_INPUT


def test_run_missing_scenario(tmp_path):
    rc = cli.main(["run", "--scenario", str(tmp_path / "nope.json"),
                   "--out-dir", str(tmp_path / "out")])
    assert rc == cli.EXIT_INPUT


def test_run_days_exceed_coverage(tmp_path):
    scen = write_scenario(tmp_path, days=1)
    rc = cli.main(["run", "--scenario", scen, "--out-dir", str(tmp_path / "out"),
                   "--days", "5"])
    assert rc == cli.EXIT_INPUT


def test_run_remote_requires_url(tmp_path, monkeypatch):
    monkeypatch.delenv("HYDROQ_SAMPLER_URL", raising=False)
    scen = write_scenario(tmp_path)
    rc = cli.main(["run", "--scenario", scen, "--out-dir", str(tmp_path / "out"),
                   "--solver", "remote"])
    assert rc == cli.EXIT_INPUT


def test_bench_produces_gap_column(tmp_path, capsys):
    out = str(tmp_path / "bench_out")
    rc = cli.main(["bench", "--households", "2", "--sweeps", "200",
                   "--restarts", "4", "--out-dir", out])
    assert rc == cli.EXIT_OK
    with open(os.path.join(out, "bench.csv")) as f:
        rows = list(csv.DictReader(f))
    assert {r["solver"] for r in rows} == {"brute", "anneal"}
    anneal_rows = [r for r in rows if r["solver"] == "anneal"]
    # within the oracle window the gap must be recorded and non-negative
    assert all(float(r["optimality_gap"]) >= -1e-9 for r in anneal_rows if r["optimality_gap"])
