"""End-to-end acceptance checks.

Each test prints a single PASS line on success; a failed assertion is
the corresponding FAIL.
"""

import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from hydroq import cli, mpc, plant, qubo, solvers, stage_models as sm
from hydroq.renewables import PvParams, WtParams, pv_power, wt_power
from tests.conftest import make_full_scenario, make_tiny_scenario
from tests.test_kernels import random_qubo


def report(name, detail=""):
    line = f"[acceptance] PASS {name}" + (f" ({detail})" if detail else "")
    sys.__stdout__.write(line + "\n")
    sys.__stdout__.flush()


def tiny_day_ahead(seed):
    s = make_tiny_scenario(seed=seed)
    fc = sm.make_forecast(s, 0, s.day_ahead_step_s, s.day_ahead_horizon)
    model = sm.build_day_ahead(s, fc, plant.initial_state(s))
    return s, model


def all_bits(n):
    return ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(float)


def test_acceptance_1_renewable_point_checks():
    assert pv_power(PvParams(1.0, 1.0), 25.0, 1.0) == 1.0
    params = WtParams(p_rated=1.0, v_cut_in=3.0, v_rated=8.0, v_cut_out=22.0)
    for v, expect in ((2.9, 0.0), (5.5, 0.125), (8.0, 1.0), (22.0, 1.0), (22.1, 0.0)):
        assert abs(wt_power(params, v) - expect) < 1e-12, (v, expect)
    report("1 renewable point checks", "pv reference exact, wt piecewise within 1e-12")


def test_acceptance_2_qubo_ising_exactness():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        q = random_qubo(rng, n)
        m = qubo.to_ising(q)
        bits = all_bits(n)
        e_q = qubo.energies(q, bits)
        # Ising energy over all assignments, vectorized
        s = 2.0 * bits - 1.0
        jmat = np.zeros((n, n))
        for (i, j), c in m.j.items():
            jmat[i, j] = c
        e_i = s @ m.h + np.einsum("ki,ij,kj->k", s, jmat, s) + m.offset
        worst = max(worst, float(np.abs(e_q - e_i).max()))
    assert worst < 1e-12
    report("2 qubo-ising exactness", f"1000 models, max |dE| = {worst:.3g}")


def test_acceptance_3_penalty_dominance():
    margins = []
    for seed in range(50):
        _, model = tiny_day_ahead(seed)
        q = qubo.compile(model, qubo.auto_penalty(model))
        assert q.n <= 20, q.n
        nm = model.n_vars
        bits = all_bits(q.n)
        energies = qubo.energies(q, bits)
        # feasibility depends only on the model-variable prefix
        model_bits = all_bits(nm)
        feas_prefix = np.ones(1 << nm, bool)
        for con in model.constraints:
            if con.soft_weight is not None:
                continue
            vals = model_bits[:, con.idx] @ con.coef
            bad = (np.abs(vals - con.bound) > 1e-9 if con.sense == "eq"
                   else vals > con.bound + 1e-9)
            feas_prefix &= ~bad
        feas = feas_prefix[np.arange(1 << q.n) & ((1 << nm) - 1)]
        assert feas.any() and (~feas).any()
        feasible_opt = float(energies[feas].min())
        min_infeasible = float(energies[~feas].min())
        assert min_infeasible > feasible_opt, (seed, min_infeasible, feasible_opt)
        margins.append(min_infeasible - feasible_opt)
    report("3 penalty dominance", f"50 instances, min margin = {min(margins):.3g}")


def test_acceptance_4_oracle_equivalence():
    _, model = tiny_day_ahead(seed=3)
    q = qubo.compile(model, qubo.auto_penalty(model))
    exact = solvers.brute_force(q).best.energy
    hits = 0
    for seed in range(100):
        ss = solvers.AnnealSolver(solvers.AnnealParams(
            n_sweeps=1000, n_restarts=50, seed=seed)).sample(q)
        if abs(ss.best.energy - exact) < 1e-9:
            hits += 1
    assert hits >= 95, hits
    report("4 oracle equivalence", f"anneal hit the optimum in {hits}/100 trials")


def test_acceptance_5_closed_loop_constraint_adherence():
    s = make_full_scenario(seed=11, days=7, n_households=1)
    d = s.device
    assert (d.p_fc_max, d.p_el_max) == (2.0, 2.0)
    assert (d.h_max, d.h_init) == (15.0, 1.0)
    assert (d.soc_min, d.soc_max, d.soc_init) == (0.2, 0.9, 0.6)
    solver = solvers.AnnealSolver(solvers.AnnealParams(n_sweeps=300, n_restarts=8, seed=0))
    log = mpc.run_closed_loop(s, 7, solver)
    assert len(log.steps) == 7 * 96
    max_resid = 0.0
    for r in log.steps:
        assert np.all(r.soc >= 0.2 - 1e-9) and np.all(r.soc <= 0.9 + 1e-9)
        assert d.h_min - 1e-9 <= r.hydrogen <= 15.0 + 1e-9
        max_resid = max(max_resid, float(np.abs(r.residual).max()))
    assert max_resid < 1e-6
    report("5 closed-loop constraint adherence",
           f"7 days, SOC/hydrogen in bounds, max residual = {max_resid:.3g} kW")


def test_acceptance_6_scaling_thesis():
    records = cli.bench_records(max_households=8, horizon=1, power_bits=2,
                                solver_names=("brute", "anneal"), repeats=1,
                                seed=0, sweeps=1000, restarts=16)
    exps = cli.fit_scaling(records)
    brute = {r["n_households"]: r["solve_time"] for r in records if r["solver"] == "brute"}
    anneal = {r["n_households"]: r["solve_time"] for r in records if r["solver"] == "anneal"}
    assert max(r["n_variables"] for r in records if r["solver"] == "brute") <= solvers.BRUTE_FORCE_CAP
    assert max(r["n_variables"] for r in records) == 40  # anneal keeps going past the cap
    # exponential growth per variable for the oracle, sub-quadratic power law for anneal
    assert exps["brute"] > 0.5, exps
    assert exps["anneal"] < 2.0, exps
    crossover = [n for n in sorted(brute) if anneal[n] < brute[n]]
    assert crossover, (brute, anneal)
    report("6 scaling thesis",
           f"brute 2^({exps['brute']:.2f} per var), anneal power-law exponent "
           f"{exps['anneal']:.2f}, crossover at N={crossover[0]} within the cap")


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("acceptance_cli")
    cfg = {"n_households": 1, "rng_seed": 9,
           "profiles": {"synthetic": {"seed": 9, "days": 1}}}
    scen = tmp / "scenario.json"
    scen.write_text(json.dumps(cfg))
    out = tmp / "out"
    rc = cli.main(["run", "--scenario", str(scen), "--out-dir", str(out),
                   "--days", "1", "--sweeps", "200", "--restarts", "6", "--seed", "9"])
    assert rc == cli.EXIT_OK
    return tmp, scen, out


def test_acceptance_7_replay_consistency(cli_run, tmp_path):
    tmp, scen, out = cli_run
    traj = out / "trajectory.csv"
    rc = cli.main(["validate", "--scenario", str(scen), "--trajectory", str(traj)])
    assert rc == cli.EXIT_OK
    with open(traj) as f:
        rows = list(csv.reader(f))
    rows[30][10] = "0.999"  # corrupt one logged SOC value
    bad = tmp_path / "bad.csv"
    with open(bad, "w", newline="") as f:
        csv.writer(f).writerows(rows)
    rc = cli.main(["validate", "--scenario", str(scen), "--trajectory", str(bad)])
    assert rc == cli.EXIT_VALIDATION
    report("7 replay consistency", "clean replay exits 0, injected SOC corruption detected")


def test_acceptance_8_determinism(cli_run):
    tmp, scen, out = cli_run
    ref = (out / "trajectory.csv").read_bytes()
    for label, extra in (("rerun", []), ("4 threads", ["--threads", "4"])):
        out2 = tmp / f"out_{label.replace(' ', '_')}"
        rc = cli.main(["run", "--scenario", str(scen), "--out-dir", str(out2),
                       "--days", "1", "--sweeps", "200", "--restarts", "6",
                       "--seed", "9"] + extra)
        assert rc == cli.EXIT_OK
        assert (out2 / "trajectory.csv").read_bytes() == ref, label
    report("8 determinism", "trajectory CSVs byte-identical across reruns and thread counts")
