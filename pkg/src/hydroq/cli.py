"""Command-line entry point: run closed-loop simulations, benchmark
solver scaling, and validate recorded trajectories.

Exit codes: 0 success, 1 input error, 2 validation failure, 3 solver
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import mpc, plant, qubo, scenario as scenario_mod, solvers, stage_models
from .errors import (
    EnergyMismatch,
    HydroqError,
    MissingSeries,
    NoFeasibleSample,
    ParseError,
    ProtocolError,
    RemoteUnavailable,
    TooLarge,
    ValidationError,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VALIDATION = 2
EXIT_SOLVER = 3

_INPUT_ERRORS = (ParseError, ValidationError, MissingSeries, FileNotFoundError, OSError)
_SOLVER_ERRORS = (NoFeasibleSample, RemoteUnavailable, ProtocolError, EnergyMismatch, TooLarge)


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def build_solver(args):
    if args.solver == "brute":
        return solvers.BruteForceSolver()
    params = solvers.AnnealParams(
        n_sweeps=args.sweeps,
        n_restarts=args.restarts,
        seed=args.seed if args.seed is not None else 0,
        n_threads=args.threads,
    )
    if args.solver == "anneal":
        return solvers.AnnealSolver(params)
    endpoint = args.remote_url or os.environ.get("HYDROQ_SAMPLER_URL")
    if not endpoint:
        raise ParseError("remote solver needs --remote-url or HYDROQ_SAMPLER_URL")
    return solvers.RemoteSolver(endpoint, timeout=args.remote_timeout, num_reads=args.restarts)


def _load_scenario(args):
    s = scenario_mod.load_scenario(args.scenario)
    if args.seed is not None:
        s = replace(s, rng_seed=args.seed)
    return s


def _write_plot_csvs(log: mpc.TrajectoryLog, out_dir: str):
    """Plot-ready CSVs: bus power profiles + SOC, and unit power +
    hydrogen level."""
    n = log.scenario.n_households
    fmt = mpc.FLOAT_FMT

    def power_profiles(f):
        w = csv.writer(f)
        w.writerow(["slot", "pv_kw", "wt_kw"] + [f"load_kw_{i}" for i in range(n)]
                   + [f"batt_net_kw_{i}" for i in range(n)])
        for r in log.steps:
            w.writerow([r.slot, fmt % r.pv, fmt % r.wt]
                       + [fmt % r.loads[i] for i in range(n)]
                       + [fmt % (r.p_dis[i] - r.p_ch[i]) for i in range(n)])

    def soc(f):
        w = csv.writer(f)
        w.writerow(["slot"] + [f"soc_{i}" for i in range(n)])
        for r in log.steps:
            w.writerow([r.slot] + [fmt % r.soc[i] for i in range(n)])

    def unit_power(f):
        w = csv.writer(f)
        w.writerow(["slot"] + [f"fc_kw_{i}" for i in range(n)] + [f"el_kw_{i}" for i in range(n)])
        for r in log.steps:
            w.writerow([r.slot] + [fmt % r.fc_power[i] for i in range(n)]
                       + [fmt % r.el_power[i] for i in range(n)])

    def hydrogen(f):
        w = csv.writer(f)
        w.writerow(["slot", "hydrogen_kg"])
        for r in log.steps:
            w.writerow([r.slot, fmt % r.hydrogen])

    mpc._atomic_write(os.path.join(out_dir, "plot_power_profiles.csv"), power_profiles)
    mpc._atomic_write(os.path.join(out_dir, "plot_soc.csv"), soc)
    mpc._atomic_write(os.path.join(out_dir, "plot_unit_power.csv"), unit_power)
    mpc._atomic_write(os.path.join(out_dir, "plot_hydrogen.csv"), hydrogen)


def cmd_run(args) -> int:
    try:
        s = _load_scenario(args)
        s.require_slots(args.days * scenario_mod.SLOTS_PER_DAY)
        solver = build_solver(args)
        os.makedirs(args.out_dir, exist_ok=True)
    except _INPUT_ERRORS as exc:
        _err(exc)
        return EXIT_INPUT

    if args.dump_model:
        initial = plant.initial_state(s)
        fc = stage_models.make_forecast(s, 0, s.day_ahead_step_s, s.day_ahead_horizon)
        model = stage_models.build_day_ahead(s, fc, initial)
        mpc._atomic_write(os.path.join(args.out_dir, "model.txt"),
                          lambda f: f.write(stage_models.dump_model(model)))

    try:
        log = mpc.run_closed_loop(s, args.days, solver)
    except _SOLVER_ERRORS as exc:
        _err(exc)
        return EXIT_SOLVER
    except _INPUT_ERRORS as exc:
        _err(exc)
        return EXIT_INPUT

    traj_path = os.path.join(args.out_dir, "trajectory.csv")
    mpc.write_trajectory_csv(log, traj_path)
    mpc.write_summary_json(log, os.path.join(args.out_dir, "summary.json"))
    _write_plot_csvs(log, args.out_dir)

    rows = mpc.read_trajectory_csv(traj_path, s.n_households)
    violations = mpc.replay_violations(rows, s)
    if violations:
        _err(f"{len(violations)} constraint violations in the realized trajectory")
        _write_violations(os.path.join(args.out_dir, "violations.csv"), violations)
        return EXIT_VALIDATION
    print(json.dumps(log.summary(), indent=2, sort_keys=True))
    return EXIT_OK


def _write_violations(path, violations):
    def emit(f):
        w = csv.writer(f)
        w.writerow(["constraint_id", "household", "time_index", "magnitude"])
        for v in violations:
            w.writerow([v.constraint_id, v.household, v.time_index, mpc.FLOAT_FMT % v.magnitude])

    mpc._atomic_write(path, emit)


def cmd_validate(args) -> int:
    try:
        s = _load_scenario(args)
        rows = mpc.read_trajectory_csv(args.trajectory, s.n_households)
        violations = mpc.replay_violations(rows, s)
    except _INPUT_ERRORS as exc:
        _err(exc)
        return EXIT_INPUT
    except (ValueError, StopIteration) as exc:
        _err(f"trajectory schema mismatch: {exc}")
        return EXIT_INPUT
    if violations:
        for v in violations[:20]:
            print(f"violation {v.constraint_id} household={v.household} step={v.time_index} "
                  f"magnitude={v.magnitude:.6g}", file=sys.stderr)
        if args.out_dir:
            os.makedirs(args.out_dir, exist_ok=True)
            _write_violations(os.path.join(args.out_dir, "violations.csv"), violations)
        return EXIT_VALIDATION
    print(f"ok: {len(rows)} steps, no violations")
    return EXIT_OK


def _bench_scenario(n_households, horizon, power_bits, seed):
    ambient, insolation, wind, loads = scenario_mod.synth_profiles(seed, 1, n_households)
    return scenario_mod.Scenario(
        n_households=n_households,
        device=scenario_mod.DeviceParams(p_fc_min=0.0),
        costs=scenario_mod.CostParams(),
        pv_rated=3.0, wt_rated=2.0, eta_pv_conv=0.9,
        v_cut_in=3.0, v_rated=8.0, v_cut_out=22.0,
        ambient_temp=ambient, insolation=insolation, wind_speed=wind, loads=loads,
        day_ahead_horizon=horizon,
        power_bits=power_bits,
        slack_bits=2,
        rng_seed=seed,
        include_el=False,
        include_battery=False,
    )


def bench_records(max_households, horizon, power_bits, solver_names, repeats, seed, sweeps, restarts):
    """One day-ahead model per household count; brute force is skipped
    above the variable cap, anneal always runs at fixed sweeps."""
    records = []
    # warm both kernel paths so JIT compilation never lands in a timing
    warm = qubo.QuboModel(2, {(0, 0): 1.0, (0, 1): -1.0}, 0.0, registry=[None, None])
    solvers.brute_force(warm)
    solvers.anneal(qubo.to_ising(warm), solvers.AnnealParams(n_sweeps=10, n_restarts=1))
    for n in range(1, max_households + 1):
        s = _bench_scenario(n, horizon, power_bits, seed)
        initial = plant.initial_state(s)
        fc = stage_models.make_forecast(s, 0, s.day_ahead_step_s, s.day_ahead_horizon)
        t0 = time.perf_counter()
        model = stage_models.build_day_ahead(s, fc, initial)
        q = qubo.compile(model, qubo.auto_penalty(model))
        build_time = time.perf_counter() - t0
        oracle_energy = None
        for name in solver_names:
            if name == "brute":
                if q.n > solvers.BRUTE_FORCE_CAP:
                    print(f"  n_households={n}: {q.n} vars above the "
                          f"{solvers.BRUTE_FORCE_CAP}-var cap, oracle skipped", file=sys.stderr)
                    continue
                spec = solvers.BruteForceSolver()
            elif name == "anneal":
                spec = solvers.AnnealSolver(solvers.AnnealParams(
                    n_sweeps=sweeps, n_restarts=restarts, seed=seed))
            else:
                raise ParseError(f"unknown bench solver {name!r}")
            for _ in range(repeats):
                t0 = time.perf_counter()
                ss = spec.sample(q)
                solve_time = time.perf_counter() - t0
                best = ss.best
                solvers._validate_sample(model, best)
                if name == "brute":
                    oracle_energy = best.energy
                rec = {
                    "n_households": n,
                    "n_variables": q.n,
                    "solver": name,
                    "build_time": build_time,
                    "solve_time": solve_time,
                    "best_energy": best.energy,
                    "feasible": best.feasible,
                    "optimality_gap": (best.energy - oracle_energy) if oracle_energy is not None else None,
                }
                records.append(rec)
    return records


def cmd_bench(args) -> int:
    try:
        names = [s.strip() for s in args.solvers.split(",") if s.strip()]
        records = bench_records(
            args.households, args.horizon, args.power_bits, names,
            args.repeats, args.seed if args.seed is not None else 0,
            args.sweeps, args.restarts,
        )
    except _INPUT_ERRORS as exc:
        _err(exc)
        return EXIT_INPUT
    except _SOLVER_ERRORS as exc:
        _err(exc)
        return EXIT_SOLVER

    os.makedirs(args.out_dir, exist_ok=True)
    cols = ["n_households", "n_variables", "solver", "build_time", "solve_time",
            "best_energy", "feasible", "optimality_gap"]

    def emit(f):
        w = csv.writer(f)
        w.writerow(cols)
        for r in records:
            w.writerow(["" if r[c] is None else r[c] for c in cols])

    mpc._atomic_write(os.path.join(args.out_dir, "bench.csv"), emit)
    print(f"{'N':>3} {'vars':>6} {'solver':>8} {'build_s':>10} {'solve_s':>10} {'energy':>14} {'feas':>5}")
    for r in records:
        print(f"{r['n_households']:>3} {r['n_variables']:>6} {r['solver']:>8} "
              f"{r['build_time']:>10.4f} {r['solve_time']:>10.4f} {r['best_energy']:>14.5g} "
              f"{str(r['feasible']):>5}")
    return EXIT_OK


def fit_scaling(records):
    """Least-squares exponents: log2(brute time) vs variable count
    (exponential model) and log(anneal time) vs log(variable count)
    (power-law model). Returns {solver: exponent}."""
    out = {}
    for name, xf, yf in (("brute", lambda r: r["n_variables"], lambda t: math.log2(t)),
                         ("anneal", lambda r: math.log(r["n_variables"]), lambda t: math.log(t))):
        pts = [(xf(r), yf(max(r["solve_time"], 1e-9))) for r in records if r["solver"] == name]
        if len(pts) >= 2:
            x = np.array([p[0] for p in pts])
            y = np.array([p[1] for p in pts])
            out[name] = float(np.polyfit(x, y, 1)[0])
    return out


def make_parser():
    parser = argparse.ArgumentParser(prog="hydroq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the scenario RNG seed")
        p.add_argument("--out-dir", default="out", help="output directory")

    def solver_opts(p):
        p.add_argument("--solver", choices=("brute", "anneal", "remote"), default="anneal")
        p.add_argument("--sweeps", type=int, default=300)
        p.add_argument("--restarts", type=int, default=8)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--remote-url", default=None)
        p.add_argument("--remote-timeout", type=float, default=30.0)

    p_run = sub.add_parser("run", help="closed-loop simulation")
    common(p_run)
    solver_opts(p_run)
    p_run.add_argument("--days", type=int, default=1)
    p_run.add_argument("--dump-model", action="store_true", help="dump the first day-ahead model")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="solver scaling benchmark")
    p_bench.add_argument("--households", type=int, default=8, help="bench 1..N households")
    p_bench.add_argument("--horizon", type=int, default=1)
    p_bench.add_argument("--power-bits", type=int, default=2)
    p_bench.add_argument("--solvers", default="brute,anneal")
    p_bench.add_argument("--repeats", type=int, default=1)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--sweeps", type=int, default=1000)
    p_bench.add_argument("--restarts", type=int, default=16)
    p_bench.add_argument("--out-dir", default="out")
    p_bench.set_defaults(func=cmd_bench)

    p_val = sub.add_parser("validate", help="replay a trajectory through the plant model")
    common(p_val)
    p_val.add_argument("--trajectory", required=True, help="trajectory CSV from `run`")
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except HydroqError as exc:  # uncategorized domain errors are input errors
        _err(exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
