"""Compare the compiled and pure-numpy kernel paths on the same workloads.

The kernel backend is fixed at import time by the HYDROQ_NO_NUMBA env
flag, so the numpy path is timed in a subprocess with the flag set.

Usage: python benchmarks/bench_kernels.py [--n 200] [--sweeps 2000] [--restarts 8]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def bench_once(n, sweeps, restarts, brute_n):
    import numpy as np

    from hydroq import kernels, qubo, solvers

    rng = np.random.default_rng(0)
    coeffs = {}
    for i in range(n):
        coeffs[(i, i)] = float(rng.normal())
    for _ in range(4 * n):
        i, j = sorted(rng.integers(0, n, 2))
        if i != j:
            coeffs[(int(i), int(j))] = float(rng.normal())
    q = qubo.QuboModel(n, coeffs, 0.0, registry=[None] * n)
    m = qubo.to_ising(q)

    params = solvers.AnnealParams(n_sweeps=sweeps, n_restarts=restarts, seed=7)
    solvers.anneal(m, params)  # warm-up (JIT compile on the numba path)
    t0 = time.perf_counter()
    ss = solvers.anneal(m, params)
    anneal_s = time.perf_counter() - t0

    qb = qubo.QuboModel(
        brute_n,
        {k: v for k, v in coeffs.items() if k[0] < brute_n and k[1] < brute_n},
        0.0,
        registry=[None] * brute_n,
    )
    solvers.brute_force(qb)  # warm-up
    t0 = time.perf_counter()
    bs = solvers.brute_force(qb)
    brute_s = time.perf_counter() - t0

    return {
        "backend": "numba" if kernels.USE_NUMBA else "numpy",
        "anneal_n": n,
        "anneal_s": anneal_s,
        "anneal_best": ss.best.energy,
        "brute_n": brute_n,
        "brute_s": brute_s,
        "brute_best": bs.best.energy,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--sweeps", type=int, default=2000)
    ap.add_argument("--restarts", type=int, default=8)
    ap.add_argument("--brute-n", type=int, default=20)
    ap.add_argument("--emit-json", action="store_true", help="print one JSON record (subprocess mode)")
    args = ap.parse_args()

    if args.emit_json:
        print(json.dumps(bench_once(args.n, args.sweeps, args.restarts, args.brute_n)))
        return

    results = [bench_once(args.n, args.sweeps, args.restarts, args.brute_n)]
    env = dict(os.environ, HYDROQ_NO_NUMBA="1")
    out = subprocess.run(
        [sys.executable, __file__, "--emit-json", "--n", str(args.n), "--sweeps", str(args.sweeps),
         "--restarts", str(args.restarts), "--brute-n", str(args.brute_n)],
        env=env, capture_output=True, text=True, check=True,
    )
    results.append(json.loads(out.stdout.strip().splitlines()[-1]))

    print(f"{'backend':>8} {'anneal_s':>10} {'brute_s':>10} {'anneal_best':>14} {'brute_best':>14}")
    for r in results:
        print(f"{r['backend']:>8} {r['anneal_s']:>10.4f} {r['brute_s']:>10.4f} "
              f"{r['anneal_best']:>14.6g} {r['brute_best']:>14.6g}")
    if results[0]["anneal_best"] != results[1]["anneal_best"]:
        print("warning: backends disagree on the annealed best energy", file=sys.stderr)
    if results[0]["brute_best"] != results[1]["brute_best"]:
        print("warning: backends disagree on the brute-force optimum", file=sys.stderr)


if __name__ == "__main__":
    main()
