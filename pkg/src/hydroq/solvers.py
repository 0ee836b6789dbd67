"""Low-energy sampling: exact brute force, simulated-annealing emulation
of the QA backend, the adaptive-penalty solve loop, and the remote
sampler wire protocol (HTTP client plus a loopback reference server).
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import kernels, plant, qubo, stage_models
from .errors import (
    EnergyMismatch,
    HydroqError,
    InvalidOneHot,
    NoFeasibleSample,
    ProtocolError,
    RemoteUnavailable,
    TooLarge,
)

BRUTE_FORCE_CAP = 26
MAX_PENALTY_ROUNDS = 5
ENERGY_AUDIT_TOL = 1e-9


@dataclass(frozen=True)
class AnnealParams:
    n_sweeps: int = 1000
    n_restarts: int = 50
    beta_initial: float = 0.1
    beta_final: float = 10.0
    schedule: str = "geometric"   # or "linear"
    seed: int = 0
    n_threads: int = 1
    auto_scale: bool = True       # normalize betas by the max coupling magnitude

    def __post_init__(self):
        if self.n_sweeps < 1 or self.n_restarts < 1:
            raise ValueError("n_sweeps and n_restarts must be >= 1")
        if not 0.0 < self.beta_initial < self.beta_final:
            raise ValueError("need 0 < beta_initial < beta_final")
        if self.schedule not in ("geometric", "linear"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


@dataclass
class Sample:
    assignment: np.ndarray
    energy: float
    feasible: bool = False
    violations: list = field(default_factory=list)


@dataclass
class SampleSet:
    samples: list
    solver_name: str
    wall_time: float
    best_index: int = 0

    def rerank(self):
        """Point best_index at the min-energy feasible sample, else the
        min-energy sample overall."""
        feas = [k for k, s in enumerate(self.samples) if s.feasible]
        pool = feas if feas else range(len(self.samples))
        self.best_index = min(pool, key=lambda k: self.samples[k].energy)

    @property
    def best(self) -> Sample:
        return self.samples[self.best_index]


def _dense_arrays(q: qubo.QuboModel):
    lin = np.zeros(q.n)
    qsym = np.zeros((q.n, q.n))
    for (i, j), c in q.coefficients.items():
        if i == j:
            lin[i] += c
        else:
            qsym[i, j] += c
            qsym[j, i] += c
    return lin, qsym


def _code_to_bits(codes, n):
    codes = np.asarray(codes, np.int64)
    return ((codes[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.int8)


def brute_force(q: qubo.QuboModel) -> SampleSet:
    """Exact enumeration of all 2^n assignments; returns the global
    minimum and every tie, deterministically ordered."""
    if q.n > BRUTE_FORCE_CAP:
        raise TooLarge(f"{q.n} variables exceeds the brute-force cap of {BRUTE_FORCE_CAP}")
    t0 = time.perf_counter()
    lin, qsym = _dense_arrays(q)
    margin = 1e-6 * max(1.0, float(np.abs(lin).sum() + np.abs(qsym).sum() / 2.0)) * 1e-3
    if kernels.USE_NUMBA:
        cand = np.zeros(1 << 14, np.int64)
        flags = np.zeros(2, np.int64)
        kernels.brute_scan(lin, qsym, q.offset, margin, cand, flags)
        codes = np.unique(cand[: int(flags[0])])
    else:
        _, codes = kernels.brute_scan_numpy(lin, qsym, q.offset, margin)
        codes = np.unique(codes)
    bits = _code_to_bits(codes, q.n)
    exact = qubo.energies(q, bits)
    best = float(exact.min())
    keep = np.where(exact <= best + 1e-12)[0]
    order = keep[np.lexsort((codes[keep],))]
    samples = [Sample(bits[k].copy(), float(exact[k])) for k in order]
    return SampleSet(samples, "brute_force", time.perf_counter() - t0)


def ising_csr(m: qubo.IsingModel):
    """Symmetric CSR view of the coupling map for the sweep kernel."""
    rows = []
    for (i, j), c in m.j.items():
        rows.append((i, j, c))
        rows.append((j, i, c))
    if not rows:
        return (
            np.zeros(m.n + 1, np.int64),
            np.zeros(0, np.int64),
            np.zeros(0, float),
        )
    arr = np.array(rows, float)
    order = np.lexsort((arr[:, 1], arr[:, 0]))
    arr = arr[order]
    indices = arr[:, 1].astype(np.int64)
    data = arr[:, 2].copy()
    counts = np.bincount(arr[:, 0].astype(np.int64), minlength=m.n)
    indptr = np.zeros(m.n + 1, np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, indices, data


def _betas(params: AnnealParams) -> np.ndarray:
    if params.schedule == "geometric":
        return kernels.geometric_betas(params.beta_initial, params.beta_final, params.n_sweeps)
    return kernels.linear_betas(params.beta_initial, params.beta_final, params.n_sweeps)


def anneal(m: qubo.IsingModel, params: AnnealParams, return_traces: bool = False):
    """Multi-restart single-spin Metropolis sampling of an Ising model.

    One sample per restart; per-restart seeds are derived from
    params.seed, so threaded execution is sample-for-sample identical to
    sequential execution.
    """
    if m.n == 0:
        raise ValueError("empty Ising model")
    t0 = time.perf_counter()
    indptr, indices, data = ising_csr(m)
    betas = _betas(params)
    if params.auto_scale:
        # keep the schedule's acceptance profile invariant to the
        # model's energy scale (penalty weights can be huge)
        scale = max(float(np.abs(m.h).max()) if m.n else 0.0,
                    max((abs(v) for v in m.j.values()), default=0.0))
        if scale > 0.0:
            betas = betas / scale
    n_trace = params.n_sweeps if return_traces else 0

    spins = np.empty((params.n_restarts, m.n), np.int8)
    traces = np.empty((params.n_restarts, n_trace))
    energies = np.empty(params.n_restarts)

    def run(r):
        seed = kernels.derive_seed(params.seed, r)
        energies[r] = kernels.anneal_chain(
            m.h, indptr, indices, data, betas, np.uint64(seed), spins[r], traces[r]
        )

    if params.n_threads > 1:
        with ThreadPoolExecutor(max_workers=params.n_threads) as pool:
            list(pool.map(run, range(params.n_restarts)))
    else:
        for r in range(params.n_restarts):
            run(r)

    samples = [
        Sample(((spins[r] + 1) // 2).astype(np.int8), float(energies[r] + m.offset))
        for r in range(params.n_restarts)
    ]
    ss = SampleSet(samples, "anneal", time.perf_counter() - t0)
    ss.best_index = int(np.argmin(energies))
    if return_traces:
        return ss, traces + m.offset
    return ss


# --- solver specs ---

@dataclass(frozen=True)
class BruteForceSolver:
    name: str = "brute_force"

    def sample(self, q: qubo.QuboModel) -> SampleSet:
        return brute_force(q)


@dataclass(frozen=True)
class AnnealSolver:
    params: AnnealParams = AnnealParams()
    name: str = "anneal"

    def sample(self, q: qubo.QuboModel) -> SampleSet:
        ss = anneal(qubo.to_ising(q), self.params)
        for s in ss.samples:  # report QUBO-side energies (identical by transform)
            s.energy = q.energy(s.assignment)
        return ss


@dataclass(frozen=True)
class RemoteSolver:
    endpoint: str
    timeout: float = 30.0
    num_reads: int = 50
    name: str = "remote"

    def sample(self, q: qubo.QuboModel) -> SampleSet:
        return remote_sample(self.endpoint, q, num_reads=self.num_reads, timeout=self.timeout)


_VIOLATION_FAMILIES = {
    "illegal_edge": ("state_edge",),
    "min_on": ("min_on", "initial_hold"),
    "min_off": ("min_off", "initial_hold"),
    "power_when_not_on": ("power_gate_fc", "power_gate_el"),
    "power_bounds": ("power_gate_fc", "power_gate_el"),
    "soc_bounds": ("soc_min", "soc_max"),
    "hydrogen_bounds": ("h_min", "h_max"),
    "simultaneous_charge_discharge": ("batt_excl",),
    "batt_power_limit": ("batt_gate",),
}


def _validate_sample(model, sample: Sample):
    scenario = model.meta["scenario"]
    initial = model.meta["initial"]
    try:
        if model.stage == stage_models.DAY_AHEAD:
            schedule = stage_models.decode_day_ahead(sample.assignment, model)
            dispatch = stage_models.decode_day_ahead_dispatch(sample.assignment, model)
        else:
            schedule = model.meta["commitments"]
            dispatch = stage_models.decode_short_term(sample.assignment, model)
    except InvalidOneHot:
        sample.feasible = False
        sample.violations = ["one_hot"]
        return
    violations = plant.check_feasibility(schedule, dispatch, scenario, initial)
    hard = [v for v in violations if v.constraint_id in _VIOLATION_FAMILIES]
    sample.feasible = not hard
    sample.violations = sorted({v.constraint_id for v in hard})


def solve(model: stage_models.ConstrainedModel, solver):
    """Compile -> sample -> validate, doubling the penalties of violated
    families on failure, up to MAX_PENALTY_ROUNDS.

    Returns (best feasible assignment, SampleSet, rounds). Raises
    NoFeasibleSample (with the least-violating sample attached) if every
    round fails.
    """
    penalties = qubo.auto_penalty(model)
    least_bad = None
    last_set = None
    for rounds in range(1, MAX_PENALTY_ROUNDS + 1):
        q = qubo.compile(model, penalties)
        sampleset = solver.sample(q)
        # energy audit against independent recomputation
        for s in sampleset.samples:
            recomputed = q.energy(s.assignment)
            if abs(recomputed - s.energy) > ENERGY_AUDIT_TOL * max(1.0, abs(recomputed)):
                raise EnergyMismatch(f"sample energy {s.energy} != recomputed {recomputed}")
            _validate_sample(model, s)
        # deterministic greedy warm start keeps large instances solvable
        # when the sampler cannot reach exact feasibility
        x_seed = qubo.extend_assignment(q, stage_models.seed_assignment(model))
        seed = Sample(x_seed, q.energy(x_seed))
        _validate_sample(model, seed)
        sampleset.samples.append(seed)
        sampleset.rerank()
        last_set = sampleset
        if sampleset.best.feasible:
            return sampleset.best.assignment, sampleset, rounds
        for s in sampleset.samples:
            if least_bad is None or len(s.violations) < len(least_bad.violations):
                least_bad = s
        violated = {fam for s in sampleset.samples for v in s.violations for fam in _VIOLATION_FAMILIES.get(v, ())}
        if any("one_hot" in s.violations for s in sampleset.samples):
            violated |= {"one_hot_fc", "one_hot_el"}
        violated = sorted(violated)
        bumped = False
        for fam in violated:
            if fam in penalties:
                penalties[fam] *= 2.0
                bumped = True
        if not bumped:
            break
    raise NoFeasibleSample(
        f"no feasible sample after {MAX_PENALTY_ROUNDS} rounds",
        best_sample=least_bad if least_bad is not None else (last_set.best if last_set else None),
        violated_families=least_bad.violations if least_bad is not None else (),
    )


# --- remote sampler protocol ---

def qubo_to_wire(q: qubo.QuboModel, num_reads: int) -> dict:
    return {
        "n": q.n,
        "offset": q.offset,
        "terms": [[int(i), int(j), float(v)] for (i, j), v in sorted(q.coefficients.items())],
        "num_reads": int(num_reads),
    }


def remote_sample(endpoint: str, q: qubo.QuboModel, num_reads: int = 50, timeout: float = 30.0) -> SampleSet:
    """POST the QUBO to <endpoint>/v1/sample and audit the response
    energies against local recomputation."""
    import requests

    t0 = time.perf_counter()
    url = endpoint.rstrip("/") + "/v1/sample"
    try:
        resp = requests.post(url, json=qubo_to_wire(q, num_reads), timeout=timeout)
    except requests.RequestException as exc:
        raise RemoteUnavailable(f"{url}: {exc}") from exc
    if resp.status_code != 200:
        raise ProtocolError(f"{url}: HTTP {resp.status_code}")
    try:
        body = resp.json()
        raw = body["samples"]
        solver_name = str(body.get("solver", "remote"))
        samples = []
        for rec in raw:
            x = np.asarray(rec["assignment"], np.int8)
            e = float(rec["energy"])
            samples.append(Sample(x, e))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed response: {exc}") from exc
    if not samples:
        raise ProtocolError("empty sample list")
    for s in samples:
        if s.assignment.shape[0] != q.n:
            raise ProtocolError(f"assignment length {s.assignment.shape[0]} != {q.n}")
        local = q.energy(s.assignment)
        if abs(local - s.energy) > 1e-6 * max(1.0, abs(local)):
            raise EnergyMismatch(f"remote energy {s.energy} vs local {local}")
    ss = SampleSet(samples, solver_name, time.perf_counter() - t0)
    ss.rerank()
    return ss


class _LoopbackHandler(BaseHTTPRequestHandler):
    anneal_params = AnnealParams(n_sweeps=200, n_restarts=8)
    tamper_energy = False  # test hook: corrupt reported energies

    def log_message(self, fmt, *args):  # quiet
        pass

    def do_POST(self):
        if self.path != "/v1/sample":
            self.send_error(404)
            return
        try:
            length = int(self.headers["Content-Length"])
            body = json.loads(self.rfile.read(length))
            n = int(body["n"])
            coeffs = {(int(i), int(j)): float(v) for i, j, v in body["terms"]}
            q = qubo.QuboModel(n, coeffs, float(body["offset"]), registry=[None] * n)
            params = replace(self.anneal_params, n_restarts=int(body.get("num_reads", 8)))
            ss = AnnealSolver(params).sample(q)
            out = {
                "solver": "loopback-anneal",
                "samples": [
                    {
                        "assignment": [int(v) for v in s.assignment],
                        "energy": s.energy + (1.0 if self.tamper_energy else 0.0),
                    }
                    for s in ss.samples
                ],
            }
            payload = json.dumps(out).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)
        except Exception as exc:  # protocol surface: report, do not crash the server
            self.send_error(500, str(exc))


def start_loopback_server(anneal_params: AnnealParams | None = None, tamper_energy: bool = False):
    """Spin up the reference sampler on an ephemeral port.

    Returns (server, base_url); call server.shutdown() when done.
    """
    handler = type(
        "Handler",
        (_LoopbackHandler,),
        {
            "anneal_params": anneal_params or _LoopbackHandler.anneal_params,
            "tamper_energy": tamper_energy,
        },
    )
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, f"http://127.0.0.1:{server.server_address[1]}"
