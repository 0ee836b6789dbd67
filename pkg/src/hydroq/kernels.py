"""Hot numeric kernels: Metropolis annealing sweeps and brute-force scans.

Compiled with numba by default; set HYDROQ_NO_NUMBA=1 to force the pure
numpy/python fallback path. Both paths share one splitmix64 generator
(kept in a 2-element uint64 workspace so integer wraparound is silent on
numpy) and produce bit-identical results.
"""

import os

import numpy as np


def numba_requested() -> bool:
    return os.environ.get("HYDROQ_NO_NUMBA", "").lower() not in ("1", "true", "yes")


def _numba_available() -> bool:
    if not numba_requested():
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _numba_available()

_G = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


def _rng_u64(rs):
    # splitmix64 step; rs[0] is the counter state, rs[1] scratch
    rs[0:1] += _G
    rs[1:2] = rs[0:1]
    rs[1:2] ^= rs[1:2] >> _S30
    rs[1:2] *= _C1
    rs[1:2] ^= rs[1:2] >> _S27
    rs[1:2] *= _C2
    rs[1:2] ^= rs[1:2] >> _S31
    return rs[1]


def _rng_uniform(rs):
    return (_rng_u64(rs) >> _S11) * _INV53


def _anneal_chain_impl(h, indptr, indices, data, betas, seed, best_spins, trace):
    """One Metropolis chain over an Ising model in symmetric CSR form.

    Writes the best-so-far spin configuration into best_spins and, when
    trace is non-empty, the best energy after each sweep. Returns the best
    energy (field/offset-free: caller adds the model offset).
    """
    n = h.shape[0]
    rs = np.empty(2, np.uint64)
    rs[0] = seed
    rs[1] = 0

    spins = np.empty(n, np.int8)
    for i in range(n):
        if _rng_uniform(rs) < 0.5:
            spins[i] = -1
        else:
            spins[i] = 1

    # local fields f_i = h_i + sum_j J_ij s_j
    f = h.copy()
    for i in range(n):
        si = spins[i]
        for k in range(indptr[i], indptr[i + 1]):
            f[indices[k]] += data[k] * si

    e = 0.0
    for i in range(n):
        e += h[i] * spins[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j > i:
                e += data[k] * spins[i] * spins[j]

    best = e
    for i in range(n):
        best_spins[i] = spins[i]

    n_sweeps = betas.shape[0]
    for sw in range(n_sweeps):
        beta = betas[sw]
        for i in range(n):
            de = -2.0 * spins[i] * f[i]
            if de <= 0.0 or _rng_uniform(rs) < np.exp(-beta * de):
                s_new = -spins[i]
                spins[i] = s_new
                step = 2.0 * s_new
                for k in range(indptr[i], indptr[i + 1]):
                    f[indices[k]] += step * data[k]
                e += de
                if e < best:
                    best = e
                    for m in range(n):
                        best_spins[m] = spins[m]
        if trace.shape[0] > 0:
            trace[sw] = best
    return best


def _brute_scan_impl(lin, qsym, offset, tol, cand, flags):
    """Gray-code scan of all 2^n binary assignments of a QUBO.

    lin holds the diagonal (linear) coefficients, qsym the symmetrized
    off-diagonal couplings (qsym[i, i] == 0). Candidate codes with energy
    within tol of the running best are appended to cand (gray values whose
    bit pattern IS the assignment); flags[0] returns the candidate count,
    flags[1] is set to 1 if the buffer overflowed (best code always kept
    in cand[0]). Returns the best accumulated energy.
    """
    n = lin.shape[0]
    cap = cand.shape[0]
    x = np.zeros(n, np.int8)
    e = offset
    best = e
    best_code = np.int64(0)
    cand[0] = 0
    ncand = 1
    overflow = 0
    total = np.int64(1) << np.int64(n)
    code = np.int64(0)
    for m in range(1, total):
        k = 0
        mm = m
        while mm & 1 == 0:
            mm >>= 1
            k += 1
        acc = lin[k]
        for j in range(n):
            if x[j] != 0:
                acc += qsym[k, j]
        if x[k] != 0:
            x[k] = 0
            e -= acc
        else:
            x[k] = 1
            e += acc
        code ^= np.int64(1) << np.int64(k)
        if e < best:
            best = e
            best_code = code
        if e <= best + tol:
            if ncand < cap:
                cand[ncand] = code
                ncand += 1
            else:
                overflow = 1
    cand[0] = best_code
    flags[0] = ncand
    flags[1] = overflow
    return best


if USE_NUMBA:
    from numba import njit

    _jit = njit(cache=True, nogil=True)
    _rng_u64 = _jit(_rng_u64)
    _rng_uniform = _jit(_rng_uniform)
    anneal_chain = _jit(_anneal_chain_impl)
    brute_scan = _jit(_brute_scan_impl)
else:
    anneal_chain = _anneal_chain_impl
    brute_scan = _brute_scan_impl


def brute_scan_numpy(lin, qsym, offset, tol, block=1 << 16):
    """Vectorized fallback enumeration; same contract as brute_scan minus
    the preallocated buffers. Returns (best_energy, candidate_codes)."""
    n = lin.shape[0]
    qupper = np.triu(qsym)  # strict upper half of the symmetric couplings
    total = 1 << n
    bit_cols = np.arange(n, dtype=np.int64)
    best = np.inf
    cands = []
    for start in range(0, total, block):
        codes = np.arange(start, min(start + block, total), dtype=np.int64)
        bits = ((codes[:, None] >> bit_cols) & 1).astype(np.float64)
        e = bits @ lin + np.einsum("ij,ij->i", bits @ qupper, bits) + offset
        lo = e.min()
        if lo < best:
            best = lo
        keep = e <= best + tol
        if keep.any():
            # caller re-evaluates candidates exactly and re-filters
            cands.append(codes[keep])
    codes = np.concatenate(cands) if cands else np.zeros(1, np.int64)
    return best, codes


def derive_seed(base: int, index: int) -> int:
    """Stable per-restart seed stream (splitmix64 over python ints)."""
    mask = 0xFFFFFFFFFFFFFFFF
    z = (base + (index + 1) * 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return (z ^ (z >> 31)) & mask


def geometric_betas(beta0: float, beta1: float, n_sweeps: int) -> np.ndarray:
    if n_sweeps == 1:
        return np.array([beta1])
    return beta0 * (beta1 / beta0) ** (np.arange(n_sweeps) / (n_sweeps - 1))


def linear_betas(beta0: float, beta1: float, n_sweeps: int) -> np.ndarray:
    return np.linspace(beta0, beta1, n_sweeps)
