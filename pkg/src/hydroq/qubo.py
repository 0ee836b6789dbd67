"""Penalty compilation of constrained models into QUBO form, plus the
exact affine transform to the Ising spin model.

Compilation strategy per hard constraint:
  * equality -> penalty * (expr - bound)^2;
  * x + y <= 1 and x - y <= 0 over binaries -> exact product penalties
    (x*y, x*(1-y)) with no slack variables;
  * other inequalities whose coefficients share a common quantum are
    rescaled to integers, the bound tightened to the lattice, and a
    minimal binary slack appended -> the smallest possible violation of
    the scaled constraint is 1, which is what makes the auto penalty a
    dominance guarantee;
  * inequalities with no usable common quantum fall back to a slack grid
    of range/(2^slack_bits - 1) (resolution documented, adaptive penalty
    rounds pick up any shortfall).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch, MissingPenalty, Overflow
from .stage_models import ConstrainedModel, VariableId

COEFF_LIMIT = 1e12
MIN_PENALTY = 1.0
DOMINANCE_FACTOR = 2.0
MAX_INT_SLACK_BITS = 12


@dataclass
class QuboModel:
    """Sparse upper-triangular QUBO; diagonal entries are the linear
    coefficients (x^2 = x already folded)."""

    n: int
    coefficients: dict            # (i, j) with i <= j -> float
    offset: float
    registry: list                # VariableId per index (slacks appended)
    penalty_weights: dict = field(default_factory=dict)
    slack_groups: list = field(default_factory=list)  # per-inequality slack metadata

    def energy(self, x) -> float:
        return energy(self, x)

    def to_text(self) -> str:
        lines = [f"{self.n} {self.offset!r}"]
        for (i, j), v in sorted(self.coefficients.items()):
            lines.append(f"{i} {j} {v!r}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "QuboModel":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        head = lines[0].split()
        n, offset = int(head[0]), float(head[1])
        coeffs = {}
        for ln in lines[1:]:
            i, j, v = ln.split()
            coeffs[(int(i), int(j))] = float(v)
        return QuboModel(n, coeffs, offset, registry=[None] * n)


@dataclass
class IsingModel:
    h: np.ndarray                 # per-spin fields
    j: dict                       # (i, j) with i < j -> coupling
    offset: float

    @property
    def n(self) -> int:
        return self.h.shape[0]


def energy(q: QuboModel, x) -> float:
    x = np.asarray(x, float)
    if x.shape[0] != q.n:
        raise LengthMismatch(f"assignment length {x.shape[0]} != {q.n}")
    val = q.offset
    for (i, j), c in q.coefficients.items():
        val += c * x[i] if i == j else c * x[i] * x[j]
    return val


def energies(q: QuboModel, xs: np.ndarray) -> np.ndarray:
    """Vectorized energies for a (m, n) batch of assignments."""
    xs = np.asarray(xs, float)
    lin = np.zeros(q.n)
    out = np.full(xs.shape[0], q.offset)
    for (i, j), c in q.coefficients.items():
        if i == j:
            lin[i] += c
        else:
            out += c * xs[:, i] * xs[:, j]
    out += xs @ lin
    return out


def ising_energy(m: IsingModel, s) -> float:
    s = np.asarray(s, float)
    if s.shape[0] != m.n:
        raise LengthMismatch(f"spin vector length {s.shape[0]} != {m.n}")
    val = m.offset + float(m.h @ s)
    for (i, j), c in m.j.items():
        val += c * s[i] * s[j]
    return val


def to_ising(q: QuboModel) -> IsingModel:
    """Exact change of variables x = (1 + s) / 2."""
    h = np.zeros(q.n)
    j = {}
    offset = q.offset
    for (a, b), c in q.coefficients.items():
        if a == b:
            h[a] += c / 2.0
            offset += c / 2.0
        else:
            j[(a, b)] = j.get((a, b), 0.0) + c / 4.0
            h[a] += c / 4.0
            h[b] += c / 4.0
            offset += c / 4.0
    return IsingModel(h, j, offset)


def objective_range_bound(model: ConstrainedModel) -> float:
    """Interval-arithmetic upper bound on the objective's spread over the
    binary box, soft constraint penalties included."""
    r = sum(abs(c) for c in model.lin_obj.values())
    r += sum(abs(c) for c in model.quad_obj.values())
    for con in model.constraints:
        if con.soft_weight is None:
            continue
        lo = float(np.minimum(con.coef, 0.0).sum()) - con.bound
        hi = float(np.maximum(con.coef, 0.0).sum()) - con.bound
        r += con.soft_weight * max(abs(lo), abs(hi)) ** 2
    return r


def auto_penalty(model: ConstrainedModel) -> dict:
    """One penalty per hard constraint family: dominance factor times the
    objective range bound, floored at MIN_PENALTY."""
    r = objective_range_bound(model)
    value = max(MIN_PENALTY, DOMINANCE_FACTOR * r)
    return {f: value for f in sorted({c.family for c in model.constraints if c.soft_weight is None})}


class _Builder:
    def __init__(self, model: ConstrainedModel):
        self.lin = dict(model.lin_obj)
        self.quad = dict(model.quad_obj)
        self.offset = model.obj_offset
        self.registry = list(model.variables)
        self.slack_groups = []

    def new_var(self, vid: VariableId) -> int:
        self.registry.append(vid)
        return len(self.registry) - 1

    def add_lin(self, i, c):
        if c != 0.0:
            self.lin[i] = self.lin.get(i, 0.0) + c

    def add_quad(self, i, j, c):
        if c == 0.0:
            return
        if i == j:
            self.add_lin(i, c)
            return
        key = (i, j) if i < j else (j, i)
        self.quad[key] = self.quad.get(key, 0.0) + c

    def add_square(self, items, const, weight):
        self.offset += weight * const * const
        entries = [(i, a) for i, a in items if a != 0.0]
        for k, (i, a) in enumerate(entries):
            self.add_lin(i, weight * (a * a + 2.0 * const * a))
            for j, b in entries[k + 1:]:
                self.add_quad(i, j, 2.0 * weight * a * b)

    def finish(self, penalties) -> QuboModel:
        coeffs = {}
        for i, c in self.lin.items():
            if c != 0.0:
                coeffs[(i, i)] = c
        for (i, j), c in self.quad.items():
            if c != 0.0:
                coeffs[(i, j)] = coeffs.get((i, j), 0.0) + c
        worst = max((abs(v) for v in coeffs.values()), default=0.0)
        if worst > COEFF_LIMIT:
            raise Overflow(f"coefficient magnitude {worst:.3g} exceeds {COEFF_LIMIT:.0e}; penalties mis-scaled")
        return QuboModel(
            len(self.registry), coeffs, self.offset, self.registry, dict(penalties), self.slack_groups
        )


def _common_quantum(coef: np.ndarray, bound: float):
    """Approximate common quantum of the coefficient magnitudes (float
    gcd with snapping); None if it collapses below resolution."""
    mags = np.abs(coef)
    tol = 1e-9 * float(mags.max())
    g = float(mags[0])
    for a in mags[1:]:
        a = float(a)
        while a > tol:
            g, a = a, math.fmod(g, a)
            if a < tol:
                break
        if g < tol:
            return None
    ratios = mags / g
    if np.allclose(ratios, np.round(ratios), rtol=0.0, atol=1e-6):
        return g
    return None


def _slack_weights(range_int: int):
    """Binary expansion with adjusted top weight so every integer in
    [0, range_int] is representable and range_int is the max."""
    if range_int <= 0:
        return []
    bits = max(1, math.ceil(math.log2(range_int + 1)))
    weights = [1 << b for b in range(bits - 1)]
    weights.append(range_int - ((1 << (bits - 1)) - 1))
    return weights


def compile(model: ConstrainedModel, penalties: dict) -> QuboModel:
    """Fold every constraint of a stage model into an unconstrained
    quadratic binary objective."""
    hard_families = {c.family for c in model.constraints if c.soft_weight is None}
    missing = hard_families - set(penalties)
    if missing:
        raise MissingPenalty(f"no penalty weight for families: {sorted(missing)}")
    for fam in hard_families:
        if penalties[fam] <= 0.0:
            raise MissingPenalty(f"penalty for {fam} must be > 0")

    b = _Builder(model)
    slack_bits = model.meta["scenario"].slack_bits if "scenario" in model.meta else 4
    stage = model.stage

    for ci, con in enumerate(model.constraints):
        items = list(zip((int(i) for i in con.idx), (float(a) for a in con.coef)))
        if con.soft_weight is not None:
            b.add_square(items, -con.bound, con.soft_weight)
            continue
        p = penalties[con.family]
        if con.sense == "eq":
            b.add_square(items, -con.bound, p)
            continue

        # -- inequalities --
        coef = con.coef
        if len(items) == 2 and con.bound == 1.0 and np.array_equal(coef, [1.0, 1.0]):
            b.add_quad(items[0][0], items[1][0], p)  # x + y <= 1  ->  p*x*y
            continue
        if len(items) == 2 and con.bound == 0.0 and sorted(coef.tolist()) == [-1.0, 1.0]:
            (i_pos, _), (i_neg, _) = (items if items[0][1] > 0 else items[::-1])
            b.add_lin(i_pos, p)                      # x - y <= 0  ->  p*x*(1-y)
            b.add_quad(i_pos, i_neg, -p)
            continue
        if len(items) == 1:
            i, a = items[0]
            # single binary: vacuous, forced 0, or forced 1
            if a > 0 and a > con.bound + 1e-12:
                b.add_lin(i, p)                      # x must stay 0
            elif a < 0 and con.bound < -1e-12:
                b.offset += p                        # x must be 1
                b.add_lin(i, -p)
            continue

        expr_min = float(np.minimum(coef, 0.0).sum())
        expr_max = float(np.maximum(coef, 0.0).sum())
        if expr_max <= con.bound + 1e-12:
            continue  # vacuous

        u = _common_quantum(coef, con.bound)
        use_int = False
        if u is not None:
            b_int = math.floor(con.bound / u + 1e-9)
            rng = b_int - round(expr_min / u)
            if rng >= 0 and (rng == 0 or math.ceil(math.log2(rng + 1)) <= MAX_INT_SLACK_BITS):
                use_int = True
        if use_int:
            scaled = [(i, round(a / u)) for i, a in items]
            sq = list(scaled)
            slack = []
            for k, w in enumerate(_slack_weights(rng)):
                idx = b.new_var(
                    VariableId(stage, -1, ci, "slack_bit", bit=k, tag=(con.family,) + tuple(con.label))
                )
                sq.append((idx, float(w)))
                slack.append((idx, float(w)))
            b.add_square(sq, -float(b_int), p)
            b.slack_groups.append({"items": scaled, "bound": float(b_int), "slack": slack})
        else:
            rng_cont = con.bound - expr_min
            step = rng_cont / ((1 << slack_bits) - 1)
            sq = list(items)
            slack = []
            for k in range(slack_bits):
                idx = b.new_var(
                    VariableId(stage, -1, ci, "slack_bit", bit=k, tag=(con.family,) + tuple(con.label))
                )
                sq.append((idx, step * (1 << k)))
                slack.append((idx, step * (1 << k)))
            b.add_square(sq, -con.bound, p)
            b.slack_groups.append({"items": items, "bound": con.bound, "slack": slack})

    return b.finish(penalties)


def extend_assignment(q: QuboModel, x_model) -> np.ndarray:
    """Extend a model-level binary assignment over the compiled slack
    bits, choosing each inequality's slack greedily so its penalty term
    is as close to zero as the bit grid allows."""
    x_model = np.asarray(x_model, float)
    x = np.zeros(q.n, np.int8)
    x[: x_model.shape[0]] = np.round(x_model).astype(np.int8)
    for grp in q.slack_groups:
        residual = grp["bound"] - sum(a * x[i] for i, a in grp["items"])
        for idx, w in sorted(grp["slack"], key=lambda t: -t[1]):
            if w <= residual + 1e-9:
                x[idx] = 1
                residual -= w
    return x
