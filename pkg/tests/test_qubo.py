import numpy as np
import pytest

from hydroq import qubo
from hydroq.errors import LengthMismatch, MissingPenalty, Overflow
from hydroq.stage_models import ConstrainedModel


def all_bits(n):
    return ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(float)


def make_model(n=3, stage="day_ahead"):
    m = ConstrainedModel(stage=stage)
    for i in range(n):
        m.add_var(None)
    return m


def test_energy_hand_example():
    q = qubo.QuboModel(2, {(0, 0): 1.0, (0, 1): 2.0, (1, 1): 3.0}, 0.0, registry=[None, None])
    assert q.energy([1, 1]) == 6.0
    assert q.energy([0, 0]) == 0.0
    with pytest.raises(LengthMismatch):
        q.energy([1])


def test_energies_vectorized_matches_scalar():
    rng = np.random.default_rng(0)
    coeffs = {(i, i): float(rng.normal()) for i in range(6)}
    coeffs.update({(i, j): float(rng.normal()) for i in range(6) for j in range(i + 1, 6)})
    q = qubo.QuboModel(6, coeffs, 0.5, registry=[None] * 6)
    xs = all_bits(6)
    vec = qubo.energies(q, xs)
    for k in range(xs.shape[0]):
        assert abs(vec[k] - q.energy(xs[k])) < 1e-12


def test_one_hot_penalty_expansion():
    """alpha*(x0+x1+x2-1)^2 -> -alpha diagonal, +2*alpha pairwise, +alpha offset."""
    m = make_model(3)
    m.add_constraint("one_hot_fc", "eq", [(0, 1.0), (1, 1.0), (2, 1.0)], 1.0)
    q = qubo.compile(m, {"one_hot_fc": 2.0})
    assert q.offset == 2.0
    for i in range(3):
        assert q.coefficients[(i, i)] == -2.0
    for pair in ((0, 1), (0, 2), (1, 2)):
        assert q.coefficients[pair] == 4.0
    # minima exactly at the three one-hot points, energy 0
    e = qubo.energies(q, all_bits(3))
    assert np.isclose(e.min(), 0.0)
    assert set(np.where(np.isclose(e, 0.0))[0]) == {1, 2, 4}


def test_empty_constraints_is_bare_objective():
    m = make_model(2)
    m.add_lin(0, 1.5)
    m.add_quad(0, 1, -2.0)
    m.obj_offset = 0.25
    q = qubo.compile(m, {})
    for x in all_bits(2):
        assert abs(q.energy(x) - (0.25 + 1.5 * x[0] - 2.0 * x[0] * x[1])) < 1e-12


def test_feasible_point_energy_equals_objective():
    m = make_model(3)
    m.add_lin(0, 2.0)
    m.add_constraint("one_hot_fc", "eq", [(0, 1.0), (1, 1.0), (2, 1.0)], 1.0)
    m.add_constraint("gate", "le", [(1, 1.0), (2, 1.0)], 1.0)
    q = qubo.compile(m, {"one_hot_fc": 50.0, "gate": 50.0})
    x = np.array([1.0, 0.0, 0.0])
    assert abs(q.energy(qubo.extend_assignment(q, x)) - m.objective_value(x)) < 1e-12


def test_product_form_inequalities_exact():
    # x + y <= 1 and x - y <= 0 must penalize exactly their violations
    m = make_model(2)
    m.add_constraint("excl", "le", [(0, 1.0), (1, 1.0)], 1.0)
    q = qubo.compile(m, {"excl": 3.0})
    assert q.n == 2  # no slack variables
    assert q.energy([1, 1]) == 3.0 and q.energy([1, 0]) == 0.0

    m = make_model(2)
    m.add_constraint("gate", "le", [(0, 1.0), (1, -1.0)], 0.0)
    q = qubo.compile(m, {"gate": 3.0})
    assert q.n == 2
    assert q.energy([1, 0]) == 3.0
    assert q.energy([1, 1]) == 0.0 and q.energy([0, 0]) == 0.0


def test_single_variable_inequalities():
    m = make_model(1)
    m.add_constraint("force0", "le", [(0, 1.0)], 0.0)
    q = qubo.compile(m, {"force0": 5.0})
    assert q.energy([1]) == 5.0 and q.energy([0]) == 0.0

    m = make_model(1)
    m.add_constraint("force1", "le", [(0, -1.0)], -1.0)
    q = qubo.compile(m, {"force1": 5.0})
    assert q.energy([0]) == 5.0 and abs(q.energy([1])) < 1e-12


def test_integer_slack_inequality_zero_on_feasible():
    # 2x0 + 3x1 <= 4: feasible points must reach penalty zero via slack
    m = make_model(2)
    m.add_constraint("cap", "le", [(0, 2.0), (1, 3.0)], 4.0)
    q = qubo.compile(m, {"cap": 10.0})
    assert q.n > 2
    bits = all_bits(q.n)
    e = qubo.energies(q, bits)
    for x0, x1 in ((0, 0), (1, 0), (0, 1)):
        sub = bits[(bits[:, 0] == x0) & (bits[:, 1] == x1)]
        assert np.isclose(qubo.energies(q, sub).min(), 0.0, atol=1e-9)
    sub = bits[(bits[:, 0] == 1) & (bits[:, 1] == 1)]
    assert qubo.energies(q, sub).min() >= 10.0 - 1e-9  # violation of 1 unit


def test_missing_penalty_raises():
    m = make_model(2)
    m.add_constraint("one_hot_fc", "eq", [(0, 1.0), (1, 1.0)], 1.0)
    with pytest.raises(MissingPenalty):
        qubo.compile(m, {})
    with pytest.raises(MissingPenalty):
        qubo.compile(m, {"one_hot_fc": 0.0})


def test_overflow_guard():
    m = make_model(1)
    m.add_constraint("big", "eq", [(0, 1.0)], 1.0)
    with pytest.raises(Overflow):
        qubo.compile(m, {"big": 1e13})


def test_compile_deterministic():
    m = make_model(3)
    m.add_lin(0, 0.5)
    m.add_constraint("one_hot_fc", "eq", [(0, 1.0), (1, 1.0), (2, 1.0)], 1.0)
    m.add_constraint("cap", "le", [(0, 2.0), (1, 3.0)], 4.0)
    q1 = qubo.compile(m, {"one_hot_fc": 9.0, "cap": 9.0})
    q2 = qubo.compile(m, {"one_hot_fc": 9.0, "cap": 9.0})
    assert q1.coefficients == q2.coefficients and q1.offset == q2.offset


def test_to_ising_single_variable():
    q = qubo.QuboModel(1, {(0, 0): 3.0}, 0.0, registry=[None])
    m = qubo.to_ising(q)
    assert m.h[0] == 1.5 and m.offset == 1.5
    assert qubo.ising_energy(m, [-1]) == 0.0
    assert qubo.ising_energy(m, [1]) == 3.0


def test_to_ising_zero():
    q = qubo.QuboModel(2, {}, 0.0, registry=[None, None])
    m = qubo.to_ising(q)
    assert np.all(m.h == 0.0) and m.j == {} and m.offset == 0.0


def test_to_ising_exhaustive_equivalence():
    rng = np.random.default_rng(1)
    n = 10
    coeffs = {(i, i): float(rng.normal()) for i in range(n)}
    coeffs.update({(i, j): float(rng.normal()) for i in range(n) for j in range(i + 1, n)})
    q = qubo.QuboModel(n, coeffs, float(rng.normal()), registry=[None] * n)
    m = qubo.to_ising(q)
    worst = 0.0
    for x in all_bits(n):
        s = 2 * x - 1
        worst = max(worst, abs(q.energy(x) - qubo.ising_energy(m, s)))
    assert worst < 1e-12


def test_auto_penalty_properties():
    m = make_model(2)
    m.add_lin(0, 4.0)
    m.add_lin(1, -6.0)
    m.add_constraint("fam", "eq", [(0, 1.0)], 1.0)
    p = qubo.auto_penalty(m)
    assert p == {"fam": 20.0}  # 2 * (|4| + |6|)

    # homogeneity: doubling objective coefficients doubles the penalty
    m2 = make_model(2)
    m2.add_lin(0, 8.0)
    m2.add_lin(1, -12.0)
    m2.add_constraint("fam", "eq", [(0, 1.0)], 1.0)
    assert qubo.auto_penalty(m2)["fam"] == 40.0

    # zero objective floors at 1.0
    m3 = make_model(1)
    m3.add_constraint("fam", "eq", [(0, 1.0)], 1.0)
    assert qubo.auto_penalty(m3)["fam"] == 1.0


def test_text_round_trip():
    q = qubo.QuboModel(3, {(0, 0): 1.25, (0, 2): -0.5}, 0.75, registry=[None] * 3)
    back = qubo.QuboModel.from_text(q.to_text())
    assert back.n == q.n and back.offset == q.offset
    assert back.coefficients == q.coefficients
