import numpy as np
import pytest

from hydroq import plant, qubo, scenario as sc, solvers, stage_models as sm
from hydroq.errors import InvalidOneHot, LengthMismatch
from hydroq.plant import Mode
from tests.conftest import make_full_scenario, make_tiny_scenario


def day_ahead_model(scenario):
    fc = sm.make_forecast(scenario, 0, scenario.day_ahead_step_s, scenario.day_ahead_horizon)
    return sm.build_day_ahead(scenario, fc, plant.initial_state(scenario))


def short_term_model(scenario, schedule, start_slot=0):
    horizon = scenario.short_term_horizon
    fc = sm.make_forecast(scenario, start_slot, scenario.short_term_step_s, horizon)
    return sm.build_short_term(scenario, schedule, fc, plant.initial_state(scenario))


def test_day_ahead_var_count_formula():
    # FC-only: (3 modes + B power bits) per unit per hour per household
    s = make_tiny_scenario()
    assert sm.day_ahead_var_count(s) == 1 * 3 * (3 + 2)
    full = make_full_scenario()
    per = 2 * (3 + full.power_bits) + 2 + 2 * full.power_bits
    assert sm.day_ahead_var_count(full) == full.n_households * 24 * per


def test_build_day_ahead_matches_var_count(tiny_scenario, full_scenario):
    for s in (tiny_scenario, full_scenario):
        assert day_ahead_model(s).n_vars == sm.day_ahead_var_count(s)


def test_decode_day_ahead_round_trip(tiny_scenario):
    model = day_ahead_model(tiny_scenario)
    x = sm.seed_assignment(model)
    sched = sm.decode_day_ahead(x, model)
    assert sched.fc_modes.shape == (3, 1)
    # re-encode by hand and compare: one-hot triple per (unit, household, hour)
    for t in range(3):
        trip = model.meta["state"][("fc", 0, t)]
        vals = [int(x[i]) for i in trip]
        assert sum(vals) == 1
        assert int(sched.fc_modes[t, 0]) == int((Mode.ON, Mode.STANDBY, Mode.OFF)[vals.index(1)])


def test_decode_rejects_broken_one_hot(tiny_scenario):
    model = day_ahead_model(tiny_scenario)
    x = sm.seed_assignment(model)
    trip = model.meta["state"][("fc", 0, 0)]
    x[list(trip)] = 1  # all three states at once
    with pytest.raises(InvalidOneHot):
        sm.decode_day_ahead(x, model)
    with pytest.raises(LengthMismatch):
        sm.decode_day_ahead(x[:3], model)


def test_day_ahead_dispatch_balance_identity(tiny_scenario):
    model = day_ahead_model(tiny_scenario)
    x = sm.seed_assignment(model)
    dispatch = sm.decode_day_ahead_dispatch(x, model)
    fc = model.meta["forecast"]
    residual = (fc.pv[:, None] + fc.wt[:, None] + dispatch.fc_power - dispatch.el_power
                + dispatch.p_dis - dispatch.p_ch - fc.loads + dispatch.unmet - dispatch.curtail)
    assert np.allclose(residual, 0.0, atol=1e-9)
    assert np.all(dispatch.unmet >= 0.0) and np.all(dispatch.curtail >= 0.0)
    assert np.all((dispatch.unmet == 0.0) | (dispatch.curtail == 0.0))


def test_objective_value_matches_compiled_energy(tiny_scenario):
    model = day_ahead_model(tiny_scenario)
    q = qubo.compile(model, qubo.auto_penalty(model))
    x = qubo.extend_assignment(q, sm.seed_assignment(model))
    # feasible point: all penalties vanish, QUBO energy equals the objective
    assert abs(q.energy(x) - model.objective_value(x[: model.n_vars])) < 1e-6


def test_fluctuation_weight_smooths_short_term(full_scenario):
    """Raising w_fluct must not increase the total power ramp of the plan."""
    n = full_scenario.n_households
    fc_modes = np.full((24, n), int(Mode.ON), np.int8)
    fc_modes[0] = int(Mode.STANDBY)  # legal ramp-in from the initial Off state
    sched = sm.CommitmentSchedule(0, fc_modes, np.full((24, n), int(Mode.OFF), np.int8))

    def total_ramp(w):
        s = full_scenario
        costs = sc.CostParams(w_fluct=w)
        s = sc.Scenario(**{**{f: getattr(s, f) for f in s.__dataclass_fields__}, "costs": costs})
        model = short_term_model(s, sched)
        x, _, _ = solvers.solve(model, solvers.AnnealSolver(
            solvers.AnnealParams(n_sweeps=400, n_restarts=12, seed=5)))
        plan = sm.decode_short_term(x, model)
        return float(np.abs(np.diff(plan.fc_power, axis=0)).sum())

    assert total_ramp(50.0) <= total_ramp(0.0) + 1e-9


def test_short_term_decode_respects_commitments(full_scenario):
    n = full_scenario.n_households
    fc_modes = np.full((24, n), int(Mode.OFF), np.int8)
    sched = sm.CommitmentSchedule(0, fc_modes, np.full((24, n), int(Mode.OFF), np.int8))
    model = short_term_model(full_scenario, sched)
    x = sm.seed_assignment(model)
    plan = sm.decode_short_term(x, model)
    assert np.all(plan.fc_power == 0.0)  # Off commitment pins power at zero
    assert np.all(plan.el_power == 0.0)


def test_seed_assignment_feasible_across_seeds():
    for seed in range(5):
        s = make_full_scenario(seed=seed)
        model = day_ahead_model(s)
        x = sm.seed_assignment(model)
        sched = sm.decode_day_ahead(x, model)
        dispatch = sm.decode_day_ahead_dispatch(x, model)
        assert plant.check_feasibility(sched, dispatch, s, plant.initial_state(s)) == []


def test_dump_model_mentions_every_family(tiny_scenario):
    model = day_ahead_model(tiny_scenario)
    text = sm.dump_model(model)
    for fam in {c.family for c in model.constraints}:
        assert fam in text
    assert str(model.n_vars) in text
