import numpy as np
import pytest

from hydroq import mpc, plant, solvers, stage_models as sm
from tests.conftest import make_full_scenario


def quick_solver():
    return solvers.AnnealSolver(solvers.AnnealParams(n_sweeps=200, n_restarts=4, seed=0))


@pytest.fixture(scope="module")
def one_day_log():
    return mpc.run_closed_loop(make_full_scenario(), 1, quick_solver())


def test_closed_loop_shape_and_bounds(one_day_log):
    s = one_day_log.scenario
    assert len(one_day_log.steps) == 96
    assert len(one_day_log.schedules) == 1
    d = s.device
    for r in one_day_log.steps:
        assert np.all(r.soc >= d.soc_min - 1e-9) and np.all(r.soc <= d.soc_max + 1e-9)
        assert d.h_min - 1e-9 <= r.hydrogen <= d.h_max + 1e-9
        assert np.all(r.unmet >= 0.0) and np.all(r.curtail >= 0.0)
        assert np.max(np.abs(r.residual)) < 1e-6


def test_closed_loop_deterministic():
    a = mpc.run_closed_loop(make_full_scenario(), 1, quick_solver())
    b = mpc.run_closed_loop(make_full_scenario(), 1, quick_solver())
    sa, sb = a.summary(), b.summary()
    for k in ("day_ahead_solve_s", "short_term_solve_s"):  # wall time varies
        sa.pop(k), sb.pop(k)
    assert sa == sb
    for ra, rb in zip(a.steps, b.steps):
        assert np.array_equal(ra.soc, rb.soc) and ra.hydrogen == rb.hydrogen


def test_trajectory_round_trip_and_replay(one_day_log, tmp_path):
    path = tmp_path / "traj.csv"
    mpc.write_trajectory_csv(one_day_log, str(path))
    rows = mpc.read_trajectory_csv(str(path), one_day_log.scenario.n_households)
    assert len(rows) == len(one_day_log.steps)
    assert rows[0]["slot"] == one_day_log.steps[0].slot
    assert mpc.replay_violations(rows, one_day_log.scenario) == []


def test_trajectory_csv_byte_identical(one_day_log, tmp_path):
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    mpc.write_trajectory_csv(one_day_log, str(p1))
    mpc.write_trajectory_csv(one_day_log, str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_replay_flags_corruption(one_day_log, tmp_path):
    path = tmp_path / "traj.csv"
    mpc.write_trajectory_csv(one_day_log, str(path))
    rows = mpc.read_trajectory_csv(str(path), one_day_log.scenario.n_households)
    rows[10]["soc"][0] += 0.05
    ids = {v.constraint_id for v in mpc.replay_violations(rows, one_day_log.scenario)}
    assert "replay_soc" in ids


def test_read_trajectory_rejects_wrong_width(one_day_log, tmp_path):
    path = tmp_path / "traj.csv"
    mpc.write_trajectory_csv(one_day_log, str(path))
    with pytest.raises(ValueError):
        mpc.read_trajectory_csv(str(path), one_day_log.scenario.n_households + 1)


def test_summary_keys(one_day_log):
    s = one_day_log.summary()
    for key in ("days", "steps", "total_cost", "total_unmet_kwh", "soc_min",
                "hydrogen_max", "max_abs_residual", "guard_events"):
        assert key in s
    assert s["days"] == 1 and s["steps"] == 96
    assert s["total_cost"] >= 0.0


def test_day_ahead_stage_fallback_holds_previous():
    s = make_full_scenario()
    state = plant.initial_state(s)
    fc = sm.make_forecast(s, 0, s.day_ahead_step_s, s.day_ahead_horizon)

    class FailingSolver:
        name = "failing"

        def sample(self, q):
            raise solvers.NoFeasibleSample("forced failure")

    n = s.n_households
    prev = sm.CommitmentSchedule(0, np.full((24, n), int(plant.Mode.OFF), np.int8),
                                 np.full((24, n), int(plant.Mode.OFF), np.int8))
    sched, meta = mpc.run_day_ahead_stage(s, fc, state, FailingSolver(), previous=prev)
    assert meta.fallback
    assert sched.start_hour == prev.start_hour + 24
    assert np.array_equal(sched.fc_modes, prev.fc_modes)
