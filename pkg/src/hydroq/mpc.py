"""Receding-horizon orchestration: one commitment solve per day, one
dispatch solve per 15-min slot, binding first steps applied through the
plant dynamics with realized inputs, everything logged.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import plant, solvers, stage_models
from .errors import NoFeasibleSample
from .plant import Mode, PlantState
from .scenario import SLOTS_PER_DAY, SLOTS_PER_HOUR
from .stage_models import CommitmentSchedule, DispatchPlan, Forecast

FLOAT_FMT = "%.17g"  # repr-exact floats so replays are byte-identical


@dataclass
class StageMeta:
    """Solve bookkeeping for one stage invocation."""

    stage: str
    index: int            # day number or slot number
    solver_name: str
    energy: float
    rounds: int
    wall_time: float
    fallback: bool = False


@dataclass
class StepRecord:
    """Realized outcome of one binding 15-min step."""

    slot: int
    pv: float
    wt: float
    loads: np.ndarray
    fc_power: np.ndarray
    el_power: np.ndarray
    p_ch: np.ndarray
    p_dis: np.ndarray
    unmet: np.ndarray
    curtail: np.ndarray
    soc: np.ndarray          # after the step
    hydrogen: float          # after the step
    fc_mode: np.ndarray
    el_mode: np.ndarray
    residual: np.ndarray     # balance residual net of logged slack
    cost: float              # interval cost attributed to this step


@dataclass
class TrajectoryLog:
    scenario: object
    initial: PlantState
    steps: list = field(default_factory=list)
    schedules: list = field(default_factory=list)       # (day, CommitmentSchedule)
    day_meta: list = field(default_factory=list)
    short_meta: list = field(default_factory=list)
    guard_events: int = 0

    def summary(self) -> dict:
        step_h = self.scenario.short_term_step_s / 3600.0
        soc = np.array([r.soc for r in self.steps])
        h = np.array([r.hydrogen for r in self.steps])
        da_t = [m.wall_time for m in self.day_meta]
        st_t = [m.wall_time for m in self.short_meta]
        return {
            "days": len(self.schedules),
            "steps": len(self.steps),
            "total_cost": float(sum(r.cost for r in self.steps)),
            "total_unmet_kwh": float(sum(r.unmet.sum() for r in self.steps) * step_h),
            "total_curtailed_kwh": float(sum(r.curtail.sum() for r in self.steps) * step_h),
            "soc_min": float(soc.min()) if soc.size else None,
            "soc_max": float(soc.max()) if soc.size else None,
            "hydrogen_min": float(h.min()) if h.size else None,
            "hydrogen_max": float(h.max()) if h.size else None,
            "max_abs_residual": float(max((np.abs(r.residual).max() for r in self.steps), default=0.0)),
            "day_ahead_solve_s": _time_stats(da_t),
            "short_term_solve_s": _time_stats(st_t),
            "fallback_day_ahead": sum(1 for m in self.day_meta if m.fallback),
            "fallback_short_term": sum(1 for m in self.short_meta if m.fallback),
            "guard_events": self.guard_events,
        }


def _time_stats(ts):
    if not ts:
        return {"count": 0}
    arr = np.asarray(ts)
    return {
        "count": len(ts),
        "mean": float(arr.mean()),
        "max": float(arr.max()),
        "total": float(arr.sum()),
    }


def run_day_ahead_stage(scenario, forecasts: Forecast, state: PlantState, solver, previous: CommitmentSchedule | None = None):
    """Solve the 24-h commitment problem from `state`.

    On NoFeasibleSample, falls back to the previous day's schedule
    shifted forward one day (flagged); with no previous schedule the
    failure propagates. Returns (CommitmentSchedule, StageMeta).
    """
    day = int(state.clock_slot // SLOTS_PER_DAY)
    model = stage_models.build_day_ahead(scenario, forecasts, state)
    try:
        assignment, sampleset, rounds = solvers.solve(model, solver)
        schedule = stage_models.decode_day_ahead(assignment, model)
        meta = StageMeta(
            stage_models.DAY_AHEAD, day, sampleset.solver_name,
            sampleset.best.energy, rounds, sampleset.wall_time,
        )
        return schedule, meta
    except NoFeasibleSample:
        if previous is None:
            raise
        held = CommitmentSchedule(
            previous.start_hour + 24, previous.fc_modes.copy(), previous.el_modes.copy()
        )
        meta = StageMeta(stage_models.DAY_AHEAD, day, "fallback_hold", float("nan"), 0, 0.0, fallback=True)
        return held, meta


def _rule_based_dispatch(scenario, commitments, forecasts: Forecast, state: PlantState) -> DispatchPlan:
    """Deterministic fallback: committed-On units at minimum power,
    battery absorbs or serves the remaining residual within its limits."""
    d = scenario.device
    n = scenario.n_households
    S = forecasts.steps
    dt = forecasts.step_s / 3600.0
    slots_per_step = int(round(forecasts.step_s / scenario.short_term_step_s))

    fc_power = np.zeros((S, n))
    el_power = np.zeros((S, n))
    p_ch = np.zeros((S, n))
    p_dis = np.zeros((S, n))
    soc = state.soc.copy()
    h = state.hydrogen
    for k in range(S):
        slot = forecasts.start_slot + k * slots_per_step
        hour = int(slot * scenario.short_term_step_s // 3600)
        fc_modes = commitments.mode_at(hour, "fc")
        el_modes = commitments.mode_at(hour, "el")
        for i in range(n):
            if Mode(int(fc_modes[i])) == Mode.ON and h - d.eta_cons * d.p_fc_min * dt >= d.h_min:
                fc_power[k, i] = d.p_fc_min
            if scenario.include_el and Mode(int(el_modes[i])) == Mode.ON and h + d.eta_prod * d.p_el_min * dt <= d.h_max:
                el_power[k, i] = d.p_el_min
            h += (d.eta_prod * el_power[k, i] - d.eta_cons * fc_power[k, i]) * dt
            if scenario.include_battery:
                r = float(forecasts.pv[k] + forecasts.wt[k] + fc_power[k, i] - el_power[k, i] - forecasts.loads[k, i])
                if r > 0.0:
                    head = (d.soc_max - soc[i]) * d.batt_capacity / (d.eta_ch * dt)
                    p_ch[k, i] = min(r, d.p_ch_max, max(0.0, head))
                elif r < 0.0:
                    avail = (soc[i] - d.soc_min) * d.batt_capacity * d.eta_dis / dt
                    p_dis[k, i] = min(-r, d.p_dis_max, max(0.0, avail))
                soc[i] += (d.eta_ch * p_ch[k, i] * dt) / d.batt_capacity - (p_dis[k, i] * dt) / (
                    d.eta_dis * d.batt_capacity
                )
    supply = forecasts.pv[:, None] + forecasts.wt[:, None] + fc_power - el_power + p_dis - p_ch - forecasts.loads
    unmet = np.maximum(-supply, 0.0)
    curtail = np.maximum(supply, 0.0)
    return DispatchPlan(forecasts.start_slot, forecasts.step_s, fc_power, el_power, p_ch, p_dis, unmet, curtail)


def run_short_term_stage(scenario, commitments: CommitmentSchedule, forecasts: Forecast, state: PlantState, solver):
    """Solve the dispatch refinement; only step 0 of the plan is binding.

    On NoFeasibleSample, falls back to the rule-based dispatch (flagged).
    Returns (DispatchPlan, StageMeta).
    """
    model = stage_models.build_short_term(scenario, commitments, forecasts, state)
    slot = int(state.clock_slot)
    try:
        assignment, sampleset, rounds = solvers.solve(model, solver)
        plan = stage_models.decode_short_term(assignment, model)
        meta = StageMeta(
            stage_models.SHORT_TERM, slot, sampleset.solver_name,
            sampleset.best.energy, rounds, sampleset.wall_time,
        )
        return plan, meta
    except NoFeasibleSample:
        plan = _rule_based_dispatch(scenario, commitments, forecasts, state)
        meta = StageMeta(stage_models.SHORT_TERM, slot, "fallback_rule", float("nan"), 0, 0.0, fallback=True)
        return plan, meta


def _advance_modes(scenario, state: PlantState, schedule: CommitmentSchedule, hour: int):
    """Enter a committed hour: step both unit state machines; on an
    inconsistent (fallback-held) schedule, force the mode like the
    auditor does. Returns the hourly interval cost."""
    d = scenario.device
    c = scenario.costs
    cost = 0.0
    fc_modes = schedule.mode_at(hour, "fc")
    el_modes = schedule.mode_at(hour, "el")
    for i in range(scenario.n_households):
        for which, modes in (("fc", fc_modes), ("el", el_modes)):
            mode_arr = state.fc_mode if which == "fc" else state.el_mode
            prev = Mode(int(mode_arr[i]))
            new = Mode(int(modes[i]))
            if which == "fc":
                ages = (int(state.fc_on_age[i]), int(state.fc_off_age[i]))
                mins = (d.t_on_min_fc, d.t_off_min_fc)
            else:
                ages = (int(state.el_on_age[i]), int(state.el_off_age[i]))
                mins = (d.t_on_min_el, d.t_off_min_el)
            try:
                event = plant.transition_event(prev, new)
                _, ages = plant.step_unit(prev, event, ages, mins)
            except (plant.InvalidEdge, plant.IllegalTransition):
                event = plant.TransitionEvent.NONE
                ages = (1, 1)
            if which == "fc":
                state.fc_mode[i] = int(new)
                state.fc_on_age[i], state.fc_off_age[i] = ages
                cost += plant.fc_interval_cost(new, event, c)
            else:
                state.el_mode[i] = int(new)
                state.el_on_age[i], state.el_off_age[i] = ages
                cost += plant.el_interval_cost(new, event, c)
    return cost


def run_closed_loop(scenario, days: int, solver) -> TrajectoryLog:
    """Simulate `days` of operation: daily commitment at 00:00, a
    dispatch solve every 15 min, binding steps applied with realized
    (not forecast) renewables and load."""
    d = scenario.device
    n = scenario.n_households
    step_s = scenario.short_term_step_s
    dt = step_s / 3600.0
    scenario.require_slots(days * SLOTS_PER_DAY)

    state = plant.initial_state(scenario)
    log = TrajectoryLog(scenario, state.copy())
    rng = np.random.default_rng(scenario.rng_seed) if scenario.forecast_noise_sigma > 0.0 else None
    schedule = None

    for day in range(days):
        slot0 = day * SLOTS_PER_DAY
        da_forecast = stage_models.make_forecast(scenario, slot0, scenario.day_ahead_step_s, scenario.day_ahead_horizon, rng)
        schedule, meta = run_day_ahead_stage(scenario, da_forecast, state, solver, previous=schedule)
        log.schedules.append((day, schedule))
        log.day_meta.append(meta)

        for s in range(SLOTS_PER_DAY):
            slot = slot0 + s
            hour_cost = 0.0
            if s % SLOTS_PER_HOUR == 0:
                hour_cost = _advance_modes(scenario, state, schedule, int(slot * step_s) // 3600)

            horizon = min(scenario.short_term_horizon, SLOTS_PER_DAY - s)
            st_forecast = stage_models.make_forecast(scenario, slot, step_s, horizon, rng)
            plan, st_meta = run_short_term_stage(scenario, schedule, st_forecast, state, solver)
            log.short_meta.append(st_meta)

            # binding first step with realized inputs
            pv, wt, loads = plant.window_inputs(scenario, slot, step_s, 1)
            pv, wt, loads = float(pv[0]), float(wt[0]), loads[0]
            fc_p = plan.fc_power[0].copy()
            el_p = plan.el_power[0].copy()
            p_ch = plan.p_ch[0].copy()
            p_dis = plan.p_dis[0].copy()

            # plant protection: clamp battery power to SOC headroom and
            # unit power to tank headroom (no-ops under perfect foresight)
            for i in range(n):
                head = (d.soc_max - state.soc[i]) * d.batt_capacity / (d.eta_ch * dt) if d.batt_capacity > 0 else 0.0
                avail = (state.soc[i] - d.soc_min) * d.batt_capacity * d.eta_dis / dt if d.batt_capacity > 0 else 0.0
                if p_ch[i] > head + plant.EPS_NUM or p_dis[i] > avail + plant.EPS_NUM:
                    log.guard_events += 1
                p_ch[i] = min(p_ch[i], max(0.0, head))
                p_dis[i] = min(p_dis[i], max(0.0, avail))
            total_fc = float(fc_p.sum())
            total_el = float(el_p.sum())
            if total_fc > 0.0:
                h_room = state.hydrogen + d.eta_prod * total_el * dt - d.h_min
                limit = h_room / (d.eta_cons * dt)
                if total_fc > limit + plant.EPS_NUM:
                    fc_p *= max(0.0, limit) / total_fc
                    log.guard_events += 1
            if total_el > 0.0:
                h_room = d.h_max - (state.hydrogen - d.eta_cons * float(fc_p.sum()) * dt)
                limit = h_room / (d.eta_prod * dt)
                if total_el > limit + plant.EPS_NUM:
                    el_p *= max(0.0, limit) / total_el
                    log.guard_events += 1

            residual = np.array([
                plant.power_balance_residual(pv, wt, fc_p[i], el_p[i], p_dis[i] - p_ch[i], loads[i])
                for i in range(n)
            ])
            unmet = np.maximum(-residual, 0.0)
            curtail = np.maximum(residual, 0.0)

            for i in range(n):
                state.soc[i] += (d.eta_ch * p_ch[i] * dt) / d.batt_capacity - (p_dis[i] * dt) / (
                    d.eta_dis * d.batt_capacity
                )
            state.hydrogen += (d.eta_prod * el_p.sum() - d.eta_cons * fc_p.sum()) * dt
            state.fc_power = fc_p
            state.el_power = el_p
            state.clock_slot = slot + 1

            log.steps.append(StepRecord(
                slot=slot, pv=pv, wt=wt, loads=loads.copy(),
                fc_power=fc_p, el_power=el_p, p_ch=p_ch, p_dis=p_dis,
                unmet=unmet, curtail=curtail,
                soc=state.soc.copy(), hydrogen=state.hydrogen,
                fc_mode=state.fc_mode.copy(), el_mode=state.el_mode.copy(),
                residual=residual + unmet - curtail,
                cost=hour_cost,
            ))
    return log


# --- CSV / JSON streaming ---

def _atomic_write(path, write_fn, mode="w"):
    """Write via a temp file in the same directory, then rename."""
    dirname = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=dirname, suffix=".tmp")
    try:
        with os.fdopen(fd, mode, newline="") as f:
            write_fn(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_header(n: int):
    cols = ["slot", "pv_kw", "wt_kw"]
    per = ["load_kw", "fc_kw", "el_kw", "p_ch_kw", "p_dis_kw", "unmet_kw", "curtail_kw", "soc", "fc_mode", "el_mode"]
    for i in range(n):
        cols += [f"{c}_{i}" for c in per]
    cols.append("hydrogen_kg")
    return cols


def write_trajectory_csv(log: TrajectoryLog, path: str):
    n = log.scenario.n_households

    def emit(f):
        w = csv.writer(f)
        w.writerow(trajectory_header(n))
        for r in log.steps:
            row = [r.slot, FLOAT_FMT % r.pv, FLOAT_FMT % r.wt]
            for i in range(n):
                row += [
                    FLOAT_FMT % r.loads[i], FLOAT_FMT % r.fc_power[i], FLOAT_FMT % r.el_power[i],
                    FLOAT_FMT % r.p_ch[i], FLOAT_FMT % r.p_dis[i],
                    FLOAT_FMT % r.unmet[i], FLOAT_FMT % r.curtail[i],
                    FLOAT_FMT % r.soc[i], int(r.fc_mode[i]), int(r.el_mode[i]),
                ]
            row.append(FLOAT_FMT % r.hydrogen)
            w.writerow(row)

    _atomic_write(path, emit)


def write_summary_json(log: TrajectoryLog, path: str):
    _atomic_write(path, lambda f: json.dump(log.summary(), f, indent=2, sort_keys=True))


def read_trajectory_csv(path: str, n: int):
    """Parse a trajectory CSV back into per-step dicts of arrays."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != trajectory_header(n):
            raise ValueError("trajectory header does not match the scenario")
        rows = []
        for raw in reader:
            k = 3
            rec = {"slot": int(raw[0]), "pv": float(raw[1]), "wt": float(raw[2])}
            for name in ("loads", "fc_power", "el_power", "p_ch", "p_dis", "unmet", "curtail", "soc", "fc_mode", "el_mode"):
                rec[name] = np.empty(n)
            for i in range(n):
                vals = raw[k:k + 10]
                k += 10
                for name, v in zip(("loads", "fc_power", "el_power", "p_ch", "p_dis", "unmet", "curtail", "soc"), vals[:8]):
                    rec[name][i] = float(v)
                rec["fc_mode"][i] = int(vals[8])
                rec["el_mode"][i] = int(vals[9])
            rec["hydrogen"] = float(raw[k])
            rows.append(rec)
    return rows


def replay_violations(rows, scenario):
    """Re-audit a parsed trajectory through the plant model.

    Stitches the logged modes into a whole-run CommitmentSchedule and the
    logged powers into one DispatchPlan, then defers to the plant
    auditor; additionally cross-checks logged SOC and hydrogen levels
    against exact recomputation.
    """
    n = scenario.n_households
    steps = len(rows)
    if steps == 0:
        raise ValueError("empty trajectory")
    hours = (steps + SLOTS_PER_HOUR - 1) // SLOTS_PER_HOUR
    fc_modes = np.full((hours, n), int(Mode.OFF), np.int8)
    el_modes = np.full((hours, n), int(Mode.OFF), np.int8)
    for k, r in enumerate(rows):
        if k % SLOTS_PER_HOUR == 0:
            fc_modes[k // SLOTS_PER_HOUR] = r["fc_mode"]
            el_modes[k // SLOTS_PER_HOUR] = r["el_mode"]
    schedule = CommitmentSchedule(0, fc_modes, el_modes)
    dispatch = DispatchPlan(
        rows[0]["slot"], scenario.short_term_step_s,
        np.stack([r["fc_power"] for r in rows]),
        np.stack([r["el_power"] for r in rows]),
        np.stack([r["p_ch"] for r in rows]),
        np.stack([r["p_dis"] for r in rows]),
        np.stack([r["unmet"] for r in rows]),
        np.stack([r["curtail"] for r in rows]),
    )
    initial = plant.initial_state(scenario)
    violations = list(plant.check_feasibility(schedule, dispatch, scenario, initial))

    # exact state replay
    d = scenario.device
    dt = scenario.short_term_step_s / 3600.0
    soc = initial.soc.copy()
    h = initial.hydrogen
    for k, r in enumerate(rows):
        for i in range(n):
            soc[i] += (d.eta_ch * r["p_ch"][i] * dt) / d.batt_capacity - (r["p_dis"][i] * dt) / (
                d.eta_dis * d.batt_capacity
            )
            if abs(soc[i] - r["soc"][i]) > 1e-9:
                violations.append(plant.Violation("replay_soc", i, k, abs(soc[i] - r["soc"][i])))
                soc[i] = r["soc"][i]
        h += (d.eta_prod * r["el_power"].sum() - d.eta_cons * r["fc_power"].sum()) * dt
        if abs(h - r["hydrogen"]) > 1e-9:
            violations.append(plant.Violation("replay_hydrogen", -1, k, abs(h - r["hydrogen"])))
            h = r["hydrogen"]
    return violations
