"""Ground-truth plant dynamics and constraint auditing.

Single source of truth for the unit state machines, battery SOC and
hydrogen-tank recursions, power balance, and interval cost functions.
Everything here is a pure function over value types; `PlantState` is
copied on step so parallel scenario evaluation is safe.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    HydrogenOutOfBounds,
    IllegalTransition,
    InvalidEdge,
    PowerLimitExceeded,
    SimultaneousChargeDischarge,
    SocOutOfBounds,
    WindowMismatch,
)
from .renewables import PvParams, WtParams, pv_power, wt_power

EPS_BALANCE = 1e-6  # kW tolerance on the power-balance residual
EPS_NUM = 1e-9      # numeric tolerance for bound checks

FREE_AGE = 10 ** 6  # "old enough": unit free to transition


class Mode(enum.IntEnum):
    ON = 0
    STANDBY = 1
    OFF = 2


class TransitionEvent(enum.IntEnum):
    NONE = 0
    START_UP = 1      # Standby -> On
    SHUT_DOWN = 2     # On -> Standby
    STANDBY_UP = 3    # Off -> Standby
    STANDBY_DOWN = 4  # Standby -> Off


_EDGES = {
    (Mode.ON, TransitionEvent.NONE): Mode.ON,
    (Mode.ON, TransitionEvent.SHUT_DOWN): Mode.STANDBY,
    (Mode.STANDBY, TransitionEvent.NONE): Mode.STANDBY,
    (Mode.STANDBY, TransitionEvent.START_UP): Mode.ON,
    (Mode.STANDBY, TransitionEvent.STANDBY_DOWN): Mode.OFF,
    (Mode.OFF, TransitionEvent.NONE): Mode.OFF,
    (Mode.OFF, TransitionEvent.STANDBY_UP): Mode.STANDBY,
}


def transition_event(prev: Mode, new: Mode) -> TransitionEvent:
    """Classify the edge between two consecutive modes.

    Raises InvalidEdge for the forbidden direct On<->Off jumps.
    """
    if prev == new:
        return TransitionEvent.NONE
    for (mode, event), target in _EDGES.items():
        if mode == prev and target == new and event != TransitionEvent.NONE:
            return event
    raise InvalidEdge(f"no legal edge {Mode(prev).name} -> {Mode(new).name}")


def step_unit(mode: Mode, event: TransitionEvent, ages, min_durations):
    """Advance one unit by one hourly interval.

    ages is (on_age, off_age): completed intervals in the current On/Off
    spell (counting the interval being entered). min_durations is
    (t_on_min, t_off_min). Returns (new_mode, (on_age, off_age)).
    """
    key = (Mode(mode), TransitionEvent(event))
    if key not in _EDGES:
        raise InvalidEdge(f"event {TransitionEvent(event).name} not applicable in {Mode(mode).name}")
    on_age, off_age = ages
    t_on_min, t_off_min = min_durations
    if event == TransitionEvent.SHUT_DOWN and on_age < t_on_min:
        raise IllegalTransition(f"shutdown after {on_age} h On; minimum is {t_on_min} h")
    if event == TransitionEvent.STANDBY_UP and off_age < t_off_min:
        raise IllegalTransition(f"leave Off after {off_age} h; minimum is {t_off_min} h")
    new_mode = _EDGES[key]
    if event == TransitionEvent.START_UP:
        on_age = 1
    elif event == TransitionEvent.STANDBY_DOWN:
        off_age = 1
    elif event == TransitionEvent.NONE:
        if new_mode == Mode.ON:
            on_age += 1
        elif new_mode == Mode.OFF:
            off_age += 1
    return new_mode, (on_age, off_age)


def step_battery(soc: float, p_ch: float, p_dis: float, device, dt: float) -> float:
    """SOC recursion; raises on charge/discharge conflicts, power limits,
    or a result outside [soc_min, soc_max]."""
    if p_ch < 0.0 or p_dis < 0.0:
        raise PowerLimitExceeded("battery powers must be >= 0")
    if p_ch > EPS_NUM and p_dis > EPS_NUM:
        raise SimultaneousChargeDischarge(f"p_ch={p_ch}, p_dis={p_dis}")
    if p_ch > device.p_ch_max + EPS_NUM or p_dis > device.p_dis_max + EPS_NUM:
        raise PowerLimitExceeded(f"p_ch={p_ch}/{device.p_ch_max}, p_dis={p_dis}/{device.p_dis_max}")
    new = soc + (device.eta_ch * p_ch * dt) / device.batt_capacity - (p_dis * dt) / (
        device.eta_dis * device.batt_capacity
    )
    if new < device.soc_min - EPS_NUM or new > device.soc_max + EPS_NUM:
        raise SocOutOfBounds(f"soc={new:.6f} outside [{device.soc_min}, {device.soc_max}]")
    return new


def step_hydrogen(h: float, total_el_power: float, total_fc_power: float, device, dt: float) -> float:
    """Shared tank recursion: production by ELs minus consumption by FCs."""
    if total_el_power < 0.0 or total_fc_power < 0.0:
        raise PowerLimitExceeded("powers must be >= 0")
    new = h + device.eta_prod * total_el_power * dt - device.eta_cons * total_fc_power * dt
    if new < device.h_min - EPS_NUM or new > device.h_max + EPS_NUM:
        raise HydrogenOutOfBounds(f"hydrogen={new:.6f} kg outside [{device.h_min}, {device.h_max}]")
    return new


def power_balance_residual(pv, wt, fc, el, p_bat_net, load):
    """Bus residual: generation minus load; EL counts as negative
    generation, p_bat_net = p_dis - p_ch."""
    return pv + wt + fc - el + p_bat_net - load


def _unit_interval_cost(mode, event, c_standby, c_hot, c_trans):
    mode = Mode(mode)
    event = TransitionEvent(event)
    cost = 0.0
    if mode == Mode.STANDBY:
        cost += c_standby
    if event in (TransitionEvent.STANDBY_UP, TransitionEvent.STANDBY_DOWN):
        cost += c_hot
    if event in (TransitionEvent.START_UP, TransitionEvent.SHUT_DOWN):
        cost += c_trans
    return cost


def fc_interval_cost(mode, event, costs) -> float:
    return _unit_interval_cost(mode, event, costs.c_standby_fc, costs.c_hot_fc, costs.c_trans_fc)


def el_interval_cost(mode, event, costs) -> float:
    return _unit_interval_cost(mode, event, costs.c_standby_el, costs.c_hot_el, costs.c_trans_el)


@dataclass
class PlantState:
    """Simulation state at one instant: per-household arrays plus the
    shared hydrogen level. clock_slot counts 15-min slots since the
    scenario start."""

    soc: np.ndarray
    fc_mode: np.ndarray
    el_mode: np.ndarray
    fc_on_age: np.ndarray
    fc_off_age: np.ndarray
    el_on_age: np.ndarray
    el_off_age: np.ndarray
    fc_power: np.ndarray
    el_power: np.ndarray
    hydrogen: float
    clock_slot: int = 0

    def copy(self) -> "PlantState":
        return PlantState(
            soc=self.soc.copy(),
            fc_mode=self.fc_mode.copy(),
            el_mode=self.el_mode.copy(),
            fc_on_age=self.fc_on_age.copy(),
            fc_off_age=self.fc_off_age.copy(),
            el_on_age=self.el_on_age.copy(),
            el_off_age=self.el_off_age.copy(),
            fc_power=self.fc_power.copy(),
            el_power=self.el_power.copy(),
            hydrogen=self.hydrogen,
            clock_slot=self.clock_slot,
        )


def initial_state(scenario) -> PlantState:
    n = scenario.n_households
    d = scenario.device
    return PlantState(
        soc=np.full(n, d.soc_init),
        fc_mode=np.full(n, int(Mode.OFF), np.int8),
        el_mode=np.full(n, int(Mode.OFF), np.int8),
        fc_on_age=np.full(n, FREE_AGE, np.int64),
        fc_off_age=np.full(n, FREE_AGE, np.int64),
        el_on_age=np.full(n, FREE_AGE, np.int64),
        el_off_age=np.full(n, FREE_AGE, np.int64),
        fc_power=np.zeros(n),
        el_power=np.zeros(n),
        hydrogen=d.h_init,
    )


@dataclass(frozen=True)
class Violation:
    constraint_id: str
    household: int  # -1 for shared constraints
    time_index: int
    magnitude: float = 0.0


def window_inputs(scenario, start_slot: int, step_s: float, count: int):
    """Per-step pv, wt and load arrays averaged onto the given step.

    start_slot indexes the scenario's 15-min grid; step_s must be a
    multiple of the grid step.
    """
    ratio = int(round(step_s / scenario.short_term_step_s))
    if ratio < 1 or abs(ratio * scenario.short_term_step_s - step_s) > 1e-9:
        raise WindowMismatch(f"step {step_s}s does not align with the {scenario.short_term_step_s}s grid")
    end = start_slot + count * ratio
    scenario.require_slots(end)
    sl = slice(start_slot, end)

    def mean_steps(values):
        return np.asarray(values[sl], float).reshape(count, ratio).mean(axis=1)

    temp = mean_steps(scenario.ambient_temp.values)
    ins = mean_steps(scenario.insolation.values)
    wind = mean_steps(scenario.wind_speed.values)
    if scenario.pv_rated > 0.0:
        pv = pv_power(PvParams(scenario.eta_pv_conv, scenario.pv_rated), temp, ins)
    else:
        pv = np.zeros(count)
    if scenario.wt_rated > 0.0:
        wt = wt_power(WtParams(scenario.wt_rated, scenario.v_cut_in, scenario.v_rated, scenario.v_cut_out), wind)
    else:
        wt = np.zeros(count)
    loads = np.stack([mean_steps(s.values) for s in scenario.loads], axis=1)
    return np.atleast_1d(pv), np.atleast_1d(wt), loads


def check_feasibility(schedule, dispatch, scenario, initial: PlantState):
    """Audit a (schedule, dispatch) pair against every plant constraint.

    Returns [] iff feasible; otherwise one Violation per breach, ordered
    time-major, then household, then constraint id. The balance check
    credits the dispatch's logged unmet/curtailed power.
    """
    d = scenario.device
    n = scenario.n_households
    steps = dispatch.fc_power.shape[0]
    step_h = dispatch.step_s / 3600.0
    slots_per_step = int(round(dispatch.step_s / scenario.short_term_step_s))

    first_hour = (dispatch.start_slot * scenario.short_term_step_s) // 3600
    last_hour = ((dispatch.start_slot + steps * slots_per_step) * scenario.short_term_step_s - 1) // 3600
    if first_hour < schedule.start_hour or last_hour >= schedule.start_hour + schedule.fc_modes.shape[0]:
        raise WindowMismatch(
            f"dispatch hours [{first_hour}, {last_hour}] outside schedule "
            f"[{schedule.start_hour}, {schedule.start_hour + schedule.fc_modes.shape[0] - 1}]"
        )

    pv, wt, loads = window_inputs(scenario, dispatch.start_slot, dispatch.step_s, steps)

    violations = []
    soc = initial.soc.copy()
    hydrogen = initial.hydrogen
    fc_mode = initial.fc_mode.copy()
    el_mode = initial.el_mode.copy()
    fc_ages = [(int(initial.fc_on_age[i]), int(initial.fc_off_age[i])) for i in range(n)]
    el_ages = [(int(initial.el_on_age[i]), int(initial.el_off_age[i])) for i in range(n)]
    seen_hour = None

    for k in range(steps):
        hour = int((dispatch.start_slot * scenario.short_term_step_s + k * dispatch.step_s) // 3600)
        hrow = hour - schedule.start_hour
        if hour != seen_hour:
            # hourly state-machine checks on entering a new committed hour
            for i in range(n):
                for which, modes, ages, mins in (
                    ("fc", schedule.fc_modes, fc_ages, (d.t_on_min_fc, d.t_off_min_fc)),
                    ("el", schedule.el_modes, el_ages, (d.t_on_min_el, d.t_off_min_el)),
                ):
                    prev = Mode(fc_mode[i] if which == "fc" else el_mode[i])
                    new = Mode(int(modes[hrow, i]))
                    try:
                        event = transition_event(prev, new)
                        _, new_ages = step_unit(prev, event, ages[i], mins)
                        ages[i] = new_ages
                    except InvalidEdge:
                        violations.append(Violation("illegal_edge", i, k))
                        ages[i] = (1, 1)
                    except IllegalTransition:
                        cid = "min_on" if prev == Mode.ON else "min_off"
                        violations.append(Violation(cid, i, k))
                        ages[i] = (1, 1)
                    if which == "fc":
                        fc_mode[i] = int(new)
                    else:
                        el_mode[i] = int(new)
            seen_hour = hour

        total_fc = 0.0
        total_el = 0.0
        for i in range(n):
            fc_p = float(dispatch.fc_power[k, i])
            el_p = float(dispatch.el_power[k, i])
            p_ch = float(dispatch.p_ch[k, i])
            p_dis = float(dispatch.p_dis[k, i])
            unmet = float(dispatch.unmet[k, i])
            curtail = float(dispatch.curtail[k, i])

            for p, mode, pmin, pmax, tag in (
                (fc_p, Mode(int(fc_mode[i])), d.p_fc_min, d.p_fc_max, "fc"),
                (el_p, Mode(int(el_mode[i])), d.p_el_min, d.p_el_max, "el"),
            ):
                if mode != Mode.ON:
                    if p > EPS_NUM:
                        violations.append(Violation("power_when_not_on", i, k, p))
                else:
                    if p < pmin - EPS_NUM or p > pmax + EPS_NUM:
                        violations.append(Violation("power_bounds", i, k, max(pmin - p, p - pmax)))

            if p_ch > EPS_NUM and p_dis > EPS_NUM:
                violations.append(Violation("simultaneous_charge_discharge", i, k, min(p_ch, p_dis)))
            if p_ch > d.p_ch_max + EPS_NUM or p_dis > d.p_dis_max + EPS_NUM:
                violations.append(
                    Violation("batt_power_limit", i, k, max(p_ch - d.p_ch_max, p_dis - d.p_dis_max))
                )

            soc[i] = soc[i] + (d.eta_ch * p_ch * step_h) / d.batt_capacity - (p_dis * step_h) / (
                d.eta_dis * d.batt_capacity
            )
            if soc[i] < d.soc_min - EPS_NUM or soc[i] > d.soc_max + EPS_NUM:
                violations.append(
                    Violation("soc_bounds", i, k, max(d.soc_min - soc[i], soc[i] - d.soc_max))
                )

            if unmet < -EPS_NUM or curtail < -EPS_NUM:
                violations.append(Violation("negative_slack", i, k, max(-unmet, -curtail)))

            residual = power_balance_residual(
                float(pv[k]), float(wt[k]), fc_p, el_p, p_dis - p_ch, float(loads[k, i])
            ) + unmet - curtail
            if abs(residual) > EPS_BALANCE:
                violations.append(Violation("power_balance", i, k, abs(residual)))

            total_fc += fc_p
            total_el += el_p

        hydrogen = hydrogen + d.eta_prod * total_el * step_h - d.eta_cons * total_fc * step_h
        if hydrogen < d.h_min - EPS_NUM or hydrogen > d.h_max + EPS_NUM:
            violations.append(
                Violation("hydrogen_bounds", -1, k, max(d.h_min - hydrogen, hydrogen - d.h_max))
            )

    return violations
