"""Solver-independent constrained models for the two scheduling stages.

The day-ahead model commits FC/EL modes over hourly steps; the short-term
model refines power setpoints over 15-min slots under fixed commitments.
Both are expressed over binary variables with linear constraints plus a
quadratic objective, ready for penalty compilation into a QUBO.

Encoding conventions:
  * unit power = p_min*U + step*sum(2^b * bit_b), step = span/(2^bits-1),
    with gating constraints bit_b <= U so power is 0 whenever U = 0;
  * battery power = p_max*int/(2^bits-1) gated by the charge/discharge flag;
  * SOC and hydrogen levels are substituted linear expressions of the
    power bits (no auxiliary state variables);
  * the power-balance equality is a SOFT constraint weighted by
    w_slack_balance; unmet/curtailed power is re-derived exactly from the
    residual at decode time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import plant
from .errors import (
    CommitmentGap,
    HorizonMismatch,
    InfeasibleInitialState,
    InvalidOneHot,
    LengthMismatch,
)
from .plant import Mode

DAY_AHEAD = "day_ahead"
SHORT_TERM = "short_term"


@dataclass(frozen=True)
class VariableId:
    stage: str
    household: int      # -1 for shared/auxiliary
    time_index: int
    role: str
    bit: int = 0
    tag: tuple = ()


@dataclass
class LinearConstraint:
    """expr (sense) bound, expr = sum coef[k] * x[idx[k]].

    soft_weight None marks a hard constraint; otherwise the constraint is
    folded into the objective as weight * (expr - bound)^2.
    """

    family: str
    sense: str              # "eq" | "le"
    idx: np.ndarray
    coef: np.ndarray
    bound: float
    soft_weight: float | None = None
    label: tuple = ()


@dataclass
class ConstrainedModel:
    stage: str
    variables: list = field(default_factory=list)
    lin_obj: dict = field(default_factory=dict)        # idx -> coef
    quad_obj: dict = field(default_factory=dict)       # (i, j) i<j -> coef
    obj_offset: float = 0.0
    constraints: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def add_var(self, vid: VariableId) -> int:
        self.variables.append(vid)
        return len(self.variables) - 1

    def add_lin(self, i: int, c: float):
        if c != 0.0:
            self.lin_obj[i] = self.lin_obj.get(i, 0.0) + c

    def add_quad(self, i: int, j: int, c: float):
        if c == 0.0:
            return
        if i == j:
            self.add_lin(i, c)  # x^2 = x for binaries
            return
        key = (i, j) if i < j else (j, i)
        self.quad_obj[key] = self.quad_obj.get(key, 0.0) + c

    def add_square(self, items, const: float, weight: float):
        """Add weight * (sum a_k x_k + const)^2 to the objective."""
        if weight == 0.0:
            return
        self.obj_offset += weight * const * const
        entries = [(i, a) for i, a in items if a != 0.0]
        for k, (i, a) in enumerate(entries):
            self.add_lin(i, weight * (a * a + 2.0 * const * a))
            for j, b in entries[k + 1:]:
                self.add_quad(i, j, 2.0 * weight * a * b)

    def add_constraint(self, family, sense, items, bound, soft_weight=None, label=()):
        entries = [(i, a) for i, a in items if a != 0.0]
        idx = np.array([i for i, _ in entries], np.int64)
        coef = np.array([a for _, a in entries], float)
        self.constraints.append(LinearConstraint(family, sense, idx, coef, float(bound), soft_weight, label))

    def objective_value(self, x, include_soft: bool = True) -> float:
        x = np.asarray(x, float)
        if x.shape[0] < self.n_vars:
            raise LengthMismatch(f"assignment length {x.shape[0]} < {self.n_vars}")
        val = self.obj_offset
        for i, c in self.lin_obj.items():
            val += c * x[i]
        for (i, j), c in self.quad_obj.items():
            val += c * x[i] * x[j]
        if include_soft:
            for con in self.constraints:
                if con.soft_weight is not None:
                    e = float(x[con.idx] @ con.coef) - con.bound
                    val += con.soft_weight * e * e
        return val

    def constraint_value(self, con: LinearConstraint, x) -> float:
        return float(np.asarray(x, float)[con.idx] @ con.coef)

    def hard_violations(self, x, tol: float = 1e-9):
        """Families of hard constraints violated by a raw assignment."""
        out = []
        for con in self.constraints:
            if con.soft_weight is not None:
                continue
            e = self.constraint_value(con, x) - con.bound
            bad = abs(e) > tol if con.sense == "eq" else e > tol
            if bad:
                out.append((con.family, con.label, e))
        return out


@dataclass(frozen=True)
class CommitmentSchedule:
    """Hourly On/Standby/Off decisions per unit per household."""

    start_hour: int
    fc_modes: np.ndarray   # (H, n) of Mode ints
    el_modes: np.ndarray

    @property
    def horizon(self) -> int:
        return self.fc_modes.shape[0]

    def events(self, initial_fc, initial_el):
        """Per-hour TransitionEvent arrays derived from consecutive modes.

        Raises InvalidEdge on a direct On<->Off jump.
        """
        h, n = self.fc_modes.shape
        fc_ev = np.zeros((h, n), np.int8)
        el_ev = np.zeros((h, n), np.int8)
        for i in range(n):
            prev_fc, prev_el = Mode(int(initial_fc[i])), Mode(int(initial_el[i]))
            for t in range(h):
                fc_ev[t, i] = int(plant.transition_event(prev_fc, Mode(int(self.fc_modes[t, i]))))
                el_ev[t, i] = int(plant.transition_event(prev_el, Mode(int(self.el_modes[t, i]))))
                prev_fc = Mode(int(self.fc_modes[t, i]))
                prev_el = Mode(int(self.el_modes[t, i]))
        return fc_ev, el_ev

    def mode_at(self, hour: int, which: str):
        row = hour - self.start_hour
        if row < 0 or row >= self.horizon:
            raise CommitmentGap(f"hour {hour} outside committed window")
        return (self.fc_modes if which == "fc" else self.el_modes)[row]


@dataclass(frozen=True)
class DispatchPlan:
    """Power setpoints per step per household plus logged balance slack."""

    start_slot: int
    step_s: float
    fc_power: np.ndarray
    el_power: np.ndarray
    p_ch: np.ndarray
    p_dis: np.ndarray
    unmet: np.ndarray
    curtail: np.ndarray

    @property
    def steps(self) -> int:
        return self.fc_power.shape[0]


@dataclass(frozen=True)
class Forecast:
    """Per-step renewable output and household loads over a window."""

    start_slot: int
    step_s: float
    pv: np.ndarray      # (T,)
    wt: np.ndarray      # (T,)
    loads: np.ndarray   # (T, n)

    @property
    def steps(self) -> int:
        return self.pv.shape[0]


def make_forecast(scenario, start_slot: int, step_s: float, count: int, rng=None) -> Forecast:
    """Perfect-foresight forecast from the scenario series, optionally
    perturbed by multiplicative Gaussian noise."""
    pv, wt, loads = plant.window_inputs(scenario, start_slot, step_s, count)
    if rng is not None and scenario.forecast_noise_sigma > 0.0:
        s = scenario.forecast_noise_sigma
        pv = np.maximum(pv * rng.normal(1.0, s, pv.shape), 0.0)
        wt = np.maximum(wt * rng.normal(1.0, s, wt.shape), 0.0)
        loads = np.maximum(loads * rng.normal(1.0, s, loads.shape), 0.0)
    return Forecast(start_slot, step_s, pv, wt, loads)


def _power_step(pmin, pmax, bits):
    return (pmax - pmin) / ((1 << bits) - 1)


def _abs_diff_objective(model, weight, i_prev, i_cur, const_prev, const_cur):
    """weight * |x_cur - x_prev| for binaries via a+b-2ab; either side may
    be a constant (index None)."""
    if weight == 0.0:
        return
    if i_prev is None and i_cur is None:
        model.obj_offset += weight * abs(const_cur - const_prev)
    elif i_prev is None:
        # |x - c| = x(1-c) + c(1-x) for binary constants
        c = const_prev
        model.add_lin(i_cur, weight * (1.0 - 2.0 * c))
        model.obj_offset += weight * c
    elif i_cur is None:
        c = const_cur
        model.add_lin(i_prev, weight * (1.0 - 2.0 * c))
        model.obj_offset += weight * c
    else:
        model.add_lin(i_prev, weight)
        model.add_lin(i_cur, weight)
        model.add_quad(i_prev, i_cur, -2.0 * weight)


def day_ahead_var_count(scenario) -> int:
    """Closed-form decision-variable count of the day-ahead model."""
    per_unit = 3 + scenario.power_bits
    per = per_unit + (per_unit if scenario.include_el else 0)
    if scenario.include_battery:
        per += 2 + 2 * scenario.power_bits
    return scenario.n_households * scenario.day_ahead_horizon * per


def build_day_ahead(scenario, forecasts: Forecast, initial: plant.PlantState) -> ConstrainedModel:
    """Commitment model: FC/EL state machines, binary-expanded powers,
    battery and hydrogen dynamics, soft power balance; objective mixes
    unit costs, hydrogen stock, SOC deviation and balance slack."""
    d = scenario.device
    c = scenario.costs
    n = scenario.n_households
    T = scenario.day_ahead_horizon
    if forecasts.steps != T or forecasts.loads.shape[1] != n:
        raise HorizonMismatch(f"forecast covers {forecasts.steps} steps, need {T}")
    if not (d.soc_min - 1e-9 <= initial.soc.min() and initial.soc.max() <= d.soc_max + 1e-9):
        raise InfeasibleInitialState("initial SOC outside bounds")
    if not (d.h_min - 1e-9 <= initial.hydrogen <= d.h_max + 1e-9):
        raise InfeasibleInitialState("initial hydrogen outside bounds")

    dt = scenario.day_ahead_step_s / 3600.0
    B = scenario.power_bits
    m = ConstrainedModel(stage=DAY_AHEAD)

    units = [("fc", d.p_fc_min, d.p_fc_max, d.t_on_min_fc, d.t_off_min_fc)]
    if scenario.include_el:
        units.append(("el", d.p_el_min, d.p_el_max, d.t_on_min_el, d.t_off_min_el))

    # registries: state[(unit, i, t)] -> (on, standby, off); pbits[(unit, i, t)] -> [idx]
    state = {}
    pbits = {}
    bflags = {}
    bbits = {}
    for i in range(n):
        for t in range(T):
            for unit, *_ in units:
                trip = tuple(
                    m.add_var(VariableId(DAY_AHEAD, i, t, f"{unit}_{r}"))
                    for r in ("on", "standby", "off")
                )
                state[(unit, i, t)] = trip
                pbits[(unit, i, t)] = [
                    m.add_var(VariableId(DAY_AHEAD, i, t, f"{unit}_power_bit", bit=b)) for b in range(B)
                ]
            if scenario.include_battery:
                bflags[(i, t)] = (
                    m.add_var(VariableId(DAY_AHEAD, i, t, "batt_charge_flag")),
                    m.add_var(VariableId(DAY_AHEAD, i, t, "batt_discharge_flag")),
                )
                bbits[(i, t)] = (
                    [m.add_var(VariableId(DAY_AHEAD, i, t, "batt_charge_bit", bit=b)) for b in range(B)],
                    [m.add_var(VariableId(DAY_AHEAD, i, t, "batt_discharge_bit", bit=b)) for b in range(B)],
                )

    def power_expr(unit, pmin, pmax, i, t):
        on = state[(unit, i, t)][0]
        step = _power_step(pmin, pmax, B)
        return [(on, pmin)] + [(b_idx, step * (1 << b)) for b, b_idx in enumerate(pbits[(unit, i, t)])]

    def batt_expr(i, t):
        ch_bits, dis_bits = bbits[(i, t)]
        ch_step = d.p_ch_max / ((1 << B) - 1) if d.p_ch_max > 0 else 0.0
        dis_step = d.p_dis_max / ((1 << B) - 1) if d.p_dis_max > 0 else 0.0
        ch = [(b_idx, ch_step * (1 << b)) for b, b_idx in enumerate(ch_bits)]
        dis = [(b_idx, dis_step * (1 << b)) for b, b_idx in enumerate(dis_bits)]
        return ch, dis

    # --- state-machine constraints and unit costs ---
    initial_modes = {"fc": initial.fc_mode, "el": initial.el_mode}
    initial_on_age = {"fc": initial.fc_on_age, "el": initial.el_on_age}
    initial_off_age = {"fc": initial.fc_off_age, "el": initial.el_off_age}
    cost_coeffs = {
        "fc": (c.c_standby_fc, c.c_hot_fc, c.c_trans_fc),
        "el": (c.c_standby_el, c.c_hot_el, c.c_trans_el),
    }

    for unit, pmin, pmax, t_on_min, t_off_min in units:
        for i in range(n):
            init_mode = Mode(int(initial_modes[unit][i]))
            u0 = 1.0 if init_mode == Mode.ON else 0.0
            d0 = 1.0 if init_mode == Mode.OFF else 0.0
            c_s, c_hot, c_tr = cost_coeffs[unit]
            for t in range(T):
                on, sb, off = state[(unit, i, t)]
                m.add_constraint(
                    f"one_hot_{unit}", "eq", [(on, 1.0), (sb, 1.0), (off, 1.0)], 1.0, label=(i, t)
                )
                # forbid direct On<->Off edges
                prev_on = None if t == 0 else state[(unit, i, t - 1)][0]
                prev_off = None if t == 0 else state[(unit, i, t - 1)][2]
                if t == 0:
                    if u0 == 1.0:
                        m.add_constraint("state_edge", "le", [(off, 1.0)], 0.0, label=(unit, i, t, "u->d"))
                    if d0 == 1.0:
                        m.add_constraint("state_edge", "le", [(on, 1.0)], 0.0, label=(unit, i, t, "d->u"))
                else:
                    m.add_constraint(
                        "state_edge", "le", [(prev_on, 1.0), (off, 1.0)], 1.0, label=(unit, i, t, "u->d")
                    )
                    m.add_constraint(
                        "state_edge", "le", [(prev_off, 1.0), (on, 1.0)], 1.0, label=(unit, i, t, "d->u")
                    )
                # min-duration windows: startup at t keeps U set, shutdown keeps D set
                for k in range(1, t_on_min):
                    if t + k >= T:
                        break
                    items = [(on, 1.0), (state[(unit, i, t + k)][0], -1.0)]
                    bound = 0.0
                    if t == 0:
                        bound += u0
                    else:
                        items.append((state[(unit, i, t - 1)][0], -1.0))
                    m.add_constraint("min_on", "le", items, bound, label=(unit, i, t, k))
                for k in range(1, t_off_min):
                    if t + k >= T:
                        break
                    items = [(off, 1.0), (state[(unit, i, t + k)][2], -1.0)]
                    bound = 0.0
                    if t == 0:
                        bound += d0
                    else:
                        items.append((state[(unit, i, t - 1)][2], -1.0))
                    m.add_constraint("min_off", "le", items, bound, label=(unit, i, t, k))
                # power gating
                for b_idx in pbits[(unit, i, t)]:
                    m.add_constraint(
                        f"power_gate_{unit}", "le", [(b_idx, 1.0), (on, -1.0)], 0.0, label=(i, t, b_idx)
                    )
                # interval costs: standby + |dU| transitions + |dD| hot edges
                m.add_lin(sb, c.w_cost * c_s)
                if t == 0:
                    _abs_diff_objective(m, c.w_cost * c_tr, None, on, u0, 0.0)
                    _abs_diff_objective(m, c.w_cost * c_hot, None, off, d0, 0.0)
                else:
                    _abs_diff_objective(m, c.w_cost * c_tr, prev_on, on, 0.0, 0.0)
                    _abs_diff_objective(m, c.w_cost * c_hot, prev_off, off, 0.0, 0.0)
            # carry-over minimum durations from the initial state
            if init_mode == Mode.ON:
                hold = max(0, t_on_min - int(initial_on_age[unit][i]))
                for t in range(min(hold, T)):
                    m.add_constraint("initial_hold", "eq", [(state[(unit, i, t)][0], 1.0)], 1.0, label=(unit, i, t))
            elif init_mode == Mode.OFF:
                hold = max(0, t_off_min - int(initial_off_age[unit][i]))
                for t in range(min(hold, T)):
                    m.add_constraint("initial_hold", "eq", [(state[(unit, i, t)][2], 1.0)], 1.0, label=(unit, i, t))

    # --- battery constraints and SOC chain ---
    soc_exprs = {}
    for i in range(n):
        if scenario.include_battery:
            acc = []
            for t in range(T):
                y_ch, y_dis = bflags[(i, t)]
                ch, dis = batt_expr(i, t)
                m.add_constraint("batt_excl", "le", [(y_ch, 1.0), (y_dis, 1.0)], 1.0, label=(i, t))
                for b_idx, _ in ch:
                    m.add_constraint("batt_gate", "le", [(b_idx, 1.0), (y_ch, -1.0)], 0.0, label=(i, t, b_idx))
                for b_idx, _ in dis:
                    m.add_constraint("batt_gate", "le", [(b_idx, 1.0), (y_dis, -1.0)], 0.0, label=(i, t, b_idx))
                acc = acc + [(idx, d.eta_ch * a * dt / d.batt_capacity) for idx, a in ch]
                acc = acc + [(idx, -a * dt / (d.eta_dis * d.batt_capacity)) for idx, a in dis]
                soc_exprs[(i, t)] = list(acc)
                m.add_constraint("soc_max", "le", list(acc), d.soc_max - initial.soc[i], label=(i, t))
                m.add_constraint("soc_min", "le", [(idx, -a) for idx, a in acc], initial.soc[i] - d.soc_min, label=(i, t))
                m.add_square(acc, initial.soc[i] - d.soc_target, c.w_soc)
        else:
            for t in range(T):
                m.obj_offset += c.w_soc * (initial.soc[i] - d.soc_target) ** 2

    # --- hydrogen chain (shared tank) ---
    h_acc = []
    for t in range(T):
        for i in range(n):
            if scenario.include_el:
                h_acc += [(idx, d.eta_prod * a * dt) for idx, a in power_expr("el", d.p_el_min, d.p_el_max, i, t)]
            h_acc += [(idx, -d.eta_cons * a * dt) for idx, a in power_expr("fc", d.p_fc_min, d.p_fc_max, i, t)]
        m.add_constraint("h_max", "le", list(h_acc), d.h_max - initial.hydrogen, label=(t,))
        m.add_constraint("h_min", "le", [(idx, -a) for idx, a in h_acc], initial.hydrogen - d.h_min, label=(t,))
        # hydrogen stock reward (normalized by capacity)
        for idx, a in h_acc:
            m.add_lin(idx, -c.w_hydrogen * a / d.h_max)
        m.obj_offset += -c.w_hydrogen * initial.hydrogen / d.h_max

    # --- soft power balance per household per hour ---
    for i in range(n):
        for t in range(T):
            items = list(power_expr("fc", d.p_fc_min, d.p_fc_max, i, t))
            if scenario.include_el:
                items += [(idx, -a) for idx, a in power_expr("el", d.p_el_min, d.p_el_max, i, t)]
            if scenario.include_battery:
                ch, dis = batt_expr(i, t)
                items += [(idx, a) for idx, a in dis]
                items += [(idx, -a) for idx, a in ch]
            bound = float(forecasts.loads[t, i] - forecasts.pv[t] - forecasts.wt[t])
            m.add_constraint("balance", "eq", items, bound, soft_weight=c.w_slack_balance, label=(i, t))

    m.meta = {
        "scenario": scenario,
        "initial": initial.copy(),
        "forecast": forecasts,
        "state": state,
        "pbits": pbits,
        "bflags": bflags,
        "bbits": bbits,
        "units": units,
        "start_hour": int((forecasts.start_slot * scenario.short_term_step_s) // 3600),
        "horizon": T,
    }
    return m


def build_short_term(scenario, commitments: CommitmentSchedule, forecasts: Forecast, state: plant.PlantState) -> ConstrainedModel:
    """Dispatch-refinement model over 15-min slots with modes fixed by the
    commitments; objective trades hydrogen stock, |power change| via
    deviation pairs, SOC deviation and balance slack."""
    d = scenario.device
    c = scenario.costs
    n = scenario.n_households
    S = forecasts.steps
    dt = forecasts.step_s / 3600.0
    B = scenario.power_bits
    slots_per_step = int(round(forecasts.step_s / scenario.short_term_step_s))

    def committed(which, k):
        slot = forecasts.start_slot + k * slots_per_step
        hour = int(slot * scenario.short_term_step_s // 3600)
        return commitments.mode_at(hour, which)

    on_grid = {}  # (unit, i, k) -> True if committed On
    for k in range(S):
        fc_modes = committed("fc", k)
        el_modes = committed("el", k) if scenario.include_el else None
        for i in range(n):
            on_grid[("fc", i, k)] = Mode(int(fc_modes[i])) == Mode.ON
            if scenario.include_el:
                on_grid[("el", i, k)] = Mode(int(el_modes[i])) == Mode.ON

    m = ConstrainedModel(stage=SHORT_TERM)
    units = [("fc", d.p_fc_min, d.p_fc_max)]
    if scenario.include_el:
        units.append(("el", d.p_el_min, d.p_el_max))

    pbits = {}
    devbits = {}
    bflags = {}
    bbits = {}
    for k in range(S):
        for i in range(n):
            for unit, pmin, pmax in units:
                if on_grid[(unit, i, k)]:
                    pbits[(unit, i, k)] = [
                        m.add_var(VariableId(SHORT_TERM, i, k, f"{unit}_power_bit", bit=b)) for b in range(B)
                    ]
            if scenario.include_battery:
                bflags[(i, k)] = (
                    m.add_var(VariableId(SHORT_TERM, i, k, "batt_charge_flag")),
                    m.add_var(VariableId(SHORT_TERM, i, k, "batt_discharge_flag")),
                )
                bbits[(i, k)] = (
                    [m.add_var(VariableId(SHORT_TERM, i, k, "batt_charge_bit", bit=b)) for b in range(B)],
                    [m.add_var(VariableId(SHORT_TERM, i, k, "batt_discharge_bit", bit=b)) for b in range(B)],
                )

    def power_terms(unit, pmin, pmax, i, k):
        """(items, const): On steps carry pmin as a constant plus bit terms."""
        if not on_grid[(unit, i, k)]:
            return [], 0.0
        step = _power_step(pmin, pmax, B)
        return [(b_idx, step * (1 << b)) for b, b_idx in enumerate(pbits[(unit, i, k)])], pmin

    def batt_expr(i, k):
        ch_bits, dis_bits = bbits[(i, k)]
        ch_step = d.p_ch_max / ((1 << B) - 1) if d.p_ch_max > 0 else 0.0
        dis_step = d.p_dis_max / ((1 << B) - 1) if d.p_dis_max > 0 else 0.0
        return (
            [(b_idx, ch_step * (1 << b)) for b, b_idx in enumerate(ch_bits)],
            [(b_idx, dis_step * (1 << b)) for b, b_idx in enumerate(dis_bits)],
        )

    # --- fluctuation terms: |P_k - P_{k-1}| via non-negative deviation pairs ---
    live = {"fc": state.fc_power, "el": state.el_power}
    for unit, pmin, pmax in units:
        step = _power_step(pmin, pmax, B)
        for i in range(n):
            for k in range(S):
                cur_items, cur_const = power_terms(unit, pmin, pmax, i, k)
                if k == 0:
                    prev_items, prev_const = [], float(live[unit][i])
                else:
                    prev_items, prev_const = power_terms(unit, pmin, pmax, i, k - 1)
                if not cur_items and not prev_items:
                    m.obj_offset += c.w_fluct * abs(cur_const - prev_const)
                    continue
                # deviation encoding: bits on the power grid plus one pmin-weight bit
                dev = {}
                for sign in ("pos", "neg"):
                    terms = [
                        (m.add_var(VariableId(SHORT_TERM, i, k, "slack_bit", bit=b, tag=(f"fluct_{unit}_{sign}",))),
                         step * (1 << b))
                        for b in range(B)
                    ]
                    if pmin > 0.0:
                        terms.append(
                            (m.add_var(VariableId(SHORT_TERM, i, k, "slack_bit", bit=B, tag=(f"fluct_{unit}_{sign}",))),
                             pmin)
                        )
                    dev[sign] = terms
                link = list(cur_items) + [(idx, -a) for idx, a in prev_items]
                link += [(idx, -a) for idx, a in dev["pos"]]
                link += [(idx, a) for idx, a in dev["neg"]]
                m.add_constraint(
                    "fluct_link", "eq", link, prev_const - cur_const, label=(unit, i, k)
                )
                for idx, a in dev["pos"] + dev["neg"]:
                    m.add_lin(idx, c.w_fluct * a)

    # --- battery, SOC, hydrogen, balance ---
    for i in range(n):
        if scenario.include_battery:
            acc = []
            for k in range(S):
                y_ch, y_dis = bflags[(i, k)]
                ch, dis = batt_expr(i, k)
                m.add_constraint("batt_excl", "le", [(y_ch, 1.0), (y_dis, 1.0)], 1.0, label=(i, k))
                for b_idx, _ in ch:
                    m.add_constraint("batt_gate", "le", [(b_idx, 1.0), (y_ch, -1.0)], 0.0, label=(i, k, b_idx))
                for b_idx, _ in dis:
                    m.add_constraint("batt_gate", "le", [(b_idx, 1.0), (y_dis, -1.0)], 0.0, label=(i, k, b_idx))
                acc = acc + [(idx, d.eta_ch * a * dt / d.batt_capacity) for idx, a in ch]
                acc = acc + [(idx, -a * dt / (d.eta_dis * d.batt_capacity)) for idx, a in dis]
                m.add_constraint("soc_max", "le", list(acc), d.soc_max - state.soc[i], label=(i, k))
                m.add_constraint("soc_min", "le", [(idx, -a) for idx, a in acc], state.soc[i] - d.soc_min, label=(i, k))
                m.add_square(acc, state.soc[i] - d.soc_target, c.w_soc)
        else:
            for k in range(S):
                m.obj_offset += c.w_soc * (state.soc[i] - d.soc_target) ** 2

    h_acc = []
    h_const = state.hydrogen
    for k in range(S):
        for i in range(n):
            for unit, pmin, pmax in units:
                items, const = power_terms(unit, pmin, pmax, i, k)
                sgn = d.eta_prod if unit == "el" else -d.eta_cons
                h_acc += [(idx, sgn * a * dt) for idx, a in items]
                h_const += sgn * const * dt
        m.add_constraint("h_max", "le", list(h_acc), d.h_max - h_const, label=(k,))
        m.add_constraint("h_min", "le", [(idx, -a) for idx, a in h_acc], h_const - d.h_min, label=(k,))
        for idx, a in h_acc:
            m.add_lin(idx, -c.w_hydrogen * a / d.h_max)
        m.obj_offset += -c.w_hydrogen * h_const / d.h_max

    for i in range(n):
        for k in range(S):
            items = []
            const = 0.0
            fc_items, fc_const = power_terms("fc", d.p_fc_min, d.p_fc_max, i, k)
            items += fc_items
            const += fc_const
            if scenario.include_el:
                el_items, el_const = power_terms("el", d.p_el_min, d.p_el_max, i, k)
                items += [(idx, -a) for idx, a in el_items]
                const -= el_const
            if scenario.include_battery:
                ch, dis = batt_expr(i, k)
                items += [(idx, a) for idx, a in dis]
                items += [(idx, -a) for idx, a in ch]
            bound = float(forecasts.loads[k, i] - forecasts.pv[k] - forecasts.wt[k]) - const
            m.add_constraint("balance", "eq", items, bound, soft_weight=c.w_slack_balance, label=(i, k))

    m.meta = {
        "scenario": scenario,
        "initial": state.copy(),
        "forecast": forecasts,
        "commitments": commitments,
        "on_grid": on_grid,
        "pbits": pbits,
        "bflags": bflags,
        "bbits": bbits,
        "units": units,
        "horizon": S,
    }
    return m


def _bits_value(x, bit_idx):
    return sum((1 << b) * int(round(float(x[idx]))) for b, idx in enumerate(bit_idx))


def decode_day_ahead(assignment, model: ConstrainedModel) -> CommitmentSchedule:
    """Read the one-hot mode triples back out of a binary assignment."""
    if model.stage != DAY_AHEAD:
        raise LengthMismatch("not a day-ahead model")
    x = np.asarray(assignment, float)
    if x.shape[0] < model.n_vars:
        raise LengthMismatch(f"assignment length {x.shape[0]} < {model.n_vars}")
    scenario = model.meta["scenario"]
    T = model.meta["horizon"]
    n = scenario.n_households
    fc_modes = np.full((T, n), int(Mode.OFF), np.int8)
    el_modes = np.full((T, n), int(Mode.OFF), np.int8)
    for i in range(n):
        for t in range(T):
            for unit, target in (("fc", fc_modes), ("el", el_modes)):
                if (unit, i, t) not in model.meta["state"]:
                    continue
                trip = model.meta["state"][(unit, i, t)]
                vals = [int(round(float(x[idx]))) for idx in trip]
                if sum(vals) != 1:
                    raise InvalidOneHot(f"{unit} state triple {vals} at household {i}, hour {t}")
                target[t, i] = int((Mode.ON, Mode.STANDBY, Mode.OFF)[vals.index(1)])
    return CommitmentSchedule(model.meta["start_hour"], fc_modes, el_modes)


def _derive_balance_slack(supply_minus_load):
    unmet = np.maximum(-supply_minus_load, 0.0)
    curtail = np.maximum(supply_minus_load, 0.0)
    return unmet, curtail


def decode_day_ahead_dispatch(assignment, model: ConstrainedModel) -> DispatchPlan:
    """Hourly dispatch implied by the day-ahead assignment (powers from the
    bit encodings, slack derived exactly from the balance residual)."""
    x = np.asarray(assignment, float)
    scenario = model.meta["scenario"]
    d = scenario.device
    fc = model.meta["forecast"]
    T = model.meta["horizon"]
    n = scenario.n_households
    B = scenario.power_bits
    schedule = decode_day_ahead(assignment, model)

    fc_power = np.zeros((T, n))
    el_power = np.zeros((T, n))
    p_ch = np.zeros((T, n))
    p_dis = np.zeros((T, n))
    for i in range(n):
        for t in range(T):
            if Mode(int(schedule.fc_modes[t, i])) == Mode.ON:
                v = _bits_value(x, model.meta["pbits"][("fc", i, t)])
                fc_power[t, i] = d.p_fc_min + (d.p_fc_max - d.p_fc_min) * v / ((1 << B) - 1)
            if scenario.include_el and Mode(int(schedule.el_modes[t, i])) == Mode.ON:
                v = _bits_value(x, model.meta["pbits"][("el", i, t)])
                el_power[t, i] = d.p_el_min + (d.p_el_max - d.p_el_min) * v / ((1 << B) - 1)
            if scenario.include_battery:
                y_ch, y_dis = model.meta["bflags"][(i, t)]
                ch_bits, dis_bits = model.meta["bbits"][(i, t)]
                if int(round(float(x[y_ch]))):
                    p_ch[t, i] = d.p_ch_max * _bits_value(x, ch_bits) / ((1 << B) - 1)
                if int(round(float(x[y_dis]))):
                    p_dis[t, i] = d.p_dis_max * _bits_value(x, dis_bits) / ((1 << B) - 1)

    supply = fc.pv[:, None] + fc.wt[:, None] + fc_power - el_power + p_dis - p_ch - fc.loads
    unmet, curtail = _derive_balance_slack(supply)
    return DispatchPlan(fc.start_slot, fc.step_s, fc_power, el_power, p_ch, p_dis, unmet, curtail)


def decode_short_term(assignment, model: ConstrainedModel) -> DispatchPlan:
    """Power setpoints per 15-min step from a short-term assignment."""
    if model.stage != SHORT_TERM:
        raise LengthMismatch("not a short-term model")
    x = np.asarray(assignment, float)
    if x.shape[0] < model.n_vars:
        raise LengthMismatch(f"assignment length {x.shape[0]} < {model.n_vars}")
    scenario = model.meta["scenario"]
    d = scenario.device
    fc = model.meta["forecast"]
    S = model.meta["horizon"]
    n = scenario.n_households
    B = scenario.power_bits
    on_grid = model.meta["on_grid"]

    fc_power = np.zeros((S, n))
    el_power = np.zeros((S, n))
    p_ch = np.zeros((S, n))
    p_dis = np.zeros((S, n))
    for i in range(n):
        for k in range(S):
            if on_grid[("fc", i, k)]:
                v = _bits_value(x, model.meta["pbits"][("fc", i, k)])
                fc_power[k, i] = d.p_fc_min + (d.p_fc_max - d.p_fc_min) * v / ((1 << B) - 1)
            if scenario.include_el and on_grid[("el", i, k)]:
                v = _bits_value(x, model.meta["pbits"][("el", i, k)])
                el_power[k, i] = d.p_el_min + (d.p_el_max - d.p_el_min) * v / ((1 << B) - 1)
            if scenario.include_battery:
                y_ch, y_dis = model.meta["bflags"][(i, k)]
                ch_bits, dis_bits = model.meta["bbits"][(i, k)]
                if int(round(float(x[y_ch]))):
                    p_ch[k, i] = d.p_ch_max * _bits_value(x, ch_bits) / ((1 << B) - 1)
                if int(round(float(x[y_dis]))):
                    p_dis[k, i] = d.p_dis_max * _bits_value(x, dis_bits) / ((1 << B) - 1)

    supply = fc.pv[:, None] + fc.wt[:, None] + fc_power - el_power + p_dis - p_ch - fc.loads
    unmet, curtail = _derive_balance_slack(supply)
    return DispatchPlan(fc.start_slot, fc.step_s, fc_power, el_power, p_ch, p_dis, unmet, curtail)


def dump_model(model: ConstrainedModel) -> str:
    """Human-readable LP-style listing for --dump-model debugging."""
    def name(i):
        v = model.variables[i]
        tag = f"[{'/'.join(map(str, v.tag))}]" if v.tag else ""
        return f"{v.role}{tag}_h{v.household}_t{v.time_index}_b{v.bit}"

    lines = [f"\\ stage: {model.stage}, vars: {model.n_vars}", "min:"]
    terms = [f"{c:+.6g} {name(i)}" for i, c in sorted(model.lin_obj.items())]
    terms += [f"{c:+.6g} {name(i)}*{name(j)}" for (i, j), c in sorted(model.quad_obj.items())]
    terms.append(f"{model.obj_offset:+.6g}")
    lines.append("  " + " ".join(terms))
    lines.append("subject to:")
    for con in model.constraints:
        expr = " ".join(f"{a:+.6g} {name(int(i))}" for i, a in zip(con.idx, con.coef))
        op = "=" if con.sense == "eq" else "<="
        soft = f"  (soft w={con.soft_weight:g})" if con.soft_weight is not None else ""
        lines.append(f"  {con.family}{list(con.label)}: {expr} {op} {con.bound:.6g}{soft}")
    return "\n".join(lines)


def _snap_power(target, pmin, pmax, bits):
    """Nearest on-grid power level; returns (bit value, power)."""
    step = _power_step(pmin, pmax, bits)
    v = int(round((min(max(target, pmin), pmax) - pmin) / step))
    v = min(max(v, 0), (1 << bits) - 1)
    return v, pmin + step * v


def _set_bits(x, bit_idx, value):
    for b, idx in enumerate(bit_idx):
        x[idx] = (value >> b) & 1


def _greedy_bits(x, weighted_bits, target):
    """Set bits (idx, weight) greedily, largest weight first, without
    exceeding target. Returns the achieved value."""
    achieved = 0.0
    for idx, w in sorted(weighted_bits, key=lambda t: -t[1]):
        if w <= target - achieved + 1e-9:
            x[idx] = 1
            achieved += w
    return achieved


def seed_assignment(model: ConstrainedModel) -> np.ndarray:
    """Deterministic, plant-feasible warm-start assignment.

    Day-ahead: a greedy commitment heuristic — units route toward On
    through Standby when the forecast shows a deficit (FC) or surplus
    (EL), honoring the state machine, minimum durations and the shared
    tank; powers track the net need on the bit grid; battery idle.
    Short-term: committed-On units track the net need, battery absorbs
    the remainder within SOC headroom, deviation bits set consistently.
    """
    if model.stage == DAY_AHEAD:
        return _seed_day_ahead(model)
    return _seed_short_term(model)


def _seed_day_ahead(model: ConstrainedModel) -> np.ndarray:
    scenario = model.meta["scenario"]
    initial = model.meta["initial"]
    fc = model.meta["forecast"]
    d = scenario.device
    n = scenario.n_households
    T = model.meta["horizon"]
    B = scenario.power_bits
    dt = scenario.day_ahead_step_s / 3600.0
    x = np.zeros(model.n_vars, np.int8)

    modes = {
        "fc": [Mode(int(initial.fc_mode[i])) for i in range(n)],
        "el": [Mode(int(initial.el_mode[i])) for i in range(n)],
    }
    ages = {
        "fc": [(int(initial.fc_on_age[i]), int(initial.fc_off_age[i])) for i in range(n)],
        "el": [(int(initial.el_on_age[i]), int(initial.el_off_age[i])) for i in range(n)],
    }
    mins = {"fc": (d.t_on_min_fc, d.t_off_min_fc), "el": (d.t_on_min_el, d.t_off_min_el)}
    tank = initial.hydrogen
    col = {Mode.ON: 0, Mode.STANDBY: 1, Mode.OFF: 2}

    def advance(unit, i, want_on):
        """One greedy hour of the unit automaton; only legal edges taken."""
        prev = modes[unit][i]
        if want_on:
            desired = Mode.ON if prev == Mode.STANDBY else (Mode.STANDBY if prev == Mode.OFF else prev)
        else:
            desired = Mode.STANDBY if prev == Mode.ON else (Mode.OFF if prev == Mode.STANDBY else prev)
        try:
            event = plant.transition_event(prev, desired)
            new_mode, new_ages = plant.step_unit(prev, event, ages[unit][i], mins[unit])
        except (plant.IllegalTransition, plant.InvalidEdge):
            new_mode, new_ages = plant.step_unit(prev, plant.TransitionEvent.NONE, ages[unit][i], mins[unit])
        modes[unit][i] = new_mode
        ages[unit][i] = new_ages

    for t in range(T):
        for i in range(n):
            deficit = float(fc.loads[t, i] - fc.pv[t] - fc.wt[t])
            fc_floor = d.eta_cons * d.p_fc_min * dt
            want_fc = deficit >= max(0.5 * d.p_fc_min, 0.05) and tank - fc_floor >= d.h_min
            advance("fc", i, want_fc)
            if scenario.include_el:
                el_ceiling = d.eta_prod * d.p_el_min * dt
                want_el = -deficit >= max(d.p_el_min, 0.05) and tank + el_ceiling <= d.h_max
                advance("el", i, want_el)

            for unit, pmin, pmax, *_ in model.meta["units"]:
                mode = modes[unit][i]
                trip = model.meta["state"][(unit, i, t)]
                x[trip[col[mode]]] = 1
                if mode != Mode.ON:
                    continue
                target = deficit if unit == "fc" else -deficit
                if unit == "fc":
                    # cap consumption at what the tank can supply
                    cap = (tank - d.h_min) / (d.eta_cons * dt) if d.eta_cons > 0 else pmax
                    v, p = _snap_power(min(target, cap), pmin, pmax, B)
                    while p > pmin and tank - d.eta_cons * p * dt < d.h_min - 1e-12:
                        v -= 1
                        p = pmin + _power_step(pmin, pmax, B) * v
                    tank -= d.eta_cons * p * dt
                else:
                    cap = (d.h_max - tank) / (d.eta_prod * dt) if d.eta_prod > 0 else pmax
                    v, p = _snap_power(min(target, cap), pmin, pmax, B)
                    while p > pmin and tank + d.eta_prod * p * dt > d.h_max + 1e-12:
                        v -= 1
                        p = pmin + _power_step(pmin, pmax, B) * v
                    tank += d.eta_prod * p * dt
                _set_bits(x, model.meta["pbits"][(unit, i, t)], v)
    return x


def _seed_short_term(model: ConstrainedModel) -> np.ndarray:
    scenario = model.meta["scenario"]
    state = model.meta["initial"]
    fc = model.meta["forecast"]
    d = scenario.device
    n = scenario.n_households
    S = model.meta["horizon"]
    B = scenario.power_bits
    dt = fc.step_s / 3600.0
    on_grid = model.meta["on_grid"]
    x = np.zeros(model.n_vars, np.int8)

    soc = state.soc.copy()
    tank = state.hydrogen
    prev_power = {"fc": state.fc_power.copy(), "el": state.el_power.copy()}

    for k in range(S):
        for i in range(n):
            deficit = float(fc.loads[k, i] - fc.pv[k] - fc.wt[k])
            powers = {"fc": 0.0, "el": 0.0}
            for unit, pmin, pmax in model.meta["units"]:
                if not on_grid[(unit, i, k)]:
                    continue
                target = deficit if unit == "fc" else -deficit
                if unit == "fc":
                    cap = (tank - d.h_min) / (d.eta_cons * dt) if d.eta_cons > 0 else pmax
                    v, p = _snap_power(min(target, cap), pmin, pmax, B)
                    tank -= d.eta_cons * p * dt
                else:
                    cap = (d.h_max - tank) / (d.eta_prod * dt) if d.eta_prod > 0 else pmax
                    v, p = _snap_power(min(target, cap), pmin, pmax, B)
                    tank += d.eta_prod * p * dt
                _set_bits(x, model.meta["pbits"][(unit, i, k)], v)
                powers[unit] = p
                deficit -= p if unit == "fc" else -p

            if scenario.include_battery:
                y_ch, y_dis = model.meta["bflags"][(i, k)]
                ch_bits, dis_bits = model.meta["bbits"][(i, k)]
                dis_grid = d.p_dis_max / ((1 << B) - 1) if d.p_dis_max > 0 else 0.0
                ch_grid = d.p_ch_max / ((1 << B) - 1) if d.p_ch_max > 0 else 0.0
                if deficit > 0.0 and dis_grid > 0.0:
                    avail = (soc[i] - d.soc_min) * d.batt_capacity * d.eta_dis / dt
                    v = int(min(deficit, d.p_dis_max, max(0.0, avail)) / dis_grid)
                    if v > 0:
                        x[y_dis] = 1
                        _set_bits(x, dis_bits, v)
                        soc[i] -= dis_grid * v * dt / (d.eta_dis * d.batt_capacity)
                elif deficit < 0.0 and ch_grid > 0.0:
                    head = (d.soc_max - soc[i]) * d.batt_capacity / (d.eta_ch * dt)
                    v = int(min(-deficit, d.p_ch_max, max(0.0, head)) / ch_grid)
                    if v > 0:
                        x[y_ch] = 1
                        _set_bits(x, ch_bits, v)
                        soc[i] += d.eta_ch * ch_grid * v * dt / d.batt_capacity

            # deviation bits consistent with the chosen powers
            for unit, pmin, pmax in model.meta["units"]:
                prev = float(prev_power[unit][i])
                cur = powers[unit]
                delta = prev - cur
                sign = "pos" if delta < 0 else "neg"
                prev_power[unit][i] = cur
                if delta == 0.0:
                    continue
                weighted = _dev_bits(model, unit, i, k, sign)
                if weighted:
                    _greedy_bits(x, weighted, abs(delta))
    return x


def _dev_bits(model: ConstrainedModel, unit, i, k, sign):
    """Indices and weights of the deviation-pair bits for one unit step."""
    scenario = model.meta["scenario"]
    d = scenario.device
    B = scenario.power_bits
    pmin, pmax = (d.p_fc_min, d.p_fc_max) if unit == "fc" else (d.p_el_min, d.p_el_max)
    step = _power_step(pmin, pmax, B)
    tag = f"fluct_{unit}_{sign}"
    out = []
    for j, v in enumerate(model.variables):
        if v.role == "slack_bit" and v.household == i and v.time_index == k and v.tag == (tag,):
            out.append((j, step * (1 << v.bit) if v.bit < B else pmin))
    return out
