"""Problem-instance definition: device/cost parameters, time series
ingestion, synthetic profile generation and JSON config parsing.

All types here are immutable after construction and safe to share.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace, asdict
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import MissingSeries, ParseError, ValidationError

SLOT_SECONDS = 900.0       # base short-term resolution
SLOTS_PER_HOUR = 4
SLOTS_PER_DAY = 96


@dataclass(frozen=True)
class DeviceParams:
    """Per-household device ratings plus the shared hydrogen tank."""

    p_fc_min: float = 0.2      # kW
    p_fc_max: float = 2.0      # kW
    p_el_min: float = 0.2      # kW
    p_el_max: float = 2.0      # kW
    t_on_min_fc: int = 2       # hours
    t_off_min_fc: int = 2
    t_on_min_el: int = 2
    t_off_min_el: int = 2
    batt_capacity: float = 10.0  # kWh
    eta_ch: float = 0.95
    eta_dis: float = 0.95
    p_ch_max: float = 3.0      # kW
    p_dis_max: float = 3.0     # kW
    soc_min: float = 0.2
    soc_max: float = 0.9
    soc_init: float = 0.6
    soc_target: float = 0.7
    eta_prod: float = 0.018    # kg H2 per kWh into the EL
    eta_cons: float = 0.060    # kg H2 per kWh out of the FC
    h_min: float = 0.0         # kg
    h_max: float = 15.0        # kg
    h_init: float = 1.0        # kg

    def __post_init__(self):
        def check(cond, name, msg):
            if not cond:
                raise ValidationError(name, msg)

        check(0.0 <= self.p_fc_min < self.p_fc_max, "p_fc_min", "need 0 <= p_fc_min < p_fc_max")
        check(0.0 <= self.p_el_min < self.p_el_max, "p_el_min", "need 0 <= p_el_min < p_el_max")
        for name in ("t_on_min_fc", "t_off_min_fc", "t_on_min_el", "t_off_min_el"):
            check(int(getattr(self, name)) >= 1, name, "must be a positive integer number of hours")
        check(self.batt_capacity > 0.0, "batt_capacity", "must be > 0")
        check(0.0 < self.eta_ch <= 1.0, "eta_ch", "must be in (0, 1]")
        check(0.0 < self.eta_dis <= 1.0, "eta_dis", "must be in (0, 1]")
        check(self.p_ch_max >= 0.0, "p_ch_max", "must be >= 0")
        check(self.p_dis_max >= 0.0, "p_dis_max", "must be >= 0")
        check(
            0.0 <= self.soc_min < self.soc_target < self.soc_max <= 1.0,
            "soc_min",
            "need 0 <= soc_min < soc_target < soc_max <= 1",
        )
        check(self.soc_min <= self.soc_init <= self.soc_max, "soc_init", "must lie within the SOC bounds")
        check(self.eta_prod > 0.0, "eta_prod", "must be > 0")
        check(self.eta_cons > 0.0, "eta_cons", "must be > 0")
        check(self.h_min <= self.h_init <= self.h_max, "h_init", "need h_min <= h_init <= h_max")


@dataclass(frozen=True)
class CostParams:
    """Interval/transition cost coefficients and objective weights.

    The cost coefficients implement the standby + hot-transition +
    startup/shutdown structure of the FC/EL cost functions; the numeric
    defaults are engineering choices (the source problem names the
    symbols but gives no values).
    """

    c_standby_fc: float = 0.05   # $/interval in standby
    c_standby_el: float = 0.05
    c_hot_fc: float = 0.2        # $ per Off<->Standby edge
    c_hot_el: float = 0.2
    c_trans_fc: float = 0.1      # $ per Standby<->On edge
    c_trans_el: float = 0.1
    w_cost: float = 1.0
    w_hydrogen: float = 1.0
    w_soc: float = 1.0
    w_fluct: float = 1.0
    w_slack_balance: float = 1000.0  # penalty weight on unmet/curtailed power

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0.0:
                raise ValidationError(name, "must be >= 0")


@dataclass(frozen=True)
class TimeSeries:
    start: datetime
    step_s: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, float)
        object.__setattr__(self, "values", vals)
        vals.setflags(write=False)
        if self.step_s <= 0:
            raise ValidationError("step", "must be > 0")
        if vals.size == 0:
            raise ValidationError("values", "must be non-empty")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("values", "contains NaN/inf entries")

    def __len__(self):
        return self.values.size

    def value_equal(self, other: "TimeSeries") -> bool:
        return (
            self.start == other.start
            and self.step_s == other.step_s
            and self.values.shape == other.values.shape
            and bool(np.array_equal(self.values, other.values))
        )

    def resample(self, step_s: float) -> "TimeSeries":
        """Linear interpolation onto a new constant step, same span."""
        if step_s == self.step_s:
            return self
        span = self.step_s * (len(self) - 1)
        n_new = int(span // step_s) + 1
        t_old = np.arange(len(self)) * self.step_s
        t_new = np.arange(n_new) * step_s
        return TimeSeries(self.start, step_s, np.interp(t_new, t_old, self.values))

    def to_dict(self):
        return {
            "start": self.start.isoformat(),
            "step_s": self.step_s,
            "values": [float(v) for v in self.values],
        }

    @staticmethod
    def from_dict(d) -> "TimeSeries":
        try:
            return TimeSeries(datetime.fromisoformat(d["start"]), float(d["step_s"]), np.asarray(d["values"], float))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed time series record: {exc}") from exc


def read_series_csv(path) -> TimeSeries:
    """Read a `timestamp,value` CSV: ISO-8601 stamps, strictly increasing,
    constant step."""
    path = Path(path)
    if not path.exists():
        raise MissingSeries(str(path))
    stamps, values = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:2]] != ["timestamp", "value"]:
            raise ParseError(f"{path}: expected 'timestamp,value' header")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                stamps.append(datetime.fromisoformat(row[0].strip()))
                values.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if len(values) < 2:
        raise ParseError(f"{path}: need at least two rows")
    deltas = np.diff([s.timestamp() for s in stamps])
    if np.any(deltas <= 0):
        raise ParseError(f"{path}: timestamps must be strictly increasing")
    if not np.allclose(deltas, deltas[0]):
        raise ParseError(f"{path}: time step must be constant")
    return TimeSeries(stamps[0], float(deltas[0]), np.asarray(values))


def write_series_csv(path, series: TimeSeries):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "value"])
        for k, v in enumerate(series.values):
            writer.writerow([(series.start + timedelta(seconds=k * series.step_s)).isoformat(), repr(float(v))])


@dataclass(frozen=True)
class Scenario:
    n_households: int
    device: DeviceParams
    costs: CostParams
    pv_rated: float
    wt_rated: float
    eta_pv_conv: float
    v_cut_in: float
    v_rated: float
    v_cut_out: float
    ambient_temp: TimeSeries
    insolation: TimeSeries
    wind_speed: TimeSeries
    loads: tuple  # one TimeSeries per household
    day_ahead_step_s: float = 3600.0
    short_term_step_s: float = SLOT_SECONDS
    day_ahead_horizon: int = 24
    short_term_horizon: int = 8
    power_bits: int = 4
    slack_bits: int = 4
    rng_seed: int = 0
    forecast_noise_sigma: float = 0.0
    include_el: bool = True       # reduced instances for oracle-sized models
    include_battery: bool = True

    def __post_init__(self):
        def check(cond, name, msg):
            if not cond:
                raise ValidationError(name, msg)

        check(self.n_households >= 1, "n_households", "must be >= 1")
        check(len(self.loads) == self.n_households, "loads", "must have exactly one series per household")
        check(self.v_cut_in < self.v_rated <= self.v_cut_out, "v_cut_in", "need v_cut_in < v_rated <= v_cut_out")
        check(0.0 < self.eta_pv_conv <= 1.0, "eta_pv_conv", "must be in (0, 1]")
        check(self.pv_rated >= 0.0, "pv_rated", "must be >= 0")
        check(self.wt_rated >= 0.0, "wt_rated", "must be >= 0")
        check(self.power_bits >= 1, "power_bits", "must be >= 1")
        check(self.slack_bits >= 1, "slack_bits", "must be >= 1")
        check(self.day_ahead_horizon >= 1, "day_ahead_horizon", "must be >= 1")
        check(self.short_term_horizon >= 1, "short_term_horizon", "must be >= 1")
        object.__setattr__(self, "loads", tuple(self.loads))
        # normalize every series onto the short-term grid
        for name in ("ambient_temp", "insolation", "wind_speed"):
            object.__setattr__(self, name, getattr(self, name).resample(self.short_term_step_s))
        object.__setattr__(self, "loads", tuple(s.resample(self.short_term_step_s) for s in self.loads))

    @property
    def n_slots(self) -> int:
        n = min(len(self.ambient_temp), len(self.insolation), len(self.wind_speed))
        return min([n] + [len(s) for s in self.loads])

    def require_slots(self, count: int):
        if self.n_slots < count:
            raise ValidationError("series", f"cover {self.n_slots} slots, need {count}")

    def value_equal(self, other: "Scenario") -> bool:
        if (self.n_households, self.device, self.costs) != (other.n_households, other.device, other.costs):
            return False
        scalars = (
            "pv_rated", "wt_rated", "eta_pv_conv", "v_cut_in", "v_rated", "v_cut_out",
            "day_ahead_step_s", "short_term_step_s", "day_ahead_horizon", "short_term_horizon",
            "power_bits", "slack_bits", "rng_seed", "forecast_noise_sigma", "include_el", "include_battery",
        )
        if any(getattr(self, k) != getattr(other, k) for k in scalars):
            return False
        if not all(
            getattr(self, k).value_equal(getattr(other, k))
            for k in ("ambient_temp", "insolation", "wind_speed")
        ):
            return False
        return all(a.value_equal(b) for a, b in zip(self.loads, other.loads))


def synth_profiles(seed: int, days: int, n_households: int):
    """Deterministic synthetic weather and load profiles on the 15-min grid.

    Returns (ambient, insolation, wind, loads). Insolation follows a
    diurnal half-sine (exactly zero at night), wind is a smoothed
    non-negative series, and each household load is a shared base diurnal
    curve plus seeded random appliance events.
    """
    if days < 1 or n_households < 1:
        raise ValidationError("days", "days and n_households must be >= 1")
    rng = np.random.default_rng(seed)
    n = days * SLOTS_PER_DAY
    start = datetime(2024, 1, 1)
    hour = (np.arange(n) % SLOTS_PER_DAY) / SLOTS_PER_HOUR

    ambient = 20.0 + 7.0 * np.sin(np.pi * (hour - 9.0) / 12.0) + rng.normal(0, 0.5, n)

    elevation = np.where((hour > 6.0) & (hour < 18.0), np.sin(np.pi * (hour - 6.0) / 12.0), 0.0)
    cloud = np.clip(1.0 - np.abs(rng.normal(0, 0.25, n)), 0.0, 1.0)
    insolation = np.clip(elevation * cloud, 0.0, 1.0)

    wind_raw = rng.rayleigh(5.0, n)
    kernel = np.ones(8) / 8.0
    wind = np.convolve(wind_raw, kernel, mode="same")
    wind = np.maximum(wind, 0.0)

    base = (
        0.35
        + 0.45 * np.exp(-0.5 * ((hour - 7.5) / 1.5) ** 2)
        + 0.75 * np.exp(-0.5 * ((hour - 19.0) / 2.0) ** 2)
    )
    loads = []
    for _ in range(n_households):
        load = base.copy()
        n_events = int(rng.integers(2, 5)) * days
        for _ in range(n_events):
            t0 = int(rng.integers(0, n))
            dur = int(rng.integers(1, 9))  # 15 min .. 2 h
            amp = float(rng.uniform(0.3, 1.5))
            load[t0:t0 + dur] += amp
        load += np.abs(rng.normal(0, 0.03, n))
        loads.append(TimeSeries(start, SLOT_SECONDS, np.maximum(load, 0.0)))

    return (
        TimeSeries(start, SLOT_SECONDS, ambient),
        TimeSeries(start, SLOT_SECONDS, insolation),
        TimeSeries(start, SLOT_SECONDS, wind),
        tuple(loads),
    )


_SCENARIO_SCALARS = {
    "n_households": int,
    "pv_rated": float,
    "wt_rated": float,
    "eta_pv_conv": float,
    "v_cut_in": float,
    "v_rated": float,
    "v_cut_out": float,
    "day_ahead_step_s": float,
    "short_term_step_s": float,
    "day_ahead_horizon": int,
    "short_term_horizon": int,
    "power_bits": int,
    "slack_bits": int,
    "rng_seed": int,
    "forecast_noise_sigma": float,
    "include_el": bool,
    "include_battery": bool,
}

_SCALAR_DEFAULTS = {
    "n_households": 1,
    "pv_rated": 3.0,
    "wt_rated": 2.0,
    "eta_pv_conv": 0.9,
    "v_cut_in": 3.0,
    "v_rated": 8.0,
    "v_cut_out": 22.0,
}


def scenario_from_dict(cfg: dict, csv_root=None) -> Scenario:
    if not isinstance(cfg, dict):
        raise ParseError("scenario config must be a JSON object")
    known = set(_SCENARIO_SCALARS) | {"device", "costs", "profiles"}
    unknown = set(cfg) - known
    if unknown:
        raise ParseError(f"unknown config keys: {sorted(unknown)}")

    kwargs = {}
    for name, conv in _SCENARIO_SCALARS.items():
        if name in cfg:
            try:
                kwargs[name] = conv(cfg[name])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"bad value for {name}: {exc}") from exc
        elif name in _SCALAR_DEFAULTS:
            kwargs[name] = _SCALAR_DEFAULTS[name]

    try:
        device = DeviceParams(**cfg.get("device", {}))
        costs = CostParams(**cfg.get("costs", {}))
    except TypeError as exc:
        raise ParseError(f"bad device/costs block: {exc}") from exc

    profiles = cfg.get("profiles", {"synthetic": {}})
    n_households = kwargs.get("n_households", 1)
    if "synthetic" in profiles:
        synth = profiles["synthetic"]
        seed = int(synth.get("seed", cfg.get("rng_seed", 0)))
        days = int(synth.get("days", 7))
        ambient, insolation, wind, loads = synth_profiles(seed, days, n_households)
    elif "inline" in profiles:
        inline = profiles["inline"]
        try:
            ambient = TimeSeries.from_dict(inline["ambient"])
            insolation = TimeSeries.from_dict(inline["insolation"])
            wind = TimeSeries.from_dict(inline["wind"])
            loads = tuple(TimeSeries.from_dict(d) for d in inline["loads"])
        except KeyError as exc:
            raise ParseError(f"inline profiles missing {exc}") from exc
    else:
        root = Path(csv_root or os.environ.get("HYDROQ_DATA_DIR", "."))
        try:
            ambient = read_series_csv(root / profiles["ambient_csv"])
            insolation = read_series_csv(root / profiles["insolation_csv"])
            wind = read_series_csv(root / profiles["wind_csv"])
            loads = tuple(read_series_csv(root / p) for p in profiles["load_csvs"])
        except KeyError as exc:
            raise ParseError(f"profiles block missing {exc}") from exc

    return Scenario(
        device=device,
        costs=costs,
        ambient_temp=ambient,
        insolation=insolation,
        wind_speed=wind,
        loads=loads,
        **kwargs,
    )


def scenario_to_dict(s: Scenario) -> dict:
    cfg = {name: getattr(s, name) for name in _SCENARIO_SCALARS}
    cfg["device"] = asdict(s.device)
    cfg["costs"] = asdict(s.costs)
    cfg["profiles"] = {
        "inline": {
            "ambient": s.ambient_temp.to_dict(),
            "insolation": s.insolation.to_dict(),
            "wind": s.wind_speed.to_dict(),
            "loads": [ld.to_dict() for ld in s.loads],
        }
    }
    return cfg


def load_scenario(path) -> Scenario:
    """Load and fully validate a scenario config file (JSON)."""
    path = Path(path)
    if not path.exists():
        raise MissingSeries(f"scenario file not found: {path}")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    csv_root = os.environ.get("HYDROQ_DATA_DIR") or path.parent
    return scenario_from_dict(cfg, csv_root=csv_root)


def save_scenario(path, s: Scenario):
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2)


def with_device(s: Scenario, **overrides) -> Scenario:
    return replace(s, device=replace(s.device, **overrides))
