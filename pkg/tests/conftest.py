import numpy as np
import pytest

from hydroq import plant, scenario as sc


def make_tiny_scenario(seed=3, horizon=3, power_bits=2, slack_bits=2, n_households=1,
                       include_el=False, include_battery=False, p_fc_min=0.0, **device_overrides):
    """Reduced FC-only scenario whose day-ahead model fits the brute-force cap."""
    ambient, insolation, wind, loads = sc.synth_profiles(seed, 1, n_households)
    return sc.Scenario(
        n_households=n_households,
        device=sc.DeviceParams(p_fc_min=p_fc_min, **device_overrides),
        costs=sc.CostParams(),
        pv_rated=3.0, wt_rated=2.0, eta_pv_conv=0.9,
        v_cut_in=3.0, v_rated=8.0, v_cut_out=22.0,
        ambient_temp=ambient, insolation=insolation, wind_speed=wind, loads=loads,
        day_ahead_horizon=horizon,
        power_bits=power_bits,
        slack_bits=slack_bits,
        rng_seed=seed,
        include_el=include_el,
        include_battery=include_battery,
    )


def make_full_scenario(seed=7, days=2, n_households=1):
    return sc.scenario_from_dict({
        "n_households": n_households,
        "rng_seed": seed,
        "profiles": {"synthetic": {"seed": seed, "days": days}},
    })


@pytest.fixture
def tiny_scenario():
    return make_tiny_scenario()


@pytest.fixture
def full_scenario():
    return make_full_scenario()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One explicit pass/fail line per acceptance criterion."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and "::" in nodeid:
                rows.append((nodeid.split("::")[-1], outcome == "passed"))
    if rows:
        terminalreporter.section("acceptance criteria")
        for name, ok in sorted(set(rows)):
            terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}")
