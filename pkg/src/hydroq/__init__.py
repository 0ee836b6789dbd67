"""Household energy scheduling with hydrogen storage: two-stage
commitment/dispatch models compiled to QUBO form and sampled by a
simulated annealer, with an exact brute-force oracle and a closed-loop
simulator."""

from . import cli, errors, kernels, mpc, plant, qubo, renewables, scenario, solvers, stage_models
from .mpc import TrajectoryLog, run_closed_loop, run_day_ahead_stage, run_short_term_stage
from .plant import Mode, PlantState, TransitionEvent, check_feasibility, initial_state
from .qubo import IsingModel, QuboModel, auto_penalty, compile, to_ising
from .renewables import PvParams, WtParams, pv_power, wt_power
from .scenario import CostParams, DeviceParams, Scenario, TimeSeries, load_scenario, save_scenario
from .solvers import (
    AnnealParams,
    AnnealSolver,
    BruteForceSolver,
    RemoteSolver,
    Sample,
    SampleSet,
    anneal,
    brute_force,
    remote_sample,
    solve,
)
from .stage_models import (
    CommitmentSchedule,
    ConstrainedModel,
    DispatchPlan,
    Forecast,
    build_day_ahead,
    build_short_term,
    decode_day_ahead,
    decode_short_term,
    make_forecast,
)

__version__ = "0.1.0"
