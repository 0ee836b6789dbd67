"""PV and wind-turbine output models.

Pure stateless functions; both accept scalars or numpy arrays for the
environmental inputs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class PvParams:
    eta_conv: float  # converter efficiency, (0, 1]
    p_rated: float   # kW

    def __post_init__(self):
        if not 0.0 < self.eta_conv <= 1.0:
            raise ValidationError("eta_conv", "must be in (0, 1]")
        if self.p_rated <= 0.0:
            raise ValidationError("p_rated", "must be > 0")


@dataclass(frozen=True)
class WtParams:
    p_rated: float   # kW
    v_cut_in: float  # m/s
    v_rated: float   # m/s
    v_cut_out: float  # m/s

    def __post_init__(self):
        if not 0.0 <= self.v_cut_in < self.v_rated <= self.v_cut_out:
            raise ValidationError("v_cut_in", "need 0 <= v_cut_in < v_rated <= v_cut_out")
        if self.p_rated <= 0.0:
            raise ValidationError("p_rated", "must be > 0")


def pv_power(params: PvParams, ambient_temp, insolation):
    """PV output: eta * P_rated * I * (1 - 0.004*(T - 25)), clamped at 0.

    The temperature derate can push the factor negative in extreme heat;
    a panel never sinks power, so the result is floored at zero.
    """
    out = params.eta_conv * params.p_rated * np.asarray(insolation, float) * (
        1.0 - 0.004 * (np.asarray(ambient_temp, float) - 25.0)
    )
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def wt_power(params: WtParams, wind_speed):
    """Piecewise wind-turbine curve: zero outside [cut-in, cut-out], cubic
    ramp up to the rated speed, flat at rated power above it."""
    v = np.asarray(wind_speed, float)
    ramp = ((v - params.v_cut_in) / (params.v_rated - params.v_cut_in)) ** 3
    out = np.where(
        (v < params.v_cut_in) | (v > params.v_cut_out),
        0.0,
        np.where(v < params.v_rated, params.p_rated * ramp, params.p_rated),
    )
    return float(out) if out.ndim == 0 else out
