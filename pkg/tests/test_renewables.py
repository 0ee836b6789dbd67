import numpy as np
import pytest

from hydroq.errors import ValidationError
from hydroq.renewables import PvParams, WtParams, pv_power, wt_power


def test_pv_reference_point():
    # at 25 degC the temperature correction vanishes
    assert pv_power(PvParams(1.0, 1.0), 25.0, 1.0) == 1.0


def test_pv_derated_point():
    # 0.9 * 2.0 * 0.8 * (1 - 0.004*10) = 1.3824
    p = pv_power(PvParams(0.9, 2.0), 35.0, 0.8)
    assert abs(p - 1.38240) < 1e-12


def test_pv_never_negative():
    # absurdly hot panel would go negative without the clamp
    assert pv_power(PvParams(1.0, 1.0), 300.0, 1.0) == 0.0


def test_pv_vectorized():
    temps = np.array([25.0, 35.0])
    ins = np.array([1.0, 0.8])
    out = pv_power(PvParams(0.9, 2.0), temps, ins)
    assert out.shape == (2,)
    assert abs(out[0] - 1.8) < 1e-12
    assert abs(out[1] - 1.38240) < 1e-12


def test_wt_piecewise_values():
    params = WtParams(p_rated=1.0, v_cut_in=3.0, v_rated=8.0, v_cut_out=22.0)
    speeds = [2.9, 5.5, 8.0, 22.0, 22.1]
    expect = [0.0, 0.125, 1.0, 1.0, 0.0]
    for v, e in zip(speeds, expect):
        assert abs(wt_power(params, v) - e) < 1e-12


def test_wt_cubic_ramp_scales_with_rating():
    params = WtParams(p_rated=4.0, v_cut_in=3.0, v_rated=8.0, v_cut_out=22.0)
    assert abs(wt_power(params, 5.5) - 0.5) < 1e-12  # 0.125 * 4


def test_wt_vectorized():
    params = WtParams(1.0, 3.0, 8.0, 22.0)
    out = wt_power(params, np.array([0.0, 5.5, 10.0, 30.0]))
    assert np.allclose(out, [0.0, 0.125, 1.0, 0.0], atol=1e-12)


def test_param_validation():
    with pytest.raises(ValidationError):
        PvParams(eta_conv=0.0, p_rated=1.0)
    with pytest.raises(ValidationError):
        PvParams(eta_conv=0.9, p_rated=-1.0)
    with pytest.raises(ValidationError):
        WtParams(1.0, v_cut_in=8.0, v_rated=3.0, v_cut_out=22.0)
    with pytest.raises(ValidationError):
        WtParams(1.0, v_cut_in=3.0, v_rated=8.0, v_cut_out=5.0)
