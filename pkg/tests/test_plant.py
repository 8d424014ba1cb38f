import numpy as np
import pytest
from hypothesis import given, strategies as st

from gflsim.params import SystemParams
from gflsim.plant import (PlantInputs, PlantState, SingularStateError, inverter_power,
                          pcc_power_balance, plant_derivative)

P = SystemParams()
finite = st.floats(-1e3, 1e3)


def test_state_round_trip():
    s = PlantState(1.0, -2.0, 1200.0, 3e3)
    assert PlantState.from_array(s.as_array()) == s


def test_derivative_at_rest():
    # zero current, grid voltage matched, no load: everything stays put
    d = plant_derivative(PlantState(0, 0, 1200, 0), PlantInputs(P.V_g, 0, 0, 0), P)
    np.testing.assert_allclose(d, 0, atol=1e-12)


def test_derivative_hand_values():
    s = PlantState(10.0, 2.0, 1000.0, 500.0)
    d = plant_derivative(s, PlantInputs(300.0, 5.0, 2e3, 4e3), P)
    wL = P.L * P.omega_g
    assert d[0] == pytest.approx((-0.1 * 10 + wL * 2 + 300 - 277) / 2e-3)
    assert d[1] == pytest.approx((-0.1 * 2 - wL * 10 + 5) / 2e-3)
    assert d[2] == pytest.approx((2e3 - 1.5 * 277 * 10) / (10e-3 * 1000))
    assert d[3] == pytest.approx((-500 + 1.5 * 277 * 10 - 4e3) / 20e-3)


@pytest.mark.parametrize("V_dc", [0.0, -5.0])
def test_dc_collapse(V_dc):
    with pytest.raises(SingularStateError):
        plant_derivative(PlantState(0, 0, V_dc, 0), PlantInputs(0, 0, 0, 0), P)


@given(i_d=finite, P_L=st.floats(0, 1e5))
def test_power_balance(i_d, P_L):
    b = pcc_power_balance(PlantState(i_d, 0, 1200, 0), P_L, P)
    assert b.P_inv == pytest.approx(1.5 * P.V_g * i_d)
    assert b.P_inv + b.P_net == pytest.approx(P_L, abs=1e-12 * (abs(b.P_inv) + P_L))
    assert inverter_power(i_d, P) == b.P_inv


@given(i_d=finite, i_q=finite, V_dc=st.floats(100, 2000), P_dc=st.floats(0, 1e5))
def test_dc_link_energy(i_d, i_q, V_dc, P_dc):
    # d/dt (C V^2 / 2) equals the DC power mismatch
    d = plant_derivative(PlantState(i_d, i_q, V_dc, 0), PlantInputs(0, 0, P_dc, 0), P)
    assert P.C_dc * V_dc * d[2] == pytest.approx(P_dc - 1.5 * P.V_g * i_d, abs=1e-6)
