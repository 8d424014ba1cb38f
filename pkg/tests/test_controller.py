import numpy as np
import pytest
from hypothesis import given, strategies as st

from gflsim.controller import (NO_CLAMP, ClampConfig, clip_modulation, controller_step,
                               droop_reference, feedback_linearize, inner_loop,
                               modulation_indices)
from gflsim.params import ControlGains, SystemParams
from gflsim.plant import PlantInputs, PlantState, SingularStateError, plant_derivative

P, G = SystemParams(), ControlGains()
states = st.builds(PlantState, st.floats(-300, 300), st.floats(-100, 100),
                   st.floats(200, 2000), st.floats(-1e5, 1e5))


def test_droop_reference_values():
    assert droop_reference(10e3, G) == pytest.approx(4.0)
    assert droop_reference(-200e3, G) == pytest.approx(88.0)
    clamp = ClampConfig.from_rating(20e3, P)
    assert clamp.i_d_star_max == pytest.approx(48.1348, rel=1e-5)
    assert droop_reference(-200e3, G, clamp) == pytest.approx(clamp.i_d_star_max)
    assert droop_reference(200e3, G, clamp) == pytest.approx(-clamp.i_d_star_max)


def test_clamp_requires_positive_level():
    with pytest.raises(ValueError):
        ClampConfig(True, 0.0)


def test_baseline_operating_point_modulation():
    # i_d = 10 A, i_q = 0 on nominal DC link: |m| is just the grid voltage share
    s = PlantState(10.0, 0.0, 1200.0, G.P_star - 10.0 / G.K_pp)
    out = controller_step(s, G, NO_CLAMP, P)
    assert out.i_d_star == pytest.approx(10.0)
    assert out.m_d == pytest.approx(277 / 600)
    assert out.m_q == pytest.approx(P.L * P.omega_g * 10 / 600)
    assert not out.saturated


@given(states)
def test_closed_loop_is_linear(s):
    """Feedback linearization leaves first-order decoupled current dynamics."""
    out = controller_step(s, G, NO_CLAMP, P)
    d = plant_derivative(s, PlantInputs(out.v_d, out.v_q, 0.0, 0.0), P)
    scale = 1 + abs(s.i_d) + abs(s.i_q) + abs(out.i_d_star)
    assert d[0] * P.L == pytest.approx(-P.R * s.i_d - G.k_d * (s.i_d - out.i_d_star),
                                       abs=1e-9 * scale)
    assert d[1] * P.L == pytest.approx(-(G.k_q + P.R) * s.i_q, abs=1e-9 * scale)


@given(states)
def test_modulation_norm(s):
    out = controller_step(s, G, NO_CLAMP, P)
    assert out.m_norm == pytest.approx(np.hypot(out.v_d, out.v_q) / (P.kappa * s.V_dc))
    assert out.saturated == (out.m_norm > P.m_max)


@given(states)
def test_clip_mode_stays_inside_disc(s):
    out = controller_step(s, G, NO_CLAMP, P, modulation="clip")
    applied = np.hypot(out.v_d, out.v_q) / (P.kappa * s.V_dc)
    assert applied <= P.m_max * (1 + 1e-12) or not out.saturated
    if not out.saturated:
        ref = controller_step(s, G, NO_CLAMP, P)
        assert (out.v_d, out.v_q) == (ref.v_d, ref.v_q)


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_clip_is_radial(m_d, m_q):
    cd, cq = clip_modulation(m_d, m_q, 0.95)
    assert np.hypot(cd, cq) <= 0.95 + 1e-12
    assert cd * m_q == pytest.approx(cq * m_d, abs=1e-12)


def test_array_evaluation_matches_scalar():
    i_d = np.array([1.0, 50.0, -20.0])
    s = PlantState(i_d, np.array([0.0, 3.0, -1.0]), np.full(3, 1100.0), np.zeros(3))
    out = controller_step(s, G, NO_CLAMP, P)
    for k in range(3):
        one = controller_step(PlantState(s.i_d[k], s.i_q[k], 1100.0, 0.0), G, NO_CLAMP, P)
        assert out.m_norm[k] == pytest.approx(one.m_norm)


def test_pieces_compose():
    s = PlantState(5.0, 1.0, 1000.0, 0.0)
    u_d, u_q = inner_loop(s.i_d, s.i_q, 8.0, G)
    assert (u_d, u_q) == pytest.approx((3.6, -1.2))
    v_d, v_q = feedback_linearize(s, u_d, u_q, P)
    wL = P.L * P.omega_g
    assert (v_d, v_q) == pytest.approx((277 - wL + 3.6, 5 * wL - 1.2))


def test_rejects_bad_inputs():
    with pytest.raises(SingularStateError):
        modulation_indices(1.0, 0.0, 0.0, P)
    with pytest.raises(ValueError, match="modulation"):
        controller_step(PlantState(0, 0, 1200, 0), G, NO_CLAMP, P, modulation="hard")
