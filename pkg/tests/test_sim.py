import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gflsim import sim
from gflsim.analysis import power_sharing_stats
from gflsim.controller import NO_CLAMP, ClampConfig, controller_step
from gflsim.load import LoadModel, LoadTrace
from gflsim.params import baseline, derive_timescales, high_voltage, participation
from gflsim.plant import PlantInputs, PlantState, SingularStateError, plant_derivative

B, HV = baseline(), high_voltage()


def scenario(bundle=B, **kw):
    return sim.Scenario(bundle.params, bundle.gains, bundle.constraints, **kw)


@given(
    x=st.tuples(st.floats(-300, 300), st.floats(-100, 100), st.floats(300, 2000),
                st.floats(-1e5, 1e5)),
    P_L=st.floats(0, 1e5), P_star=st.floats(-5e4, 5e4),
    dc_mode=st.sampled_from(sim.DC_MODES), modulation=st.sampled_from(("monitor", "clip")),
    clamp_on=st.booleans(),
)
def test_kernel_matches_public_functions(x, P_L, P_star, dc_mode, modulation, clamp_on):
    clamp = ClampConfig(True, 48.1) if clamp_on else NO_CLAMP
    s = scenario(dc_mode=dc_mode, modulation=modulation, clamp=clamp)
    gains = replace(B.gains, P_star=P_star)
    c = sim._constants(replace(s, gains=gains), 7e3)
    out = np.empty(4)
    sim._rhs(np.array(x), P_L, P_star, c, out)

    state = PlantState(*x)
    ctrl = controller_step(state, gains, clamp, B.params, modulation)
    P_dc = 7e3 if dc_mode == "constant" else 1.5 * B.params.V_g * x[0]
    ref = plant_derivative(state, PlantInputs(float(ctrl.v_d), float(ctrl.v_q), P_dc, P_L),
                           B.params)
    scale = np.array([1e5, 1e5, 1e3, 1e7])
    np.testing.assert_allclose(out / scale, ref / scale, atol=1e-9)


@pytest.mark.parametrize("bundle", [B, HV])
def test_closed_loop_equilibrium_is_fixed_point(bundle):
    tr = sim.simulate_full(scenario(bundle, load=12e3, initial_state="equilibrium",
                                    horizon=0.2))
    for name in ("i_d", "i_q", "V_dc", "P_m"):
        x = getattr(tr, name)
        assert np.max(np.abs(x - x[0])) <= 1e-9 * max(1.0, abs(x[0])), name


def test_reduced_equilibrium_drifts_by_resistive_offset():
    tr = sim.simulate_full(scenario(load=10e3, horizon=0.5))
    eq = sim.closed_loop_equilibrium(B.params, B.gains, 10e3)
    assert tr.i_d[0] != pytest.approx(eq.i_d, rel=1e-6)
    assert tr.i_d[-1] == pytest.approx(eq.i_d, rel=1e-6)
    ratio = B.gains.k_d / (B.gains.k_d + B.params.R)
    assert tr.i_d[-1] == pytest.approx(ratio * tr.i_d_star[-1], rel=1e-6)


def test_reduced_model_step_is_exact_exponential():
    sc = scenario(load=10e3, horizon=0.2, initial_state="reduced-equilibrium",
                  setpoint_step=(0.0, 1e3))
    tr = sim.simulate_reduced(sc)
    ts = derive_timescales(B.params, B.gains)
    dP_inf = 1.5 * B.params.V_g * B.gains.K_pp * 1e3 / (1 + 1.5 * B.params.V_g * B.gains.K_pp)
    expected = tr.P_m[0] + dP_inf * (1 - np.exp(-tr.t / ts.tau_eff))
    np.testing.assert_allclose(tr.P_m, expected, atol=1e-6)


def test_reduced_model_grid_check():
    with pytest.raises(ValueError, match="tau_eff"):
        sim.simulate_reduced(scenario(load=1e3, dt=1e-3))


def test_dt_too_large():
    with pytest.raises(ValueError, match="dt too large for boundary layer"):
        sim.simulate_full(scenario(dt=200e-6))


def test_horizon_zero():
    tr = sim.simulate_full(scenario(horizon=0.0))
    assert len(tr) == 1 and tr.t[0] == 0.0


def test_balanced_mode_holds_dc_link():
    tr = sim.simulate_full(scenario(horizon=1.0, V_dc0=1150.0))
    assert np.all(tr.V_dc == 1150.0)


def test_dc_collapse_keeps_partial_trace():
    x0 = PlantState(40.0, 0.0, 50.0, 0.0)
    sc = scenario(load=10e3, dc_mode="constant", P_dc_in=0.0, initial_state=x0, horizon=0.5)
    with pytest.raises(SingularStateError) as err:
        sim.simulate_full(sc)
    tr = err.value.trace
    assert 0 < len(tr) < 10001
    assert np.all(tr.V_dc > 0)


def test_clip_mode_bounds_applied_voltage():
    sc = scenario(load=10e3, horizon=0.05, V_dc0=560.0, initial_state="equilibrium")
    base = sim.simulate_full(sc)
    assert base.saturated.any() and base.events
    clipped = sim.simulate_full(replace(sc, modulation="clip"))
    applied = np.hypot(clipped.v_d, clipped.v_q) / (B.params.kappa * clipped.V_dc)
    assert np.all(applied <= B.params.m_max * (1 + 1e-12))


def test_clamp_limits_reference():
    clamp = ClampConfig.from_rating(20e3, B.params)
    tr = sim.simulate_full(scenario(load=300e3, horizon=0.3, clamp=clamp))
    assert np.max(tr.i_d_star) <= clamp.i_d_star_max + 1e-12
    assert np.max(tr.i_d_star) == pytest.approx(clamp.i_d_star_max)
    eq = sim.closed_loop_equilibrium(B.params, B.gains, 300e3, clamp=clamp)
    assert eq.i_d == pytest.approx(clamp.i_d_star_max * 1.2 / 1.3)


def test_load_trace_grid_must_match():
    with pytest.raises(ValueError, match="grid"):
        sim.simulate_full(scenario(load=LoadTrace.constant(1e3, 0.1, 100e-6), horizon=0.1))
    tr = sim.simulate_full(scenario(load=LoadTrace.constant(1e3, 0.1, 50e-6), horizon=0.1))
    assert len(tr) == 2001


def test_seed_sweep_matches_single_runs():
    sc = scenario(load=LoadModel(), horizon=0.5)
    serial = sim.simulate_seeds(sc, [3, 1, 2], jobs=1)
    threaded = sim.simulate_seeds(sc, [3, 1, 2], jobs=3)
    single = sim.simulate_full(replace(sc, load=LoadModel(seed=1)))
    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a.P_m, b.P_m)
    np.testing.assert_array_equal(serial[1].i_d, single.i_d)
    with pytest.raises(ValueError):
        sim.simulate_seeds(scenario(load=1e3), [0])


@given(k_d=st.floats(0.5, 10.0))
def test_boundary_layer_rate(k_d):
    g = replace(B.gains, k_d=k_d, k_q=k_d)
    rate = sim.boundary_layer_test(B.params, g, i_d0=60.0, i_d_star_frozen=-5.0)
    assert rate == pytest.approx((k_d + B.params.R) / B.params.L, rel=1e-6)


def test_boundary_layer_needs_offset():
    i_eq = 1.2 * 10.0 / 1.3
    with pytest.raises(ValueError):
        sim.boundary_layer_test(B.params, B.gains, i_d0=i_eq, i_d_star_frozen=10.0)


def test_transient_window():
    mu = 2e-3 / 1.3
    assert sim.transient_window(mu) == pytest.approx(5 * mu * abs(math.log(mu)))
    assert sim.transient_window(mu, 2.0) == pytest.approx(2 * mu * abs(math.log(mu)))


def test_compare_reduced_full():
    sc = scenario(load=LoadModel(), horizon=1.0)
    full, red = sim.simulate_full(sc), sim.simulate_reduced(sc)
    rep = sim.compare_reduced_full(full, red)
    assert 0 < rep.manifold_deviation < 5.0
    assert rep.t_start == pytest.approx(sim.transient_window(rep.mu))
    with pytest.raises(ValueError):
        sim.compare_reduced_full(red, full)
    other = sim.simulate_reduced(replace(sc, load=LoadModel(seed=9)))
    with pytest.raises(ValueError, match="different"):
        sim.compare_reduced_full(full, other)


@pytest.mark.parametrize("bundle", [B, HV])
def test_slow_ramp_participation_on_reduced_model(bundle):
    m = LoadModel(lam=0.0, rho_b=2e3, base_swing=10e3)
    tr = sim.simulate_reduced(scenario(bundle, load=m, horizon=20.0))
    share = power_sharing_stats(tr).participation_empirical
    assert share == pytest.approx(participation(bundle.params, bundle.gains), rel=0.01)


def test_full_trace_channels_consistent():
    tr = sim.simulate_full(scenario(load=LoadModel(), horizon=0.5))
    np.testing.assert_allclose(tr.P_inv + tr.P_net, tr.P_L)
    np.testing.assert_allclose(tr.e_d, tr.i_d - tr.i_d_star)
    np.testing.assert_allclose(tr.i_d_star, B.gains.K_pp * (B.gains.P_star - tr.P_m))
    assert not tr.saturated.any() and tr.events == []
