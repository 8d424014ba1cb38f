import json
import math
from dataclasses import replace

import numpy as np
import pytest

from gflsim import analysis, sim
from gflsim.load import LoadModel, certify_bounds
from gflsim.params import baseline, derive_timescales

B = baseline()
TS = derive_timescales(B.params, B.gains)


def scenario(**kw):
    return sim.Scenario(B.params, B.gains, B.constraints, **kw)


def test_fit_recovers_reduced_time_constant():
    tr = sim.simulate_reduced(scenario(load=10e3, horizon=0.4, setpoint_step=(0.05, 1e3)))
    tau = analysis.fit_time_constant(tr, window=(0.05, 0.05 + 5 * TS.tau_eff))
    assert tau == pytest.approx(TS.tau_eff, rel=1e-4)


def test_fit_rejects_non_exponential():
    tr = sim.simulate_full(scenario(load=LoadModel(), horizon=0.5))
    with pytest.raises(analysis.FitQualityError) as err:
        analysis.fit_time_constant(tr, window=(0.1, 0.5))
    assert 0 <= err.value.r2 <= 1


def test_fit_rejects_flat_window():
    tr = sim.simulate_full(scenario(load=10e3, horizon=0.1, initial_state="equilibrium"))
    with pytest.raises(analysis.FitQualityError):
        analysis.fit_time_constant(tr, window=(0.0, 0.1), final_value=float(tr.P_m[0]))


def test_modulation_stats_windows():
    tr = sim.simulate_full(scenario(load=LoadModel(), horizon=0.5))
    inside, post = analysis.modulation_stats(tr)
    t0 = sim.transient_window(TS.mu)
    assert inside == pytest.approx(tr.m_norm[tr.t <= t0].max())
    assert post == pytest.approx(tr.m_norm[tr.t > t0].max())
    short = sim.simulate_full(scenario(load=1e3, horizon=0.001))
    assert math.isnan(analysis.modulation_stats(short)[1])


def test_power_sharing_constant_load():
    tr = sim.simulate_full(scenario(load=10e3, horizon=1.0, initial_state="equilibrium"))
    share = analysis.power_sharing_stats(tr)
    assert math.isnan(share.participation_empirical)
    assert share.mean_P_inv + share.mean_P_net == pytest.approx(10e3)
    assert share.horizon_ok


def test_power_sharing_horizon_flag():
    tr = sim.simulate_full(scenario(load=LoadModel(), horizon=0.5))
    assert not analysis.power_sharing_stats(tr).horizon_ok


def test_audit_clean_and_negative_control():
    m = LoadModel()
    cert = certify_bounds(m)
    tr = sim.simulate_full(scenario(load=m, horizon=2.0))
    assert analysis.audit_bounds(tr, cert).total == 0
    # shrinking the certificate below the realized load must be caught
    tight = replace(cert, Delta_P=0.5 * float(np.max(tr.P_L)), rho_P=1e3)
    audit = analysis.audit_bounds(tr, tight)
    assert audit.amplitude > 0 and audit.ramp > 0
    strict = replace(B.constraints, delta_i_max=1e-3, e_max=1e-3)
    assert analysis.audit_bounds(tr, cert, strict).tracking > 0


def test_metrics_report_json():
    m = LoadModel()
    sc = scenario(load=m, horizon=1.0)
    full, red = sim.simulate_full(sc), sim.simulate_reduced(sc)
    rep = analysis.metrics_report(full, certify_bounds(m), red)
    data = json.loads(analysis.report_to_json(rep))
    assert data["tau_fit"] is None
    assert data["seed"] == 0
    assert data["bound_violations"] == 0
    assert data["manifold_deviation"] > 0
    assert data["tau_expected"] == pytest.approx(TS.tau_eff)
    assert len(data["scenario_hash"]) == 16


def test_scenario_hash_tracks_inputs():
    a = scenario(load=LoadModel(seed=1))
    assert analysis.scenario_hash(a) == analysis.scenario_hash(scenario(load=LoadModel(seed=1)))
    assert analysis.scenario_hash(a) != analysis.scenario_hash(scenario(load=LoadModel(seed=2)))
