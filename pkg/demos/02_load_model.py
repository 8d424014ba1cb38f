"""Bursty AI load: compound Poisson arrivals through a first-order filter."""

import numpy as np

from gflsim.load import LoadModel, certify_bounds, generate_load_trace

model = LoadModel()  # 10 kW base, 50 arrivals/s, batches up to 10 kW, 20 ms filter
trace = generate_load_trace(model, horizon=10.0, dt=50e-6)

print(f"{trace.arrival_times.size} arrivals in 10 s (expected {model.lam * 10:.0f})")
print(f"mean P_L = {trace.P_L.mean() / 1e3:.2f} kW, "
      f"range {trace.P_L.min() / 1e3:.2f}..{trace.P_L.max() / 1e3:.2f} kW")

# Each batch adds b * tau_filter of area to the workload signal, so with unit DC gain
# the mean AI load is lam * E[b] * tau_filter. Overlapping pulses get clipped at M_w.
print(f"analytic mean before clipping: "
      f"{(model.P_base + model.lam * model.b_max / 2 * model.tau_filter) / 1e3:.2f} kW")

# The certificate bounds every realization, not just this one.
cert = certify_bounds(model)
ramp = np.abs(np.diff(trace.P_L)).max() / trace.dt
print(f"\ncertificate: |P_L| <= {cert.Delta_P / 1e3:.0f} kW, |dP_L/dt| <= {cert.rho_P / 1e6:.1f} MW/s")
print(f"observed:    |P_L| <= {np.abs(trace.P_L).max() / 1e3:.1f} kW, "
      f"|dP_L/dt| <= {ramp / 1e6:.2f} MW/s")

# Shorter pulses carry the same batch area, so they ramp harder.
for width in (5e-3, 2.5e-3, 1e-3):
    c = certify_bounds(LoadModel(pulse_width=width))
    print(f"pulse width {width * 1e3:4.1f} ms -> rho_P = {c.rho_P / 1e6:5.1f} MW/s")
