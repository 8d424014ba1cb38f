"""Walk through the gain design for the 1200 V and 1500 V DC links."""

from dataclasses import replace

from gflsim import design
from gflsim.params import baseline, derive_timescales, high_voltage

b = baseline()
p, c = b.params, b.constraints

# Hardware sets the ceiling on the current-loop gain.
# kd_volt comes from the voltage headroom, kd_bw from the switching frequency.
bounds = design.compute_gain_bounds(p, c, b.gains.K_pp, b.gains.k_d)
print(f"H_min   = {bounds.H_min:7.2f} V")
print(f"kd_volt = {bounds.kd_volt:7.3f} Ohm   kd_bw = {bounds.kd_bw:.3f} Ohm")
print(f"kd_SP   = {bounds.kd_SP:7.3f} Ohm   (timescale separation floor)")

# Pick k_d inside [kd_SP, kd_max], then the droop gain below its separation limit.
result = design.sequential_design(p, c)
g = result.gains
print(f"\nchosen k_d = {g.k_d:.4f} Ohm, K_pp = {g.K_pp * 1e3:.4f} mA/W")
ts = result.timescales
print(f"mu = {ts.mu * 1e3:.3f} ms, tau_eff = {ts.tau_eff * 1e3:.2f} ms, ratio = {ts.ratio:.2f}")

# The modulation check uses the full tracking-error budget during the fast transient.
a = result.admissibility
print(f"worst |m|: {a.m_norm_boundary:.3f} in the boundary layer, "
      f"{a.m_norm_post:.3f} afterwards (limit {p.m_max})")

# Push the ramp rate past the closure point and the procedure names what broke.
try:
    design.sequential_design(p, replace(c, rho_P=25e6), k_d=1.2, K_pp=0.4e-3)
except design.InfeasibleDesign as err:
    print(f"\nrho_P = 25 MW/s -> infeasible at step {err.step}: {err.binding}")

# A higher DC link buys voltage headroom, so a stiffer loop and a larger droop gain fit.
hv = high_voltage()
r = design.sequential_design(hv.params, hv.constraints, k_d=hv.gains.k_d, K_pp=hv.gains.K_pp)
print(f"\n1500 V: H_min = {r.bounds.H_min:.1f} V, Kpp_SP = {r.bounds.Kpp_SP * 1e3:.2f} mA/W, "
      f"tau_eff = {derive_timescales(hv.params, hv.gains).tau_eff * 1e3:.2f} ms")
