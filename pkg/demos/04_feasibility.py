"""Where the gain window closes as the load ramps faster."""

import numpy as np

from gflsim.design import feasibility_sweep
from gflsim.params import baseline, high_voltage

rho = np.linspace(0, 25e6, 11)
for name, b in (("1200 V", baseline()), ("1500 V", high_voltage())):
    curve = feasibility_sweep(b.params, b.constraints, rho, b.gains.K_pp)
    print(f"\n{name}: kd_SP = {curve.kd_SP_curve[0]:.3f}, kd_volt = {curve.kd_volt_line[0]:.3f}, "
          f"kd_bw = {curve.kd_bw_line[0]:.2f} Ohm")
    print(" rho_P [MW/s]  kd_ramp [Ohm]  window")
    for r, kd in zip(rho, curve.kd_ramp_curve):
        lo = max(kd, curve.kd_SP_curve[0])
        hi = min(curve.kd_volt_line[0], curve.kd_bw_line[0])
        print(f" {r / 1e6:11.1f}  {kd:13.3f}  {'open' if lo <= hi else 'closed'}")
    print(f"ramp binds above {curve.rho_P_crit / 1e6:.2f} MW/s, "
          f"window closes at {curve.rho_P_close / 1e6:.2f} MW/s")
