"""How much of the bursty load does each design pick up?"""

import numpy as np

from gflsim.analysis import power_sharing_stats
from gflsim.load import LoadModel
from gflsim.params import baseline, high_voltage, participation
from gflsim.sim import Scenario, simulate_full, simulate_seeds

for name, b in (("1200 V", baseline()), ("1500 V", high_voltage())):
    sc = Scenario(b.params, b.gains, b.constraints, load=LoadModel(), horizon=10.0)
    share = power_sharing_stats(simulate_full(sc))
    print(f"{name}: P_inv = {share.mean_P_inv / 1e3:5.2f} kW, "
          f"P_net = {share.mean_P_net / 1e3:6.2f} kW, "
          f"marginal share {share.participation_empirical:.3f} "
          f"(droop predicts {participation(b.params, b.gains):.3f})")

# Seed-to-seed spread of the 10 s means.
b = baseline()
sc = Scenario(b.params, b.gains, b.constraints, load=LoadModel(), horizon=10.0)
means = np.array([[t.P_inv.mean(), t.P_net.mean()] for t in simulate_seeds(sc, range(20), jobs=4)])
mu, sd = means.mean(axis=0) / 1e3, means.std(axis=0, ddof=1) / 1e3
print(f"\n20 seeds, 1200 V: P_inv {mu[0]:.2f} +/- {sd[0]:.2f} kW, P_net {mu[1]:.2f} +/- {sd[1]:.2f} kW")

# In steady state the current loop settles at k_d / (k_d + R) of its reference,
# which trims the inverter share below the ideal droop value.
print(f"resistive factor k_d/(k_d+R) = {b.gains.k_d / (b.gains.k_d + b.params.R):.4f}")
