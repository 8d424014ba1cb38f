"""Fast current transient versus the slow power loop."""

from dataclasses import replace

from gflsim.load import LoadModel
from gflsim.params import baseline
from gflsim.sim import (Scenario, boundary_layer_test, compare_reduced_full, simulate_full,
                        simulate_reduced)

b = baseline()
p, g = b.params, b.gains

# Freeze the reference and watch i_d relax: the rate is (k_d + R) / L.
rate = boundary_layer_test(p, g, i_d0=110.0, i_d_star_frozen=10.0)
print(f"fitted decay {rate:.2f} 1/s, predicted {(g.k_d + p.R) / p.L:.2f} 1/s")

# Halving mu roughly halves the distance from the slow manifold.
for k_d in (g.k_d, 2 * (g.k_d + p.R) - p.R):
    gains = replace(g, k_d=k_d, k_q=k_d)
    sc = Scenario(p, gains, b.constraints, load=LoadModel(), horizon=2.0)
    rep = compare_reduced_full(simulate_full(sc), simulate_reduced(sc))
    print(f"k_d = {k_d:.2f} Ohm, mu = {rep.mu * 1e3:.3f} ms: "
          f"max |i_d - i_d*| = {rep.manifold_deviation:.3f} A, "
          f"max |P_m - P_m_reduced| = {rep.power_deviation:.1f} W")
