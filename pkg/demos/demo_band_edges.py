"""No-trade band edges: exact roots, first-order law, lam^(1/3) scaling.

Run:  python demos/demo_band_edges.py
Writes band_edges.csv with the lower-family curves at lam = 1e-3.
"""

import numpy as np

from tcband import (
    admissible_margin,
    derive_constants,
    leading_offset,
    reference_params,
    solve_boundaries,
)

params = reference_params()
c = derive_constants(params)

print("The band edges theta + delta_i(t) solve the smooth-pasting equations;")
print("to first order delta_i ~ -/+ (nu/2) lam^(1/3) (1 - xi(t) lam^(1/3)).\n")

print("lam        half-width   delta1(0)    delta2(0)    first-order    |dev|/lam^(2/3)")
margin = admissible_margin(1e-2, params, c)  # one margin across the sweep
for lam in (1e-2, 1e-3, 1e-4, 1e-5):
    edges = solve_boundaries(-1, lam, params, c, n_times=64, margin=margin)
    lead = leading_offset(2, 0.0, lam, params, c)
    dev = abs(edges.delta2[0] - lead) / lam ** (2 / 3)
    print(
        f"{lam:8.0e}   {0.5 * c.nu * lam ** (1 / 3):.6f}    {edges.delta1[0]:+.6f}    "
        f"{edges.delta2[0]:+.6f}    {lead:+.6f}     {dev:.4f}"
    )

print("\nThe residual column of the exported CSV certifies each root to 1e-12.")
margin = admissible_margin(1e-3, params, c)
edges = solve_boundaries(-1, 1e-3, params, c, margin=margin)
edges.to_csv("band_edges.csv")
print("wrote band_edges.csv  (t, delta1, delta2, residual1, residual2)")
print(f"max residuals: {edges.residual1.max():.2e}, {edges.residual2.max():.2e}")

# the edges drift slowly: d(delta)/dt is O(lam^(2/3))
dt = edges.times[1] - edges.times[0]
rate = np.max(np.abs(np.gradient(edges.delta1, dt)))
print(f"max |d delta1/dt| = {rate:.2e}  (lam^(2/3) = {1e-3 ** (2 / 3):.2e})")
