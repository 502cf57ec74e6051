"""Upper/lower bounding surfaces and their certification scan.

Run:  python demos/demo_bounding_surfaces.py
"""

import numpy as np

from tcband import (
    admissible_margin,
    derive_constants,
    hjb_residuals,
    make_surfaces,
    merton_value,
    reference_params,
    verify_sub_super,
)

params = reference_params()
c = derive_constants(params)
lam = 1e-4

# consts.M is a sufficient margin for lam -> 0; at moderate lam it can be too
# large for the edge equations to have roots, so shrink it to an admissible
# level and let the verifier re-certify the inequalities numerically.
margin = admissible_margin(1e-3, params, c)
print(f"margin: sufficient constant M = {c.M:.2f}, admissible at lam=1e-3: {margin:.2f}\n")

upper, lower = make_surfaces(lam, params, c, margin=margin)
t = 0.0
z = c.theta
mv = merton_value(t, 1.0, params, c)
print(f"at (t=0, z=theta):  lower = {lower.value(t, z):.8f}")
print(f"                    value function is sandwiched in between")
print(f"                    upper = {upper.value(t, z):.8f}")
print(f"frictionless value: {mv:.8f};  band width = 2*margin*lam = {2 * margin * lam:.2e}\n")

print("operator residuals (parabolic, buy, sell) at sample points:")
for zq, where in ((0.30, "buy region"), (c.theta, "band center"), (0.80, "sell region")):
    par, buy, sell, hmin = hjb_residuals(upper, 0.3, zq)
    print(f"  upper @ z={zq:.2f} ({where:11s}): parabolic {par:+.2e}  buy {buy:+.2e}  sell {sell:+.2e}")

print("\nfull certification scan (coarse grid):")
rep = verify_sub_super(params, c, lam=lam, nt=100, nz=200, n_times=256, margin=margin)
for chk in rep.checks:
    print(f"  {'PASS' if chk.passed else 'FAIL'}  {chk.name}  worst margin {chk.worst_margin:+.2e}")
print("overall:", "PASS" if rep.passed else "FAIL")

# smooth pasting: w and w_z are continuous across the edges
te = 0.6
for name, surf in (("upper", upper), ("lower", lower)):
    z1 = float(surf.boundaries.zeta1(te))
    dv = abs(surf.value(te, z1 - 1e-11) - surf.value(te, z1 + 1e-11))
    _, wl, _, _ = surf.derivs(te, z1 - 1e-11)
    _, wr, _, _ = surf.derivs(te, z1 + 1e-11)
    print(f"pasting at {name} lower edge: |dw| = {dv:.1e}, |dw_z| = {abs(wl - wr):.1e}")
