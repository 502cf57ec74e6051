"""Closed-form constants of the canonical instance, step by step.

Run:  python demos/demo_constants.py
"""

import numpy as np

from tcband import derive_constants, merton_value, reference_params, validate, xi

params = reference_params(lam=1e-3)
print("instance:", params)

report = validate(params)
print("validation:", "pass" if report.ok else report.violations)

c = derive_constants(params)
print(f"""
theta  = {c.theta:.12f}   optimal frictionless stock fraction
A      = {c.A:.12f}   growth exponent; p*A = {params.p * c.A:.5f} < 0
gamma2 = {c.gamma2:.12f}   loss coefficient of the lam^(2/3) term
nu     = {c.nu:.12f}   band half-width constant
B      = {c.B:.12f}   keeps the width factor real on [0, T]
M      = {c.M:.12f}   sufficient bounding-surface margin
""")

print("width factor xi(t) over the horizon (affects the lam^(2/3) edge correction):")
for t in np.linspace(0.0, params.T, 5):
    print(f"  xi({t:.2f}) = {xi(t, c, params):.9f}")

print("\nfrictionless value at unit wealth:")
for t in (0.0, 0.5, 1.0):
    print(f"  v({t:.1f}, w=1) = {merton_value(t, 1.0, params, c):.9f}")

# the leading loss from a small proportional cost lam: gamma2(t0) * lam^(2/3)
lam = params.lam
g2_t0 = c.gamma2 * params.T * np.exp(params.p * c.A * params.T)
print(f"\npredicted leading value loss at lam={lam:g}: {g2_t0 * lam ** (2 / 3):.3e}")
