"""Cross-module studies: cost-expansion law, bound sandwich, strategy gap.

The canonical study configuration (round numbers, theta = 1/2):

    mu = 0.10, r = 0.05, sigma^2 = 0.20, p = 0.5, beta = 0.10, T = 1

and a negative-exponent stress variant with p = -1, beta = 0 (a zero
discount already makes p*A negative there).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import hjb
from .asymptotics import admissible_margin, make_surfaces
from .model import DerivedConstants, MarketParams, derive_constants, merton_value


def reference_params(lam=1e-3):
    return MarketParams(mu=0.10, sigma=math.sqrt(0.2), r=0.05, p=0.5, lam=lam, beta=0.10, T=1.0)


def stress_params(lam=1e-3):
    return MarketParams(mu=0.10, sigma=math.sqrt(0.2), r=0.05, p=-1.0, lam=lam, beta=0.0, T=1.0)


@dataclass
class FitResult:
    slope: float
    intercept: float
    ci_halfwidth: float
    r2: float
    flagged: bool

    def as_dict(self):
        return vars(self)


def loglog_fit(x, y, weights=None, r2_floor=0.98):
    """Weighted least squares of log y on log x.

    weights are per-point standard deviations of y (propagated into log
    space); a fit with R^2 below r2_floor is flagged, not suppressed.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lx, ly = np.log(x), np.log(y)
    if weights is None:
        w = np.ones_like(lx)
    else:
        sigma_log = np.asarray(weights, dtype=float) / y
        sigma_log = np.maximum(sigma_log, 1e-12)
        w = 1.0 / sigma_log**2
    W = np.sum(w)
    xb = np.sum(w * lx) / W
    yb = np.sum(w * ly) / W
    sxx = np.sum(w * (lx - xb) ** 2)
    slope = float(np.sum(w * (lx - xb) * (ly - yb)) / sxx)
    intercept = float(yb - slope * xb)
    pred = intercept + slope * lx
    ss_res = float(np.sum(w * (ly - pred) ** 2))
    ss_tot = float(np.sum(w * (ly - yb) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    n = len(lx)
    if n > 2:
        s2 = ss_res / (n - 2)
        half = 1.96 * math.sqrt(s2 / sxx)
    else:
        half = math.inf
    return FitResult(slope=slope, intercept=intercept, ci_halfwidth=half, r2=r2, flagged=r2 < r2_floor)


@dataclass
class SweepReport:
    lambdas: list
    merton_loss: list
    loss_error_estimates: list
    fit: FitResult
    coefficient_at_smallest: float
    coefficient_target: float
    sandwich_pass: list = field(default_factory=list)
    sandwich_margins: list = field(default_factory=list)
    gap_rows: list = field(default_factory=list)

    def as_dict(self):
        return {
            "lambdas": list(self.lambdas),
            "merton_loss": list(self.merton_loss),
            "loss_error_estimates": list(self.loss_error_estimates),
            "fit": self.fit.as_dict() if self.fit else None,
            "coefficient_at_smallest": self.coefficient_at_smallest,
            "coefficient_target": self.coefficient_target,
            "sandwich_pass": list(self.sandwich_pass),
            "sandwich_margins": list(self.sandwich_margins),
            "gap_rows": self.gap_rows,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "merton_loss", "loss_error_estimate"])
            for row in zip(self.lambdas, self.merton_loss, self.loss_error_estimates):
                w.writerow([f"{v:.12g}" for v in row])

    def plot_data(self, path):
        """x, y, yerr columns for external log-log plotting."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "yerr"])
            for row in zip(self.lambdas, self.merton_loss, self.loss_error_estimates):
                w.writerow([f"{v:.12g}" for v in row])


def solve_on_policy_grid(params, consts, nt=32, dz_factor=1.0, width=0.45, scheme="explicit-projected"):
    """One PDE solve on the dz <= nu lam^(1/3)/40 policy mesh (theta on-node)."""
    dz = consts.nu * params.lam ** (1.0 / 3.0) / 40.0 * dz_factor
    grid = hjb.default_grid(params, consts, dz_target=dz, nt=nt, scheme=scheme, width=width)
    return hjb.solve(params, consts, grid)


def value_at_theta(params, consts, nt=32, dz_factor=1.0, with_error=True, width=0.45):
    """u(t0, theta) plus a grid-refinement error estimate |u_h - u_{h/2}|."""
    sol = solve_on_policy_grid(params, consts, nt=nt, dz_factor=dz_factor, width=width)
    j = int(np.argmin(np.abs(sol.z - consts.theta)))
    u_h = float(sol.values[0, j])
    if not with_error:
        return u_h, math.nan, sol
    sol2 = solve_on_policy_grid(params, consts, nt=nt, dz_factor=0.5 * dz_factor, width=width)
    j2 = int(np.argmin(np.abs(sol2.z - consts.theta)))
    u_h2 = float(sol2.values[0, j2])
    return u_h2, abs(u_h - u_h2), sol2


def expansion_study(params: MarketParams, lambdas, nt=32, dz_policy_cap=None) -> SweepReport:
    """Merton loss (1/p) e^{pA(T-t0)} - u(t0, theta) across a lambda sweep.

    Solves on meshes satisfying dz <= nu lam^(1/3)/40 (aborts if
    dz_policy_cap forces a coarser mesh), fits the log-log slope with
    refinement-estimate weights, and reports loss / lam^(2/3) at the
    smallest lambda against the predicted coefficient
    gamma2 (T - t0) e^{pA(T - t0)}.
    """
    consts = derive_constants(dataclasses.replace(params, lam=min(lambdas)))
    lambdas = sorted(lambdas, reverse=True)
    losses, errors = [], []
    mv = merton_value(params.t0, 1.0, params, consts)
    for lam in lambdas:
        pr = dataclasses.replace(params, lam=lam)
        if dz_policy_cap is not None and consts.nu * lam ** (1.0 / 3.0) / 40.0 > dz_policy_cap:
            raise ValueError(
                f"grid policy violation at lambda={lam:g}: required dz "
                f"{consts.nu * lam ** (1.0 / 3.0) / 40.0:g} exceeds cap {dz_policy_cap:g}"
            )
        u0, err, _ = value_at_theta(pr, consts, nt=nt)
        losses.append(mv - u0)
        errors.append(max(err, 1e-14))
    fit = loglog_fit(lambdas, losses, weights=errors) if len(lambdas) >= 2 else None
    lam_min = lambdas[-1]
    tau = params.T - params.t0
    target = consts.gamma2 * tau * math.exp(params.p * consts.A * tau)
    coeff = losses[-1] / lam_min ** (2.0 / 3.0)
    return SweepReport(
        lambdas=lambdas,
        merton_loss=losses,
        loss_error_estimates=errors,
        fit=fit,
        coefficient_at_smallest=coeff,
        coefficient_target=target,
    )


def sandwich_study(params: MarketParams, lambdas, k1=None, nt=32, margin=None, n_times=512, width=0.45, err_factor=3.0):
    """Check lower-surface <= u_pde <= upper-surface on [t0, T] x K1 per lambda.

    Margins are measured at the PDE nodes inside K1 and must exceed minus
    err_factor times the grid-refinement error estimate.  Returns
    (passes, margins, details).
    """
    consts = derive_constants(dataclasses.replace(params, lam=min(lambdas)))
    if k1 is None:
        k1 = (consts.theta - 0.2, consts.theta + 0.2)
    width = max(width, abs(k1[0] - consts.theta) + 0.05, abs(k1[1] - consts.theta) + 0.05)
    passes, margins, details = [], [], []
    for lam in sorted(lambdas, reverse=True):
        pr = dataclasses.replace(params, lam=lam)
        m = admissible_margin(lam, pr, consts) if margin is None else margin
        upper, lower = make_surfaces(lam, pr, consts, n_times=n_times, margin=m)
        u_fine, err, sol = value_at_theta(pr, consts, nt=nt, width=width)
        mask = (sol.z >= k1[0]) & (sol.z <= k1[1])
        zs = sol.z[mask]
        worst_up = math.inf
        worst_lo = math.inf
        for k, t in enumerate(sol.times):
            u_row = sol.values[k, mask]
            wu = upper.value(t, zs)
            wl = lower.value(t, zs)
            worst_up = min(worst_up, float(np.min(wu - u_row)))
            worst_lo = min(worst_lo, float(np.min(u_row - wl)))
        tol = max(err_factor * err, 1e-12)
        ok = worst_up >= -tol and worst_lo >= -tol
        passes.append(ok)
        margins.append((worst_up, worst_lo, tol))
        details.append({"lambda": lam, "margin": m, "upper_minus_u": worst_up, "u_minus_lower": worst_lo, "tolerance": tol})
    return passes, margins, details
