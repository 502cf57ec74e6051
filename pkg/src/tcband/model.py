"""Problem parameters and closed-form constants.

A single problem instance is a geometric Brownian stock (drift mu,
volatility sigma), a money market at rate r, power utility c^p / p,
a proportional cost lambda per dollar of stock traded, an impatience
discount beta, and a horizon T.  Everything downstream (no-trade band
asymptotics, PDE reference solve, Monte Carlo) is driven by the handful
of derived constants computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

# theta this close to 0 or 1 is treated as degenerate: nu appears in
# denominators downstream and the band width collapses.
THETA_DEGENERACY_TOL = 1e-6

CONFIG_KEYS = ("mu", "sigma", "r", "p", "lambda", "beta", "T")


class ParamsError(ValueError):
    """Raised when a parameter set fails validation or a config is malformed."""


@dataclass(frozen=True)
class MarketParams:
    """Raw inputs defining one problem instance.

    mu, r are annualized rates, sigma an annualized volatility, p < 1 the
    utility exponent (p != 0), lam the proportional transaction cost,
    beta the discount rate, T the horizon and t0 the evaluation start.
    """

    mu: float
    sigma: float
    r: float
    p: float
    lam: float
    beta: float
    T: float
    t0: float = 0.0


@dataclass(frozen=True)
class DerivedConstants:
    """Closed-form constants computed once per instance.

    theta   optimal frictionless stock fraction (mu - r) / ((1 - p) sigma^2)
    A       adjusted growth rate r - beta/p + (mu - r)^2 / (2 (1 - p) sigma^2)
    gamma2  value-loss coefficient ((9/32)(1 - p) theta^4 (1 - theta)^4)^(1/3) sigma^2
    nu      band half-width constant (12 theta^2 (1 - theta)^2 / (1 - p))^(1/3)
    B       offset (2/3)|p| T gamma2 + 1 keeping xi(t) well defined
    M       margin constant used by the bounding surfaces
    """

    theta: float
    A: float
    gamma2: float
    nu: float
    B: float
    M: float


@dataclass
class ValidationReport:
    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def _theta(params):
    return (params.mu - params.r) / ((1.0 - params.p) * params.sigma**2)


def _growth_rate(params):
    p = params.p
    return (
        params.r
        - params.beta / p
        + 0.5 * (params.mu - params.r) ** 2 / ((1.0 - p) * params.sigma**2)
    )


def validate(params: MarketParams) -> ValidationReport:
    """Check the standing hypotheses; returns a report, never raises.

    Degenerate Merton fractions (theta near 0 or 1) get a dedicated
    diagnostic: with no rebalancing need the value loss is only of order
    lambda and the band coefficient gamma2 vanishes, so the lambda^(1/3)
    band construction does not apply.
    """
    v = []
    if not params.sigma > 0.0:
        v.append("sigma must be positive")
    if not 0.0 < params.r < params.mu:
        v.append("need 0 < r < mu")
    if not 0.0 < params.lam < 1.0:
        v.append("lambda must lie in (0, 1)")
    if not params.T > 0.0:
        v.append("T must be positive")
    if not 0.0 <= params.t0 <= params.T:
        v.append("t0 must lie in [0, T]")
    if params.p == 0.0:
        v.append("p = 0 is outside the power-utility family handled here")
    elif not params.p < 1.0:
        v.append("need p < 1")
    if params.beta < 0.0:
        v.append("beta must be nonnegative")

    if v:
        return ValidationReport(False, v)

    theta = _theta(params)
    if abs(theta) <= THETA_DEGENERACY_TOL:
        v.append(
            "degenerate instance: theta ~ 0 (all cash); no rebalancing is "
            "needed, the cost impact is only O(lambda) and gamma2 = 0"
        )
    if abs(theta - 1.0) <= THETA_DEGENERACY_TOL:
        v.append(
            "degenerate instance: theta ~ 1 (fully invested); trading occurs "
            "only at the initial and final times, the loss is only O(lambda) "
            "and gamma2 = 0"
        )
    pA = params.p * _growth_rate(params)
    if not pA < 0.0:
        v.append(
            f"need p*A < 0 (got p*A = {pA:.6g}); choose a larger beta "
            "(beta = 0 only suffices for p < 0)"
        )
    return ValidationReport(not v, v)


def derive_constants(params: MarketParams) -> DerivedConstants:
    """Compute all six closed-form constants; rejects invalid parameter sets."""
    report = validate(params)
    if not report.ok:
        raise ParamsError("; ".join(report.violations))

    p, sig2, T = params.p, params.sigma**2, params.T
    theta = _theta(params)
    A = _growth_rate(params)
    gamma2 = ((9.0 / 32.0) * (1.0 - p) * theta**4 * (1.0 - theta) ** 4) ** (1.0 / 3.0) * sig2
    nu = (12.0 / (1.0 - p) * theta**2 * (1.0 - theta) ** 2) ** (1.0 / 3.0)
    B = (2.0 / 3.0) * abs(p) * T * gamma2 + 1.0

    # xi^2 is affine in t, so its maximum over [0, T] sits at an endpoint.
    xi_max = max(
        math.sqrt((2.0 / 3.0) * p * T * gamma2 + B),  # t = 0
        math.sqrt(B),  # t = T
    )
    op1 = 6.0 * (sig2 / nu) * (2.0 * nu * theta * abs((1.0 - theta) * (1.0 - 2.0 * theta)) + 1.0) + 1.0
    op2 = 0.5 * sig2 * (1.0 - p) * nu**2 * xi_max + 1.0
    M = theta + 1.0 + (2.0 / (-p * A)) * max(op1, op2, 1.0)

    return DerivedConstants(theta=theta, A=A, gamma2=gamma2, nu=nu, B=B, M=M)


def xi(t, consts: DerivedConstants, params: MarketParams):
    """sqrt((2/3) p (T - t) gamma2 + B); strictly positive on [0, T].

    Accepts a scalar or array t inside [0, T].
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > params.T):
        raise ValueError("t outside [0, T]")
    out = np.sqrt((2.0 / 3.0) * params.p * (params.T - t) * consts.gamma2 + consts.B)
    return out if out.ndim else float(out)


def merton_value(t, wealth, params: MarketParams, consts: DerivedConstants):
    """Discounted frictionless value (1/p) e^{p A (T - t)} wealth^p.

    Homothetic in wealth: scaling wealth by g scales the value by g^p.
    Zero wealth with p < 0 maps to the utility sentinel -inf.
    """
    p = params.p
    t = np.asarray(t, dtype=float)
    w = np.asarray(wealth, dtype=float)
    if np.any(w < 0.0):
        raise ValueError("wealth must be nonnegative")
    growth = np.exp(p * consts.A * (params.T - t))
    if p < 0:
        with np.errstate(divide="ignore"):
            out = np.where(w > 0.0, (1.0 / p) * growth * np.where(w > 0.0, w, 1.0) ** p, -np.inf)
    else:
        out = (1.0 / p) * growth * w**p
    return out if np.ndim(out) else float(out)


def power_utility(c, p):
    """c^p / p with the conventions U_p(0) = -inf for p < 0 and 0 for 0 < p < 1."""
    c = np.asarray(c, dtype=float)
    cp = np.clip(c, 0.0, None)
    with np.errstate(divide="ignore"):
        if p < 0:
            out = np.where(cp > 0.0, np.where(cp > 0.0, cp, 1.0) ** p / p, -np.inf)
        else:
            out = cp**p / p
    return out if out.ndim else float(out)


def load_params(path) -> MarketParams:
    """Read a flat TOML config with keys mu, sigma, r, p, lambda, beta, T [, t0]."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    missing = [k for k in CONFIG_KEYS if k not in raw]
    if missing:
        raise ParamsError(f"config {path} is missing keys: {', '.join(missing)}")
    return MarketParams(
        mu=float(raw["mu"]),
        sigma=float(raw["sigma"]),
        r=float(raw["r"]),
        p=float(raw["p"]),
        lam=float(raw["lambda"]),
        beta=float(raw["beta"]),
        T=float(raw["T"]),
        t0=float(raw.get("t0", 0.0)),
    )
