"""No-trade band asymptotics: boundary curves and bounding surfaces.

For small proportional cost lam the optimal policy keeps the stock
fraction z inside a band of half-width ~ (nu/2) lam^(1/3) around theta.
This module constructs, for each sign family (+ upper / - lower):

* the band edges zeta_i(t) = theta + delta_i(t), where the offsets
  delta_1 < 0 < delta_2 are exact roots of smooth-pasting equations,
* piecewise-smooth surfaces w(t, z) that are super/subsolutions of the
  dynamic programming variational inequality and therefore bound the
  value function from above/below,
* the three operator residuals (parabolic, buy, sell) whose signs
  certify the super/subsolution property, plus a grid verifier.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from .model import DerivedConstants, MarketParams, power_utility, xi
from .rootfind import NoBracketError, newton_bisect, widen_to_bracket

ROOT_FTOL = 1e-12
DEFAULT_N_TIMES = 2048


class BoundaryError(RuntimeError):
    """A solved boundary violates its structural invariants."""


def band_profile(delta, lam, consts: DerivedConstants):
    """Quartic band profile and its first two derivatives in delta.

    h(delta) = (3/2) delta^2 lam^(2/3) - delta^4 / nu^2
               + (3/2) B delta^2 lam^(4/3)

    The profile is even, vanishes at the band center and shapes the
    curvature of the bounding surfaces inside the band.
    """
    delta = np.asarray(delta, dtype=float)
    nu2 = consts.nu**2
    l23 = lam ** (2.0 / 3.0)
    l43 = lam ** (4.0 / 3.0)
    h = 1.5 * delta**2 * l23 - delta**4 / nu2 + 1.5 * consts.B * delta**2 * l43
    hp = 3.0 * delta * l23 - 4.0 * delta**3 / nu2 + 3.0 * consts.B * delta * l43
    hpp = 3.0 * l23 - 12.0 * delta**2 / nu2 + 3.0 * consts.B * l43
    if h.ndim == 0:
        return float(h), float(hp), float(hpp)
    return h, hp, hpp


def _normalize_sign(sign):
    if sign in (+1, +1.0, "+", "plus", "upper"):
        return +1.0
    if sign in (-1, -1.0, "-", "minus", "lower"):
        return -1.0
    raise ValueError(f"sign must be one of +1/-1/'+'/'-', got {sign!r}")


def pasting_residual(which, sign, t, delta, lam, params: MarketParams, consts: DerivedConstants, margin=None):
    """Smooth-pasting equation for band edge `which` (1 = lower, 2 = upper).

    Vanishes exactly when the first z-derivative of the sign-family
    surface is continuous across the corresponding edge.  The two
    equations differ only through the factor (+/-1 + (theta+delta) lam)
    multiplying the profile slope, so residual_2 = residual_1 - 2 h'.

    `margin` is the coefficient of the sign * lam shift in the surface
    (default: the sufficient constant consts.M).
    """
    s = _normalize_sign(sign)
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    m = consts.M if margin is None else margin
    p, nu, theta = params.p, consts.nu, consts.theta
    h, hp, _ = band_profile(delta, lam, consts)
    tau = params.T - np.asarray(t, dtype=float)
    edisc = np.exp(-p * consts.A * tau)
    common = (
        nu * lam
        - p * nu * consts.gamma2 * tau * lam ** (5.0 / 3.0)
        + s * p * nu * m * edisc * lam**2
        - p * h * lam
    )
    orient = 1.0 if which == 1 else -1.0
    out = common + (orient + (theta + delta) * lam) * hp
    return float(out) if np.ndim(out) == 0 else out


def _pasting_residual_ddelta(which, sign, t, delta, lam, params, consts):
    """d/d(delta) of pasting_residual, for Newton steps."""
    _, hp, hpp = band_profile(delta, lam, consts)
    orient = 1.0 if which == 1 else -1.0
    return (-params.p * lam + lam) * hp + (orient + (consts.theta + delta) * lam) * hpp


def margin_ceilings(lam, params: MarketParams, consts: DerivedConstants):
    """Largest surface margins compatible with this lam, to leading order.

    Returns (exist, bracket): margins above `exist` push the pasting
    equations of the lifted sign family off zero (no band edges at all);
    margins above `bracket` move the edge roots outside the eta-based
    sign-change intervals used by the solver's first bracketing attempt.
    """
    p, theta, T = params.p, consts.theta, params.T
    l13 = lam ** (1.0 / 3.0)
    exist = math.inf
    for t in (0.0, T):
        xit2 = xi(t, consts, params) ** 2
        egrow = math.exp(abs(p * consts.A) * (T - t))
        exist = min(exist, (1.5 * xit2 / l13 - theta) / (abs(p) * egrow))
    eta = 0.5 * min(xi(0.0, consts, params) ** 2, xi(T, consts, params) ** 2)
    egrow_max = math.exp(abs(p * consts.A) * T)
    bracket = (1.5 * eta / l13 - theta) / (abs(p) * egrow_max)
    return exist, bracket


def admissible_margin(lam, params, consts, safety=0.5):
    """A surface margin usable at this lam: min(consts.M, safety * ceilings).

    consts.M is a sufficient constant for the limit lam -> 0; for moderate
    lam it can exceed the level at which the band edges still exist, in
    which case a smaller margin must be used and the surface inequalities
    re-certified by verify_sub_super.
    """
    exist, bracket = margin_ceilings(lam, params, consts)
    return min(consts.M, safety * exist, safety * bracket)


def leading_offset(which, t, lam, params, consts):
    """First-order band offset -/+ (nu/2) lam^(1/3) (1 - xi(t) lam^(1/3))."""
    orient = -1.0 if which == 1 else 1.0
    xit = xi(t, consts, params)
    return orient * 0.5 * consts.nu * lam ** (1.0 / 3.0) * (1.0 - xit * lam ** (1.0 / 3.0))


def first_order_bracket(which, t, lam, params, consts, eta=None):
    """Sign-change interval for the band-edge root at time t.

    Uses endpoints -/+ (nu/2) lam^(1/3) (1 - sqrt(xi(t)^2 -/+ eta) lam^(1/3))
    with eta = half the minimum of xi^2 over the horizon; the residual is
    positive at the endpoint nearer zero and negative at the farther one
    for lam small enough.
    """
    if eta is None:
        xi2_min = min(xi(0.0, consts, params) ** 2, xi(params.T, consts, params) ** 2)
        eta = 0.5 * xi2_min
    xit2 = xi(t, consts, params) ** 2
    l13 = lam ** (1.0 / 3.0)
    half = 0.5 * consts.nu * l13
    far = half * (1.0 - math.sqrt(xit2 - eta) * l13)
    near = half * (1.0 - math.sqrt(xit2 + eta) * l13)
    if which == 1:
        return -far, -near
    return near, far


@dataclass
class BoundarySet:
    """Band edges of one sign family sampled on a time grid.

    delta1 < 0 < delta2 are the edge offsets from theta; residuals hold
    |pasting_residual| at the solved roots.  Off-grid queries use
    monotone cubic interpolation in t.  `margin` records the surface
    margin the roots were solved for.
    """

    sign: float
    lam: float
    margin: float
    times: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    residual1: np.ndarray
    residual2: np.ndarray
    params: MarketParams
    consts: DerivedConstants
    _interp1: PchipInterpolator = field(init=False, repr=False)
    _interp2: PchipInterpolator = field(init=False, repr=False)

    def __post_init__(self):
        if self.times.size == 1:
            d1, d2 = float(self.delta1[0]), float(self.delta2[0])
            self._interp1 = lambda t: np.full_like(np.asarray(t, dtype=float), d1)[()]
            self._interp2 = lambda t: np.full_like(np.asarray(t, dtype=float), d2)[()]
        else:
            self._interp1 = PchipInterpolator(self.times, self.delta1)
            self._interp2 = PchipInterpolator(self.times, self.delta2)

    def delta1_at(self, t):
        return self._interp1(t)

    def delta2_at(self, t):
        return self._interp2(t)

    def zeta1(self, t):
        return self.consts.theta + self._interp1(t)

    def zeta2(self, t):
        return self.consts.theta + self._interp2(t)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "delta1", "delta2", "residual1", "residual2"])
            for row in zip(self.times, self.delta1, self.delta2, self.residual1, self.residual2):
                w.writerow([f"{v:.17g}" for v in row])

    def to_json(self, path):
        payload = {
            "sign": "+" if self.sign > 0 else "-",
            "lambda": self.lam,
            "theta": self.consts.theta,
            "t": self.times.tolist(),
            "delta1": self.delta1.tolist(),
            "delta2": self.delta2.tolist(),
            "zeta1": (self.consts.theta + self.delta1).tolist(),
            "zeta2": (self.consts.theta + self.delta2).tolist(),
            "residual1": self.residual1.tolist(),
            "residual2": self.residual2.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)


def _bracket_edge_root(f, which, t, lam, params, consts):
    """Sign-change interval containing the edge root nearer to zero.

    The pasting residual is positive at delta = 0, dips negative past the
    sought root, and recrosses zero at a second, spurious root beyond the
    dip, so any bracket must stay on the near side of the dip center
    delta_c = -/+ (nu/2) lam^(1/3).  The eta-based interval is tried
    first (widened geometrically up to 6 times, clamped to [delta_c, 0]);
    if it fails, [dip minimum, 0] is used directly.
    """
    half = 0.5 * consts.nu * lam ** (1.0 / 3.0)
    lo, hi = (-half, 0.0) if which == 1 else (0.0, half)
    a, b = first_order_bracket(which, t, lam, params, consts)
    a, b = max(a, lo), min(b, hi)
    try:
        return widen_to_bracket(f, a, b, lo, hi)
    except NoBracketError:
        pass
    # direct fallback: residual at the dip center (or its vicinity)
    center = lo if which == 1 else hi
    cand = center
    if not f(cand) < 0.0:
        res = minimize_scalar(f, bounds=tuple(sorted((lo, hi))), method="bounded")
        if not res.fun < 0.0:
            raise NoBracketError(
                "pasting residual has no zero: lam (or the surface margin) "
                "is too large for the band asymptotics"
            )
        cand = float(res.x)
    return (cand, 0.0) if which == 1 else (0.0, cand)


def solve_boundaries(
    sign,
    lam,
    params: MarketParams,
    consts: DerivedConstants,
    time_grid=None,
    n_times=DEFAULT_N_TIMES,
    ftol=ROOT_FTOL,
    margin=None,
) -> BoundarySet:
    """Solve both band-edge roots on a time grid for one sign family.

    Each root is found by safeguarded Newton inside a sign-change
    interval on the near side of the band (see _bracket_edge_root).
    Raises NoBracketError when no sign change exists in the maximal
    search range (-nu lam^(1/3), 0) resp. (0, nu lam^(1/3)), which
    signals that lam is too large for the band asymptotics at this
    margin.
    """
    s = _normalize_sign(sign)
    m = consts.M if margin is None else float(margin)
    if time_grid is None:
        time_grid = np.linspace(0.0, params.T, n_times)
    times = np.asarray(time_grid, dtype=float)

    deltas = {1: np.empty_like(times), 2: np.empty_like(times)}
    residuals = {1: np.empty_like(times), 2: np.empty_like(times)}
    for which in (1, 2):
        for k, t in enumerate(times):
            f = lambda d: pasting_residual(which, s, t, d, lam, params, consts, margin=m)
            fp = lambda d: _pasting_residual_ddelta(which, s, t, d, lam, params, consts)
            a, b = _bracket_edge_root(f, which, t, lam, params, consts)
            root, fval = newton_bisect(f, fp, a, b, ftol=ftol)
            deltas[which][k] = root
            residuals[which][k] = abs(fval)

    bset = BoundarySet(
        sign=s,
        lam=lam,
        margin=m,
        times=times,
        delta1=deltas[1],
        delta2=deltas[2],
        residual1=residuals[1],
        residual2=residuals[2],
        params=params,
        consts=consts,
    )
    _check_boundary_invariants(bset)
    return bset


def _check_boundary_invariants(bset: BoundarySet):
    if not (np.all(bset.delta1 < 0.0) and np.all(bset.delta2 > 0.0)):
        raise BoundaryError("band edges must satisfy delta1 < 0 < delta2")
    z1 = bset.consts.theta + bset.delta1
    z2 = bset.consts.theta + bset.delta2
    if not (np.all(z1 > 0.0) and np.all(z2 < 1.0 / bset.lam)):
        raise BoundaryError("band edges left (0, 1/lambda); lambda too large")


BUY, BAND, SELL = -1, 0, 1


@dataclass(frozen=True)
class SubSupSurface:
    """One bounding surface w(t, z) with closed-form derivatives.

    sign = +1 gives the upper (supersolution) surface, -1 the lower
    (subsolution) one.  Inside the band,

        w = (1/p) e^{pA(T-t)} - gamma2(t) lam^(2/3) + sign * margin * lam
            - (e^{pA(T-t)} / nu) h(z - theta),

    and outside it w is extended along the exact buy/sell transport so
    that the corresponding first-order operator vanishes identically.
    w and w_z are continuous; w_zz jumps across the band edges, where
    both one-sided values are available.
    """

    sign: float
    params: MarketParams
    consts: DerivedConstants
    boundaries: BoundarySet

    @property
    def lam(self):
        return self.boundaries.lam

    @property
    def margin(self):
        return self.boundaries.margin

    def _check_domain(self, t, z):
        if np.any(t < 0.0) or np.any(t > self.params.T):
            raise ValueError("t outside [0, T]")
        if np.any(np.abs(z) > 1.0 / self.lam):
            raise ValueError("z outside [-1/lambda, 1/lambda]")

    def _core(self, t, z):
        """Band formula evaluated at arbitrary (t, z)."""
        p, lam = self.params.p, self.lam
        tau = self.params.T - t
        egrow = np.exp(p * self.consts.A * tau)
        g2t = self.consts.gamma2 * tau * egrow
        h, _, _ = band_profile(z - self.consts.theta, lam, self.consts)
        return (
            (1.0 / p) * egrow
            - g2t * lam ** (2.0 / 3.0)
            + self.sign * self.margin * lam
            - (egrow / self.consts.nu) * h
        )

    def _core_t(self, t, z):
        """Time derivative of the band formula."""
        p, lam = self.params.p, self.lam
        w = self._core(t, z)
        egrow = np.exp(p * self.consts.A * (self.params.T - t))
        return -p * self.consts.A * (w - self.sign * self.margin * lam) + (
            self.consts.gamma2 * egrow * lam ** (2.0 / 3.0)
        )

    def _edges(self, t):
        return self.boundaries.zeta1(t), self.boundaries.zeta2(t)

    def classify(self, t, z):
        """Region code per point: -1 buy, 0 band, +1 sell."""
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        z1, z2 = self._edges(t)
        return np.where(z < z1, BUY, np.where(z > z2, SELL, BAND))

    def _transport(self, t, z, z_edge, side):
        """Power-law factor carrying the edge value into the trade regions."""
        lam, p = self.lam, self.params.p
        if side == BUY:
            num, den = 1.0 + lam * z, 1.0 + lam * z_edge
        else:
            num, den = 1.0 - lam * z, 1.0 - lam * z_edge
        ratio = num / den
        if p < 0:
            with np.errstate(divide="ignore"):
                return np.where(ratio > 0.0, np.where(ratio > 0.0, ratio, 1.0) ** p, np.inf)
        return np.where(ratio >= 0.0, ratio, 0.0) ** p

    def _value_arr(self, t, z):
        z1, z2 = self._edges(t)
        core = self._core(t, np.clip(z, z1, z2))
        out = np.where(
            z < z1,
            self._core(t, z1) * self._transport(t, z, z1, BUY),
            np.where(z > z2, self._core(t, z2) * self._transport(t, z, z2, SELL), core),
        )
        if self.params.p < 0:
            # at the strip edge the transport ratio hits 0 and w = -inf
            out = np.where(np.isinf(out), -np.inf, out)
        return out

    def value(self, t, z):
        """w(t, z) on [0, T] x [-1/lambda, 1/lambda]."""
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        self._check_domain(t, z)
        t, z = np.broadcast_arrays(t, z)
        out = self._value_arr(t, z)
        return float(out) if out.ndim == 0 else out

    def derivs(self, t, z):
        """(w_t, w_z, w_zz_left, w_zz_right) at (t, z).

        w_zz_left/right are the one-sided second derivatives; they agree
        except on the two edge curves.  In the trade regions w_t uses the
        transported band-edge time derivative (the moving-edge term drops
        because the corresponding trade operator vanishes there).
        """
        p, lam = self.params.p, self.lam
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        self._check_domain(t, z)
        t, z = np.broadcast_arrays(t, z)
        z1, z2 = self._edges(t)
        w = self._value_arr(t, z)
        egrow = np.exp(p * self.consts.A * (self.params.T - t))
        _, hp, hpp = band_profile(z - self.consts.theta, lam, self.consts)

        in_buy = z < z1
        in_sell = z > z2
        w_z = np.where(
            in_buy,
            lam * p * w / (1.0 + lam * z),
            np.where(in_sell, -lam * p * w / (1.0 - lam * z), -(egrow / self.consts.nu) * hp),
        )
        w_t = np.where(
            in_buy,
            self._transport(t, z, z1, BUY) * self._core_t(t, z1),
            np.where(
                in_sell,
                self._transport(t, z, z2, SELL) * self._core_t(t, z2),
                self._core_t(t, z),
            ),
        )

        wzz_buy = -(lam**2) * p * (1.0 - p) * w / (1.0 + lam * z) ** 2
        wzz_sell = -(lam**2) * p * (1.0 - p) * w / (1.0 - lam * z) ** 2
        wzz_band = -(egrow / self.consts.nu) * hpp
        # left limit: buy formula up to and including zeta1, band up to and
        # including zeta2, sell beyond; right limit shifts the ties inward.
        w_zz_left = np.where(z <= z1, wzz_buy, np.where(z <= z2, wzz_band, wzz_sell))
        w_zz_right = np.where(z < z1, wzz_buy, np.where(z < z2, wzz_band, wzz_sell))
        if w.ndim == 0:
            return float(w_t), float(w_z), float(w_zz_left), float(w_zz_right)
        return w_t, w_z, w_zz_left, w_zz_right


def make_surfaces(lam, params: MarketParams, consts: DerivedConstants, n_times=DEFAULT_N_TIMES, margin=None):
    """Solve both boundary families and return (upper, lower) surfaces.

    `margin` defaults to consts.M; pass admissible_margin(...) when lam is
    too large for that sufficient constant (solve_boundaries then raises
    NoBracketError), and re-certify the surfaces with verify_sub_super.
    """
    upper = SubSupSurface(
        +1.0, params, consts, solve_boundaries(+1, lam, params, consts, n_times=n_times, margin=margin)
    )
    lower = SubSupSurface(
        -1.0, params, consts, solve_boundaries(-1, lam, params, consts, n_times=n_times, margin=margin)
    )
    return upper, lower


def hjb_residuals(surface: SubSupSurface, t, z, params=None, consts=None, second="left"):
    """Evaluate the three operator residuals and their minimum at (t, z).

    Returns (parabolic, buy, sell, hmin) where

        parabolic = -w_t + D w,
        D w = -p (A - (1/2) sigma^2 (1-p)(z-theta)^2) w
              + (1-p) sigma^2 z (1-z)(z-theta) w_z
              - (1/2) sigma^2 z^2 (1-z)^2 w_zz,
        buy  = lam p w - (1 + lam z) w_z,
        sell = lam p w + (1 - lam z) w_z.

    On the edge curves `second` selects which one-sided w_zz enters.
    """
    params = params or surface.params
    consts = consts or surface.consts
    p, sig2, lam = params.p, params.sigma**2, surface.lam
    theta = consts.theta

    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    w = surface.value(t, z)
    w_t, w_z, wzz_l, wzz_r = surface.derivs(t, z)
    w_zz = wzz_l if second == "left" else wzz_r

    Dw = (
        -p * (consts.A - 0.5 * sig2 * (1.0 - p) * (z - theta) ** 2) * w
        + (1.0 - p) * sig2 * z * (1.0 - z) * (z - theta) * w_z
        - 0.5 * sig2 * z**2 * (1.0 - z) ** 2 * w_zz
    )
    parabolic = -w_t + Dw
    buy = lam * p * w - (1.0 + lam * z) * w_z
    sell = lam * p * w + (1.0 - lam * z) * w_z
    hmin = np.minimum(parabolic, np.minimum(buy, sell))
    if np.ndim(parabolic) == 0:
        return float(parabolic), float(buy), float(sell), float(hmin)
    return parabolic, buy, sell, hmin


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_margin: float
    worst_point: tuple

    def as_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "worst_margin": float(self.worst_margin),
            "worst_point": list(self.worst_point),
        }


@dataclass
class VerificationReport:
    lam: float
    passed: bool
    checks: list
    error: str = ""

    def as_dict(self):
        out = {"lambda": self.lam, "passed": bool(self.passed), "checks": [c.as_dict() for c in self.checks]}
        if self.error:
            out["error"] = self.error
        return out

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["check", "passed", "worst_margin", "worst_t", "worst_z"])
            for c in self.checks:
                pt = list(c.worst_point) + [math.nan] * (2 - len(c.worst_point))
                w.writerow([c.name, int(c.passed), f"{c.worst_margin:.17g}", pt[0], pt[1]])


def _scan_surface(surface, times, z_grid, tube, rel_tol, want_min):
    """Worst signed margin of hmin (relative to |w|) over the scan grid."""
    worst = math.inf if want_min else -math.inf
    worst_pt = (math.nan, math.nan)
    for t in times:
        z1 = float(surface.boundaries.zeta1(t))
        z2 = float(surface.boundaries.zeta2(t))
        keep = np.ones_like(z_grid, dtype=bool)
        for zc in (z1, z2):
            keep &= np.abs(z_grid - zc) > tube
        z = z_grid[keep]
        if z.size == 0:
            continue
        w = surface.value(t, z)
        _, _, _, hmin = hjb_residuals(surface, t, z)
        scale = np.maximum(np.abs(w), 1e-300)
        rel = hmin / scale
        if want_min:
            k = int(np.argmin(rel))
            if rel[k] < worst:
                worst, worst_pt = float(rel[k]), (float(t), float(z[k]))
        else:
            k = int(np.argmax(rel))
            if rel[k] > worst:
                worst, worst_pt = float(rel[k]), (float(t), float(z[k]))
    return worst, worst_pt


def verify_sub_super(
    params: MarketParams,
    consts: DerivedConstants,
    lam=None,
    nt=500,
    nz=500,
    window=None,
    tube=1e-8,
    rel_tol=1e-10,
    n_terminal=200,
    surfaces=None,
    n_times=DEFAULT_N_TIMES,
    margin=None,
) -> VerificationReport:
    """Grid scan certifying the super/subsolution inequalities.

    Checks, excluding a tube of half-width `tube` in z around the edge
    curves:

    * hmin(upper) >= -rel_tol |w| and hmin(lower) <= rel_tol |w|,
    * terminal dominance w_up(T, .) >= U_p(1 - lam |z|) >= w_low(T, .)
      at n_terminal samples across the whole strip,
    * both first-order operators of the upper surface are nonnegative on
      the closed band, and the buy operator vanishes on its lower edge.

    Report-style: boundary solve failures and inequality violations are
    returned as failed checks, never raised.
    """
    lam = params.lam if lam is None else lam
    checks = []
    if surfaces is None:
        try:
            upper, lower = make_surfaces(lam, params, consts, n_times=n_times, margin=margin)
        except (NoBracketError, BoundaryError) as exc:
            checks.append(CheckResult("boundary_solve", False, -math.inf, (math.nan, math.nan)))
            return VerificationReport(lam=lam, passed=False, checks=checks, error=str(exc))
    else:
        upper, lower = surfaces

    theta = consts.theta
    if window is None:
        safe = 0.999 / lam
        window = (max(theta - 0.45, -safe), min(theta + 0.45, safe))
    times = np.linspace(0.0, params.T, nt)
    z_grid = np.linspace(window[0], window[1], nz)

    worst_up, pt_up = _scan_surface(upper, times, z_grid, tube, rel_tol, want_min=True)
    checks.append(CheckResult("upper_hmin_nonnegative", worst_up >= -rel_tol, worst_up, pt_up))
    worst_lo, pt_lo = _scan_surface(lower, times, z_grid, tube, rel_tol, want_min=False)
    checks.append(CheckResult("lower_hmin_nonpositive", worst_lo <= rel_tol, worst_lo, pt_lo))

    # terminal dominance across the full strip
    z_term = np.linspace(-1.0 / lam, 1.0 / lam, n_terminal + 2)[1:-1]
    target = power_utility(1.0 - lam * np.abs(z_term), params.p)
    w_up_T = upper.value(params.T, z_term)
    w_lo_T = lower.value(params.T, z_term)
    scale = np.maximum(np.abs(target), 1.0)
    up_margin = np.min((w_up_T - target) / scale)
    k = int(np.argmin((w_up_T - target) / scale))
    checks.append(
        CheckResult("terminal_upper_dominates", up_margin >= -rel_tol, float(up_margin), (params.T, float(z_term[k])))
    )
    lo_margin = np.min((target - w_lo_T) / scale)
    k = int(np.argmin((target - w_lo_T) / scale))
    checks.append(
        CheckResult("terminal_lower_dominated", lo_margin >= -rel_tol, float(lo_margin), (params.T, float(z_term[k])))
    )

    # both trade operators of the upper surface on its closed band
    worst_gb = math.inf
    worst_gs = math.inf
    pt_gb = pt_gs = (math.nan, math.nan)
    edge_abs = 0.0
    for t in times:
        z1 = float(upper.boundaries.zeta1(t))
        z2 = float(upper.boundaries.zeta2(t))
        z = np.linspace(z1, z2, 64)
        w = upper.value(t, z)
        _, b, s, _ = hjb_residuals(upper, t, z)
        scale = np.maximum(np.abs(w), 1e-300)
        gb = np.min(b / scale)
        gs = np.min(s / scale)
        if gb < worst_gb:
            worst_gb, pt_gb = float(gb), (float(t), float(z[int(np.argmin(b / scale))]))
        if gs < worst_gs:
            worst_gs, pt_gs = float(gs), (float(t), float(z[int(np.argmin(s / scale))]))
        edge_abs = max(edge_abs, abs(float(b[0] / scale[0])))
    checks.append(CheckResult("band_buy_operator_nonnegative", worst_gb >= -rel_tol, worst_gb, pt_gb))
    checks.append(CheckResult("band_sell_operator_nonnegative", worst_gs >= -rel_tol, worst_gs, pt_gs))
    checks.append(CheckResult("buy_operator_zero_on_lower_edge", edge_abs <= 1e-9, edge_abs, (math.nan, math.nan)))

    return VerificationReport(lam=lam, passed=all(c.passed for c in checks), checks=checks)


def lambda_threshold(params, consts, lo=1e-8, hi=0.3, iters=12, **verify_kwargs):
    """Bisection estimate of the largest lam for which verify_sub_super passes.

    Coarse by construction; intended for reporting, not as a certified
    constant.
    """
    verify_kwargs.setdefault("nt", 60)
    verify_kwargs.setdefault("nz", 120)
    verify_kwargs.setdefault("n_times", 128)
    if not verify_sub_super(params, consts, lam=lo, **verify_kwargs).passed:
        return math.nan
    if verify_sub_super(params, consts, lam=hi, **verify_kwargs).passed:
        return hi
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if verify_sub_super(params, consts, lam=mid, **verify_kwargs).passed:
            lo = mid
        else:
            hi = mid
    return lo
