"""Reference PDE solve of the trading variational inequality.

Backward in time from the liquidation payoff u(T, z) = U_p(1 - lam |z|),
on a truncated z-interval, the reduced value function solves

    min( -u_t + D u,  lam p u - (1 + lam z) u_z,  lam p u + (1 - lam z) u_z ) = 0.

Two schemes are provided: an explicit upwinded step combined with exact
projection onto the trade constraints (default), and an implicit step
with penalized constraints solved by semismooth Newton.  The grid stores
nt+1 time layers; the explicit scheme substeps internally to satisfy its
CFL bound.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .model import DerivedConstants, MarketParams, power_utility

BUY, BAND, SELL = -1, 0, 1
CFL_SAFETY = 0.45
PENALTY_RHO = 1e6
MAX_SWEEPS = 5


class SolverError(RuntimeError):
    """Scheme aborted: CFL violation or Newton non-convergence."""


@dataclass(frozen=True)
class GridSpec:
    """Truncated (t, z) mesh. nt counts stored time intervals."""

    z_min: float
    z_max: float
    nz: int
    nt: int
    scheme: str = "explicit-projected"
    dt_max: float | None = None

    def validate(self, params: MarketParams, consts: DerivedConstants):
        lam = params.lam
        if not (self.z_min < consts.theta < self.z_max):
            raise ValueError("grid must straddle theta")
        if self.nz < 3 or self.nt < 1:
            raise ValueError("need nz >= 3 and nt >= 1")
        if not (-1.0 / lam < self.z_min and self.z_max < 1.0 / lam):
            raise ValueError("grid must lie inside (-1/lambda, 1/lambda)")
        half = 2.0 * consts.nu * lam ** (1.0 / 3.0)
        if self.z_min > consts.theta - half or self.z_max < consts.theta + half:
            raise ValueError("grid must enclose theta +/- 2 nu lambda^(1/3)")
        if self.scheme not in ("explicit-projected", "implicit-penalty"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class GridSolution:
    """Discrete u on the mesh with region labels and constraint residuals.

    regions: -1 buy-active, 0 no-trade, +1 sell-active, per stored node
    (terminal layer labeled from the trade margins of the payoff).
    Residual arrays share the layer layout; the parabolic residual row of
    the terminal layer is zero by convention.
    """

    spec: GridSpec
    lam: float
    times: np.ndarray
    z: np.ndarray
    values: np.ndarray
    regions: np.ndarray
    residual_parabolic: np.ndarray
    residual_buy: np.ndarray
    residual_sell: np.ndarray
    stats: dict = field(default_factory=dict)

    # -- queries ---------------------------------------------------------
    def interpolate(self, t, z):
        """Bilinear interpolation inside the stored hull."""
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        if np.any(t < self.times[0]) or np.any(t > self.times[-1]):
            raise ValueError("t outside stored hull")
        if np.any(z < self.z[0]) or np.any(z > self.z[-1]):
            raise ValueError("z outside stored hull")
        it = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        iz = np.clip(np.searchsorted(self.z, z, side="right") - 1, 0, len(self.z) - 2)
        wt = (t - self.times[it]) / (self.times[it + 1] - self.times[it])
        wz = (z - self.z[iz]) / (self.z[iz + 1] - self.z[iz])
        v00 = self.values[it, iz]
        v01 = self.values[it, iz + 1]
        v10 = self.values[it + 1, iz]
        v11 = self.values[it + 1, iz + 1]
        out = (1 - wt) * ((1 - wz) * v00 + wz * v01) + wt * ((1 - wz) * v10 + wz * v11)
        return float(out) if out.ndim == 0 else out

    def value_at(self, t, z):
        return self.interpolate(t, z)

    # -- serialization ---------------------------------------------------
    def save(self, path_prefix):
        """Portable dump: <prefix>.json header plus <prefix>.csv value matrix."""
        header = {
            "lambda": self.lam,
            "grid": {
                "z_min": self.spec.z_min,
                "z_max": self.spec.z_max,
                "nz": self.spec.nz,
                "nt": self.spec.nt,
                "scheme": self.spec.scheme,
            },
            "times": self.times.tolist(),
            "z": self.z.tolist(),
            "stats": self.stats,
        }
        with open(f"{path_prefix}.json", "w") as fh:
            json.dump(header, fh)
        with open(f"{path_prefix}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.values:
                w.writerow([f"{v:.17g}" for v in row])


def _coefficients(params, consts, z):
    p, sig2, theta = params.p, params.sigma**2, consts.theta
    c0 = -p * (consts.A - 0.5 * sig2 * (1.0 - p) * (z - theta) ** 2)
    c1 = (1.0 - p) * sig2 * z * (1.0 - z) * (z - theta)
    c2 = 0.5 * sig2 * z**2 * (1.0 - z) ** 2
    return c0, c1, c2


def _transport_factors(params, z):
    """One-node trade transports: buying pulls value from the right
    neighbor, selling from the left."""
    lam, p = params.lam, params.p
    buy = ((1.0 + lam * z[:-1]) / (1.0 + lam * z[1:])) ** p
    sell = ((1.0 - lam * z[1:]) / (1.0 - lam * z[:-1])) ** p
    return buy, sell


def _project_trades(u, gbuy, gsell):
    """Impose u_j >= transported values of every reachable node.

    gbuy = (1 + lam z)^p, gsell = (1 - lam z)^p.  Uses suffix/prefix
    running maxima of u scaled by the transport gauges, so each pass
    applies all multi-node trades at once; iterated to a fixed point
    (at most MAX_SWEEPS rounds).
    """
    for sweep in range(MAX_SWEEPS):
        changed = False
        q = u / gbuy
        np.maximum.accumulate(q[::-1], out=q[::-1])
        ub = gbuy * q
        if np.any(ub > u):
            np.maximum(u, ub, out=u)
            changed = True
        s = u / gsell
        np.maximum.accumulate(s, out=s)
        us = gsell * s
        if np.any(us > u):
            np.maximum(u, us, out=u)
            changed = True
        if not changed:
            return sweep + 1
    return MAX_SWEEPS


def _trade_margins(u, gbuy, gsell):
    """Slack of each node against its best attainable trade (inf when the
    node has no trade counterparty on the required side)."""
    n = u.size
    mb = np.full(n, np.inf)
    q = u / gbuy
    suffix = np.maximum.accumulate(q[::-1])[::-1]
    mb[:-1] = u[:-1] - gbuy[:-1] * suffix[1:]
    ms = np.full(n, np.inf)
    s = u / gsell
    prefix = np.maximum.accumulate(s)
    ms[1:] = u[1:] - gsell[1:] * prefix[:-1]
    return mb, ms


def solve(params: MarketParams, consts: DerivedConstants, grid: GridSpec) -> GridSolution:
    """Backward solve of the variational inequality on the given mesh."""
    grid.validate(params, consts)
    if grid.scheme == "explicit-projected":
        return _solve_explicit(params, consts, grid)
    return _solve_implicit(params, consts, grid)


def _solve_explicit(params, consts, grid):
    lam, p = params.lam, params.p
    z = np.linspace(grid.z_min, grid.z_max, grid.nz)
    dz = z[1] - z[0]
    times = np.linspace(params.t0, params.T, grid.nt + 1)
    c0, c1, c2 = _coefficients(params, consts, z)
    dt_cfl = CFL_SAFETY * dz**2 / c2.max()
    if grid.dt_max is not None:
        dt_cfl = min(dt_cfl, grid.dt_max)

    gbuy = (1.0 + lam * z) ** p
    gsell = (1.0 - lam * z) ** p
    edge_buy = ((1.0 + lam * z[0]) / (1.0 + lam * z[1])) ** p
    edge_sell = ((1.0 - lam * z[-1]) / (1.0 - lam * z[-2])) ** p

    nz = grid.nz
    values = np.empty((grid.nt + 1, nz))
    regions = np.zeros((grid.nt + 1, nz), dtype=np.int8)
    res_par = np.zeros((grid.nt + 1, nz))
    res_buy = np.zeros((grid.nt + 1, nz))
    res_sell = np.zeros((grid.nt + 1, nz))

    u = power_utility(1.0 - lam * np.abs(z), p)
    values[-1] = u
    mb, ms = _trade_margins(u, gbuy, gsell)
    res_buy[-1], res_sell[-1] = mb, ms
    regions[-1] = _label(np.full(nz, np.inf), mb, ms)

    fwd = np.empty(nz)
    bwd = np.empty(nz)
    total_substeps = 0
    max_sweeps = 0
    u = u.copy()
    for k in range(grid.nt - 1, -1, -1):
        span = times[k + 1] - times[k]
        n_sub = max(1, int(np.ceil(span / dt_cfl)))
        dt = span / n_sub
        for j in range(n_sub):
            # upwinded first derivative by drift sign
            fwd[:-1] = (u[1:] - u[:-1]) / dz
            fwd[-1] = 0.0
            bwd[1:] = (u[1:] - u[:-1]) / dz
            bwd[0] = 0.0
            u_z = np.where(c1 > 0.0, bwd, fwd)
            u_zz = np.empty_like(u)
            u_zz[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dz**2
            u_zz[0] = u_zz[-1] = 0.0
            du = c0 * u + c1 * u_z - c2 * u_zz
            u = u - dt * du
            # truncation edges live in pure trade regions
            u[0] = u[1] * edge_buy
            u[-1] = u[-2] * edge_sell
            pred = u.copy()
            sweeps = _project_trades(u, gbuy, gsell)
            max_sweeps = max(max_sweeps, sweeps)
            total_substeps += 1
            last = j == n_sub - 1
            if last:
                values[k] = u
                res_par[k] = (u - pred) / dt
                res_par[k, 0] = res_par[k, -1] = np.inf
                mb, ms = _trade_margins(u, gbuy, gsell)
                res_buy[k], res_sell[k] = mb, ms
                regions[k] = _label(res_par[k], mb, ms)

    stats = {
        "scheme": grid.scheme,
        "dt_cfl": dt_cfl,
        "substeps": total_substeps,
        "max_projection_sweeps": max_sweeps,
        "params_hash": _fingerprint(params, consts, grid),
    }
    return GridSolution(
        spec=grid,
        lam=lam,
        times=times,
        z=z,
        values=values,
        regions=regions,
        residual_parabolic=res_par,
        residual_buy=res_buy,
        residual_sell=res_sell,
        stats=stats,
    )


def _label(res_par, res_buy, res_sell):
    """Active-constraint label per node: whichever residual is smallest."""
    stacked = np.vstack([np.abs(res_buy), np.abs(res_par), np.abs(res_sell)])
    arg = np.argmin(stacked, axis=0)
    return (arg - 1).astype(np.int8)


def _fingerprint(params, consts, grid):
    blob = repr((params, consts, grid)).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# -- implicit-penalty scheme ----------------------------------------------


def _solve_implicit(params, consts, grid, rho=PENALTY_RHO, newton_tol=1e-10, max_newton=50):
    lam, p = params.lam, params.p
    z = np.linspace(grid.z_min, grid.z_max, grid.nz)
    dz = z[1] - z[0]
    nz = grid.nz
    times = np.linspace(params.t0, params.T, grid.nt + 1)
    c0, c1, c2 = _coefficients(params, consts, z)

    gbuy = (1.0 + lam * z) ** p
    gsell = (1.0 - lam * z) ** p
    edge_buy = ((1.0 + lam * z[0]) / (1.0 + lam * z[1])) ** p
    edge_sell = ((1.0 - lam * z[-1]) / (1.0 - lam * z[-2])) ** p

    # interior rows of I + dt*D (assembled per step since dt varies only
    # with the layer spacing, which is uniform here)
    dt = times[1] - times[0]
    main = np.ones(nz) + dt * (c0 + np.abs(c1) / dz + 2.0 * c2 / dz**2)
    upper = dt * (np.where(c1 < 0.0, c1, 0.0) / dz - c2 / dz**2)
    lower = dt * (-np.where(c1 > 0.0, c1, 0.0) / dz - c2 / dz**2)
    A = sp.diags([lower[1:], main, upper[:-1]], offsets=[-1, 0, 1], format="lil")
    # truncation edge rows: exact trade transport
    A[0, :] = 0.0
    A[0, 0], A[0, 1] = 1.0, -edge_buy
    A[-1, :] = 0.0
    A[-1, -1], A[-1, -2] = 1.0, -edge_sell
    A = A.tocsr()

    # one-sided trade operators (rows 0 / nz-1 excluded via masks below)
    Bop = sp.diags(
        [lam * p + (1.0 + lam * z) / dz, -(1.0 + lam * z[:-1]) / dz], offsets=[0, 1], format="csr"
    )
    Sop = sp.diags(
        [lam * p + (1.0 - lam * z) / dz, -(1.0 - lam * z[1:]) / dz], offsets=[0, -1], format="csr"
    )

    values = np.empty((grid.nt + 1, nz))
    regions = np.zeros((grid.nt + 1, nz), dtype=np.int8)
    res_par = np.zeros((grid.nt + 1, nz))
    res_buy = np.zeros((grid.nt + 1, nz))
    res_sell = np.zeros((grid.nt + 1, nz))

    u = power_utility(1.0 - lam * np.abs(z), p)
    values[-1] = u
    mb, ms = _trade_margins(u, gbuy, gsell)
    res_buy[-1], res_sell[-1] = mb, ms
    regions[-1] = _label(np.full(nz, np.inf), mb, ms)

    scale = max(1.0, float(np.max(np.abs(u))))
    newton_total = 0
    interior = np.ones(nz, dtype=bool)
    interior[0] = interior[-1] = False
    for k in range(grid.nt - 1, -1, -1):
        u_later = values[k + 1]
        rhs = u_later.copy()
        rhs[0] = rhs[-1] = 0.0
        u = u_later.copy()
        # sticky active sets: near the free boundary the constraint value of a
        # legitimately active node is -dt*Pu/rho, which underflows toward 0;
        # a strict sign test there flips membership on roundoff and cycles.
        deadband = 1e-12 * scale
        pen_b = np.zeros(nz, dtype=bool)
        pen_s = np.zeros(nz, dtype=bool)
        converged = False
        sets_stable = False
        for it in range(max_newton):
            bu = Bop @ u
            su = Sop @ u
            bu[-1] = su[0] = 0.0
            new_b = interior & ((bu < -deadband) | (pen_b & (bu <= deadband)))
            new_s = interior & ((su < -deadband) | (pen_s & (su <= deadband)))
            sets_stable = it > 0 and np.array_equal(new_b, pen_b) and np.array_equal(new_s, pen_s)
            pen_b, pen_s = new_b, new_s
            F = A @ u - rhs - rho * (np.where(pen_b, -bu, 0.0) + np.where(pen_s, -su, 0.0))
            # the penalized residual carries a rho * eps roundoff floor, so the
            # tolerance is enforced on the Newton increment instead
            if np.max(np.abs(F)) <= newton_tol * scale:
                converged = True
                break
            J = A + rho * (sp.diags(pen_b.astype(float)) @ Bop + sp.diags(pen_s.astype(float)) @ Sop)
            step = spsolve(J.tocsr(), F)
            u = u - step
            newton_total += 1
            if sets_stable and np.max(np.abs(step)) <= newton_tol * scale:
                converged = True
                break
        if not converged:
            raise SolverError(
                f"penalty Newton stalled at layer {k}: |F| = {np.max(np.abs(F)):.3e}"
            )
        values[k] = u
        res_par[k] = (A @ u - rhs) / dt
        res_par[k, 0] = res_par[k, -1] = np.inf
        mb, ms = _trade_margins(u, gbuy, gsell)
        res_buy[k], res_sell[k] = mb, ms
        regions[k] = _label(res_par[k], mb, ms)

    stats = {
        "scheme": grid.scheme,
        "rho": rho,
        "newton_iterations": newton_total,
        "params_hash": _fingerprint(params, consts, grid),
    }
    return GridSolution(
        spec=grid,
        lam=lam,
        times=times,
        z=z,
        values=values,
        regions=regions,
        residual_parabolic=res_par,
        residual_buy=res_buy,
        residual_sell=res_sell,
        stats=stats,
    )


def extract_boundaries(sol: GridSolution):
    """Numerical band edges from the region labels, one pair per layer.

    Returns (times, zeta1, zeta2, dz): innermost buy-labeled node and
    innermost sell-labeled node; NaN where a side has no labeled nodes
    (degenerate layer, e.g. very close to maturity).
    """
    nt = len(sol.times) - 1
    zeta1 = np.full(nt, np.nan)
    zeta2 = np.full(nt, np.nan)
    for k in range(nt):
        lab = sol.regions[k]
        buys = np.nonzero(lab == BUY)[0]
        sells = np.nonzero(lab == SELL)[0]
        if buys.size:
            zeta1[k] = sol.z[buys.max()]
        if sells.size:
            zeta2[k] = sol.z[sells.min()]
    dz = sol.z[1] - sol.z[0]
    return sol.times[:nt], zeta1, zeta2, dz


def default_grid(params, consts, dz_target=None, nt=None, scheme="explicit-projected", width=0.45):
    """Study mesh centered so that theta is exactly on a node.

    The window is theta +/- width clipped to (0.01, 0.99) style bounds
    inside the solvency strip; dz_target defaults to the band-resolving
    policy nu lam^(1/3) / 40.
    """
    lam = params.lam
    if dz_target is None:
        dz_target = consts.nu * lam ** (1.0 / 3.0) / 40.0
    band = 2.05 * consts.nu * lam ** (1.0 / 3.0)
    lo_lim = max(min(0.01, consts.theta - band), -0.99 / lam)
    hi_lim = min(max(0.99, consts.theta + band), 0.99 / lam)
    lo = min(max(lo_lim, consts.theta - width), consts.theta - band)
    hi = max(min(hi_lim, consts.theta + width), consts.theta + band)
    m1 = int(np.ceil((consts.theta - lo) / dz_target))
    m2 = int(np.ceil((hi - consts.theta) / dz_target))
    z_min = consts.theta - m1 * dz_target
    z_max = consts.theta + m2 * dz_target
    if nt is None:
        nt = 64
    return GridSpec(z_min=z_min, z_max=z_max, nz=m1 + m2 + 1, nt=nt, scheme=scheme)
