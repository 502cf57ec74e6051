import dataclasses
import math

import numpy as np
import pytest

from tcband import hjb
from tcband.model import derive_constants, merton_value, power_utility


@pytest.fixture(scope="module")
def ref_sol(ref, ref_consts):
    grid = hjb.default_grid(ref, ref_consts, nt=24)
    return hjb.solve(ref, ref_consts, grid)


class TestGridSpec:
    def test_band_enclosure_required(self, ref, ref_consts):
        g = hjb.GridSpec(z_min=0.48, z_max=0.52, nz=41, nt=4)
        with pytest.raises(ValueError, match="enclose"):
            g.validate(ref, ref_consts)

    def test_must_straddle_theta(self, ref, ref_consts):
        g = hjb.GridSpec(z_min=0.6, z_max=0.9, nz=41, nt=4)
        with pytest.raises(ValueError):
            g.validate(ref, ref_consts)

    def test_default_grid_has_theta_on_node(self, ref, ref_consts):
        g = hjb.default_grid(ref, ref_consts, nt=8)
        z = np.linspace(g.z_min, g.z_max, g.nz)
        assert np.min(np.abs(z - ref_consts.theta)) < 1e-12

    def test_default_grid_encloses_band_at_large_lambda(self, ref, ref_consts):
        pr = dataclasses.replace(ref, lam=1e-2)
        g = hjb.default_grid(pr, ref_consts, nt=8)
        g.validate(pr, ref_consts)


class TestExplicitSolve:
    def test_terminal_layer_exact(self, ref, ref_sol):
        want = power_utility(1.0 - ref.lam * np.abs(ref_sol.z), ref.p)
        assert np.array_equal(ref_sol.values[-1], want)

    def test_complementarity_and_feasibility(self, ref_sol):
        interior = ref_sol.residual_parabolic[:-1, 1:-1]
        buy = ref_sol.residual_buy[:-1, 1:-1]
        sell = ref_sol.residual_sell[:-1, 1:-1]
        assert interior.min() >= -1e-9
        assert buy.min() >= -1e-12
        assert sell.min() >= -1e-12
        smallest = np.minimum(np.abs(interior), np.minimum(np.abs(buy), np.abs(sell)))
        assert smallest.max() <= 1e-9

    def test_value_decreases_with_lambda(self, ref, ref_consts):
        grid = hjb.GridSpec(z_min=0.25, z_max=0.75, nz=201, nt=8)
        prev = None
        for lam in (1e-4, 1e-3):
            sol = hjb.solve(dataclasses.replace(ref, lam=lam), ref_consts, grid)
            if prev is not None:
                assert np.all(sol.values <= prev + 1e-12)
            prev = sol.values

    def test_edges_follow_trade_transport(self, ref, ref_sol):
        lam, p = ref.lam, ref.p
        z = ref_sol.z
        for k in range(len(ref_sol.times) - 1):
            row = ref_sol.values[k]
            assert math.isclose(row[0], row[1] * ((1 + lam * z[0]) / (1 + lam * z[1])) ** p, rel_tol=1e-12)
            assert math.isclose(row[-1], row[-2] * ((1 - lam * z[-1]) / (1 - lam * z[-2])) ** p, rel_tol=1e-12)

    def test_frictionless_limit_quick(self, ref, ref_consts):
        pr = dataclasses.replace(ref, lam=1e-8)
        grid = hjb.default_grid(pr, ref_consts, dz_target=2e-3, nt=16)
        sol = hjb.solve(pr, ref_consts, grid)
        j = int(np.argmin(np.abs(sol.z - ref_consts.theta)))
        mv = merton_value(0.0, 1.0, pr, ref_consts)
        assert abs(sol.values[0, j] - mv) / mv < 1e-3


class TestInterpolate:
    def test_node_identity(self, ref_sol):
        k, j = 3, 17
        got = ref_sol.interpolate(ref_sol.times[k], ref_sol.z[j])
        assert got == ref_sol.values[k, j]

    def test_terminal_midpoint_average(self, ref_sol):
        j = 10
        zm = 0.5 * (ref_sol.z[j] + ref_sol.z[j + 1])
        got = ref_sol.interpolate(ref_sol.times[-1], zm)
        want = 0.5 * (ref_sol.values[-1, j] + ref_sol.values[-1, j + 1])
        assert math.isclose(got, want, rel_tol=1e-14)

    def test_out_of_hull_rejected(self, ref_sol):
        with pytest.raises(ValueError):
            ref_sol.interpolate(ref_sol.times[0] - 0.01, 0.5)
        with pytest.raises(ValueError):
            ref_sol.interpolate(0.5, ref_sol.z[-1] + 0.01)

    def test_refinement_contracts(self, ref, ref_consts):
        # |u_h - u_{h/2}| at (0, theta) shrinks by at least 1.7x per halving
        diffs = []
        prev = None
        for factor in (1.0, 0.5, 0.25):
            dz = ref_consts.nu * ref.lam ** (1 / 3) / 40.0 * factor
            grid = hjb.default_grid(ref, ref_consts, dz_target=dz, nt=16, width=0.25)
            sol = hjb.solve(ref, ref_consts, grid)
            j = int(np.argmin(np.abs(sol.z - ref_consts.theta)))
            val = sol.values[0, j]
            if prev is not None:
                diffs.append(abs(val - prev))
            prev = val
        assert diffs[0] / diffs[1] >= 1.7


class TestBoundaryExtraction:
    def test_band_straddles_theta(self, ref_consts, ref_sol):
        ts, z1, z2, dz = hjb.extract_boundaries(ref_sol)
        ok = ~np.isnan(z1) & ~np.isnan(z2)
        assert ok.sum() >= len(ts) - 2
        assert np.all(z1[ok] < ref_consts.theta)
        assert np.all(z2[ok] > ref_consts.theta)

    def test_edge_location_near_first_order(self, ref, ref_consts, ref_sol):
        ts, z1, z2, dz = hjb.extract_boundaries(ref_sol)
        half = 0.5 * ref_consts.nu * ref.lam ** (1 / 3)
        assert abs((z2[0] - ref_consts.theta) - half) <= 2 * dz + 0.2 * half

    def test_width_scales_like_cube_root(self, ref, ref_consts):
        lams = (1e-5, 1e-4, 1e-3, 1e-2)
        widths = []
        for lam in lams:
            pr = dataclasses.replace(ref, lam=lam)
            dz = ref_consts.nu * lam ** (1 / 3) / 40.0
            grid = hjb.default_grid(pr, ref_consts, dz_target=dz, nt=8, width=0.12)
            sol = hjb.solve(pr, ref_consts, grid)
            ts, z1, z2, _ = hjb.extract_boundaries(sol)
            widths.append(z2[0] - z1[0])
        slope = np.polyfit(np.log(lams), np.log(widths), 1)[0]
        assert abs(slope - 1 / 3) <= 0.07


class TestPenaltyScheme:
    def test_agrees_with_explicit(self, ref, ref_consts):
        grid_e = hjb.GridSpec(z_min=0.26, z_max=0.74, nz=241, nt=24, scheme="explicit-projected")
        grid_p = hjb.GridSpec(z_min=0.26, z_max=0.74, nz=241, nt=480, scheme="implicit-penalty")
        sol_e = hjb.solve(ref, ref_consts, grid_e)
        sol_p = hjb.solve(ref, ref_consts, grid_p)
        j = int(np.argmin(np.abs(sol_e.z - ref_consts.theta)))
        # truncation estimates from one refinement of each scheme
        sol_e2 = hjb.solve(ref, ref_consts, dataclasses.replace(grid_e, nz=481))
        sol_p2 = hjb.solve(ref, ref_consts, dataclasses.replace(grid_p, nt=960))
        j2 = int(np.argmin(np.abs(sol_e2.z - ref_consts.theta)))
        err = abs(sol_e.values[0, j] - sol_e2.values[0, j2]) + abs(sol_p.values[0, j] - sol_p2.values[0, j])
        diff = abs(sol_e.values[0, j] - sol_p.values[0, j])
        assert diff <= 3.0 * max(err, 1e-10)

    def test_penalty_complementarity(self, ref, ref_consts):
        grid = hjb.GridSpec(z_min=0.27, z_max=0.73, nz=121, nt=60, scheme="implicit-penalty")
        sol = hjb.solve(ref, ref_consts, grid)
        scale = np.abs(sol.values[:-1, 1:-1])
        buy = sol.residual_buy[:-1, 1:-1]
        sell = sol.residual_sell[:-1, 1:-1]
        # penalty rho = 1e6 leaves O(1e-6)-scale constraint violations
        assert buy.min() >= -1e-5 * scale.max()
        assert sell.min() >= -1e-5 * scale.max()

    def test_stats_record_scheme(self, ref, ref_consts):
        grid = hjb.GridSpec(z_min=0.27, z_max=0.73, nz=61, nt=10, scheme="implicit-penalty")
        sol = hjb.solve(ref, ref_consts, grid)
        assert sol.stats["scheme"] == "implicit-penalty"
        assert sol.stats["newton_iterations"] > 0


class TestSerialization:
    def test_save_files(self, tmp_path, ref_sol):
        ref_sol.save(tmp_path / "sol")
        assert (tmp_path / "sol.json").exists()
        rows = (tmp_path / "sol.csv").read_text().strip().splitlines()
        assert len(rows) == ref_sol.values.shape[0]
        assert len(rows[0].split(",")) == ref_sol.values.shape[1]
