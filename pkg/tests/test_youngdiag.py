import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import apfx

from conftest import random_ensemble


@pytest.fixture(scope="module")
def grid():
    return apfx.make_grid(0.0, 1.0, 16)


@pytest.fixture(scope="module")
def driver(grid):
    return apfx.sample_driver(grid, 300, 1, seed=63)


def result_from_alphas(levels, alphas, M):
    L = len(levels)
    pairwise = np.zeros((L, L))
    return apfx.SchemeResult(levels=tuple(levels), alphas=tuple(alphas),
                             residuals=(np.zeros(M),) * L,
                             level_stats=((0.0, 0.0),) * L, pairwise=pairwise,
                             iterations_used=(1,) * L, converged=(True,) * L)


class TestBattery:
    def test_core_functionals_present(self, grid):
        battery = apfx.test_battery(grid, 1, count=5, seed=1)
        names = [g.name for g in battery]
        assert names[0] == "endpoint_abs" and names[1] == "sup_norm"
        assert names[2] == "time_average"
        assert names[3].startswith("sin_linear") and names[4].startswith("sin_driver")

    def test_count_extends_battery(self, grid):
        battery = apfx.test_battery(grid, 1, count=9, seed=1)
        assert len(battery) == 9

    def test_seed_determinism(self, grid, driver):
        x = random_ensemble(grid, 300, 1, seed=2)
        a = apfx.test_battery(grid, 1, count=8, seed=5)
        b = apfx.test_battery(grid, 1, count=8, seed=5)
        for ga, gb in zip(a, b):
            assert ga.name == gb.name
            assert np.array_equal(ga(x.values, driver.paths), gb(x.values, driver.paths))

    def test_endpoint_on_zero_path(self, grid, driver):
        battery = apfx.test_battery(grid, 1, count=5, seed=1)
        x = apfx.constant_ensemble(grid, 300, 1, 0.0)
        assert np.all(battery[0](x.values, driver.paths) == 0.0)

    def test_sup_norm_clipped_at_one(self, grid, driver):
        battery = apfx.test_battery(grid, 1, count=5, seed=1)
        x = apfx.constant_ensemble(grid, 300, 1, 3.0)
        assert np.all(battery[1](x.values, driver.paths) == 1.0)

    @given(st.integers(0, 2**31), st.floats(0.1, 1e6))
    @settings(max_examples=25, deadline=None)
    def test_all_functionals_bounded_on_arbitrary_inputs(self, seed, scale):
        grid = apfx.make_grid(0, 1, 8)
        drv = apfx.sample_driver(grid, 20, 1, seed=3)
        battery = apfx.test_battery(grid, 1, count=7, seed=4)
        x = random_ensemble(grid, 20, 1, seed=seed, scale=scale)
        for g in battery:
            out = g(x.values, drv.paths)
            assert np.all(np.abs(out) <= 1.0)

    def test_count_precondition(self, grid):
        with pytest.raises(ValueError):
            apfx.test_battery(grid, 1, count=0, seed=0)


class TestNarrowStats:
    def test_identical_alphas_zero_diffs(self, grid, driver):
        x = random_ensemble(grid, 300, 1, seed=5)
        res = result_from_alphas([2, 4, 8], [x, x, x], 300)
        battery = apfx.test_battery(grid, 1, count=6, seed=1)
        table = apfx.narrow_stats(res, driver, battery)
        for row in table.rows:
            if row.diff is not None:
                assert row.diff == 0.0
        assert all(table.flags.values())

    def test_purity_bitwise(self, grid, driver):
        x = random_ensemble(grid, 300, 1, seed=6)
        y = random_ensemble(grid, 300, 1, seed=7)
        res = result_from_alphas([2, 4], [x, y], 300)
        battery = apfx.test_battery(grid, 1, count=5, seed=2)
        t1 = apfx.narrow_stats(res, driver, battery)
        t2 = apfx.narrow_stats(res, driver, battery)
        assert t1 == t2

    def test_scenario_permutation_invariance(self, grid, driver):
        x = random_ensemble(grid, 300, 1, seed=8)
        res = result_from_alphas([2, 4], [x, x], 300)
        battery = apfx.test_battery(grid, 1, count=5, seed=3)
        base = apfx.narrow_stats(res, driver, battery)
        perm = apfx.substream(0, 1).permutation(300)
        x_p = apfx.ensemble_from_values(grid, x.values[perm])
        drv_p = apfx.driver_from_increments(grid, driver.increments[perm], seed=driver.seed)
        res_p = result_from_alphas([2, 4], [x_p, x_p], 300)
        got = apfx.narrow_stats(res_p, drv_p, battery)
        for r1, r2 in zip(base.rows, got.rows):
            assert r1.estimate == pytest.approx(r2.estimate, abs=1e-12)

    def test_pointwise_convergent_sequence(self, grid, driver):
        # alpha_n = x + x/n converges per scenario; diffs shrink monotonically up to 1 inversion
        x = random_ensemble(grid, 300, 1, seed=9)
        levels = [1, 2, 4, 8, 16]
        alphas = [apfx.ensemble_from_values(grid, x.values + x.values / n) for n in levels]
        res = result_from_alphas(levels, alphas, 300)
        battery = apfx.test_battery(grid, 1, count=8, seed=4)
        table = apfx.narrow_stats(res, driver, battery)
        assert all(table.flags.values())

    def test_empty_battery_rejected(self, grid, driver):
        x = random_ensemble(grid, 300, 1, seed=10)
        res = result_from_alphas([2, 4], [x, x], 300)
        with pytest.raises(ValueError):
            apfx.narrow_stats(res, driver, [])


class TestWeakSummary:
    def test_constant_ensemble(self, grid, driver):
        c = 1.7
        x = apfx.constant_ensemble(grid, 300, 1, c)
        s = apfx.weak_summary(x, driver)
        assert np.allclose(s.node_mean, c)
        assert np.all(s.node_var <= 1e-25)

    def test_brownian_variance_tracks_time(self):
        grid = apfx.make_grid(0, 1, 32)
        M = 4000
        drv = apfx.sample_driver(grid, M, 1, seed=71)
        s = apfx.weak_summary(apfx.driver_as_ensemble(drv), drv)
        for k in range(grid.N + 1):
            t = grid.nodes[k]
            assert abs(s.node_var[k, 0] - t) <= 4 * s.node_var_se[k, 0] + 1e-12

    def test_exceedance_ladder(self, grid, driver):
        x = apfx.constant_ensemble(grid, 300, 1, 3.0)
        s = apfx.weak_summary(x, driver)
        ladder = dict(s.exceedance)
        assert ladder[1e18] == 0.0
        assert ladder[2.0] == 1.0
        assert ladder[4.0] == 0.0
