import numpy as np
import pytest

import apfx

from conftest import random_ensemble


@pytest.fixture(scope="module")
def grid():
    return apfx.make_grid(0.0, 1.0, 40)


class TestModulusReport:
    def test_constant_paths(self, grid):
        x = apfx.constant_ensemble(grid, 10, 1, 4.2)
        rows = apfx.modulus_report(x, [0.1, 0.2])
        assert all(r.median == 0.0 and r.q95 == 0.0 for r in rows)

    def test_linear_slope_one(self):
        grid = apfx.make_grid(0, 1, 40)  # dt = 0.025 divides 0.1
        vals = np.broadcast_to(grid.nodes[None, :, None], (3, 41, 1)).copy()
        x = apfx.ensemble_from_values(grid, vals)
        rows = apfx.modulus_report(x, [0.1])
        assert rows[0].median == pytest.approx(0.1, abs=1e-12)

    def test_brownian_monotone_in_delta(self):
        grid = apfx.make_grid(0, 1, 64)
        drv = apfx.sample_driver(grid, 400, 1, seed=17)
        rows = apfx.modulus_report(apfx.driver_as_ensemble(drv), [0.5, 0.25, 0.125, 0.0625])
        medians = [r.median for r in rows]
        inversions = sum(1 for i in range(len(medians) - 1) if medians[i + 1] >= medians[i])
        assert inversions <= 1, medians

    def test_delta_below_resolution(self, grid):
        x = apfx.constant_ensemble(grid, 2, 1, 0.0)
        with pytest.raises(ValueError, match="resolution"):
            apfx.modulus_report(x, [grid.dt / 2])


class TestKolmogorovEstimate:
    def test_brownian_exponent(self):
        # E|W_t - W_s|^2 = |t-s| so the log-log slope is close to 1
        grid = apfx.make_grid(0, 1, 128)
        drv = apfx.sample_driver(grid, 4000, 1, seed=5)
        fit = apfx.kolmogorov_estimate(apfx.driver_as_ensemble(drv), pair_count=64, seed=2)
        assert not fit.degenerate
        assert 0.8 <= fit.fitted_exponent <= 1.2
        assert fit.r2 > 0.9

    def test_constant_degenerate(self, grid):
        x = apfx.constant_ensemble(grid, 50, 1, 3.0)
        fit = apfx.kolmogorov_estimate(x, pair_count=16, seed=1)
        assert fit.degenerate
        assert np.isnan(fit.fitted_exponent)

    def test_bounded_integrand_moment_bound(self):
        # |u| <= 1 gives E (J u(t) - J u(s))^2 = E int_s^t u^2 <= |t-s|
        grid = apfx.make_grid(0, 1, 128)
        M = 4000
        drv = apfx.sample_driver(grid, M, 1, seed=6)
        u = apfx.ensemble_from_values(grid, np.clip(drv.paths, -1, 1))
        out = apfx.apply(apfx.ito_integral(), u, drv)
        fit = apfx.kolmogorov_estimate(out, pair_count=64, seed=3)
        gaps, ests = fit.pairs[:, 0], fit.pairs[:, 1]
        assert np.all(ests <= gaps + 4 * fit.pair_se)

    def test_scaled_integrand_moment_bound(self):
        # |u| <= C gives pair estimates <= C^2 |t-s| + 4 SE
        C = 2.5
        grid = apfx.make_grid(0, 1, 64)
        drv = apfx.sample_driver(grid, 2000, 1, seed=7)
        u = apfx.ensemble_from_values(grid, np.clip(drv.paths, -C, C))
        out = apfx.apply(apfx.ito_integral(), u, drv)
        fit = apfx.kolmogorov_estimate(out, pair_count=48, seed=4)
        assert np.all(fit.pairs[:, 1] <= C * C * fit.pairs[:, 0] + 4 * fit.pair_se)

    def test_pair_count_precondition(self, grid):
        x = apfx.constant_ensemble(grid, 5, 1, 0.0)
        with pytest.raises(ValueError):
            apfx.kolmogorov_estimate(x, pair_count=1, seed=0)


class TestTightSetProbe:
    def test_constants_inside(self, grid):
        xs = [apfx.constant_ensemble(grid, 20, 1, v) for v in (0.1, -0.4, 0.9)]
        rep = apfx.tight_set_probe(xs, R=1.0, modulus_pairs=[(0.1, 0.5)], sigma=0.01)
        assert rep.exceedance == 0.0

    def test_single_outlier_fraction(self, grid):
        vals = np.zeros((100, grid.N + 1, 1))
        vals[17] = 10.0  # one scenario at sup norm 10R for R=1
        x = apfx.ensemble_from_values(grid, vals)
        rep = apfx.tight_set_probe([x], R=1.0, modulus_pairs=[], sigma=0.05)
        assert rep.exceedance == pytest.approx(0.01)

    def test_calibrated_compact_on_independent_seed(self):
        grid = apfx.make_grid(0, 1, 64)
        deltas = (0.25, 0.125)

        def j_outputs(seed):
            drv = apfx.sample_driver(grid, 1000, 1, seed=seed)
            u = apfx.ensemble_from_values(grid, np.clip(drv.paths, -1, 1))
            return apfx.apply(apfx.ito_integral(), u, drv)

        calib = [j_outputs(s) for s in (100, 101, 102)]
        R, pairs = apfx.calibrate_compact(calib, deltas, quantile=0.99)
        probe = [j_outputs(s) for s in (900, 901, 902)]
        rep = apfx.tight_set_probe(probe, R, pairs, sigma=0.05)
        assert rep.exceedance < 0.05
        assert rep.compact_spec[0] == R

    def test_empty_input(self):
        with pytest.raises(ValueError):
            apfx.tight_set_probe([], R=1.0, modulus_pairs=[], sigma=0.1)


class TestUniformContinuityProbe:
    def test_identity_bounded_by_rho(self, grid):
        drv = apfx.sample_driver(grid, 200, 1, seed=8)
        box = apfx.CompactBox.uniform(grid, 1, -1, 1)
        rows = apfx.uniform_continuity_probe(apfx.identity_operator(), box,
                                             [0.4, 0.2, 0.1], trials=3, driver=drv, seed=5)
        for r in rows:
            assert r.max_distance <= r.rho + 1e-12

    def test_lipschitz_superposition_bounded_by_rho(self, grid):
        drv = apfx.sample_driver(grid, 200, 1, seed=9)
        box = apfx.CompactBox.uniform(grid, 1, -1, 1)
        op = apfx.superposition(apfx.state_coefficient("sin", np.sin))  # Lipschitz 1
        rows = apfx.uniform_continuity_probe(op, box, [0.4, 0.1], trials=3, driver=drv, seed=6)
        for r in rows:
            assert r.max_distance <= r.rho + 1e-12

    def test_ito_distances_shrink_with_rho(self, grid):
        drv = apfx.sample_driver(grid, 400, 1, seed=10)
        box = apfx.CompactBox.uniform(grid, 1, -1, 1)
        rows = apfx.uniform_continuity_probe(apfx.ito_integral(), box,
                                             [0.4, 0.2, 0.1, 0.05], trials=4,
                                             driver=drv, seed=7)
        vals = [r.max_distance for r in rows]  # rows sorted by rho ascending
        inversions = sum(1 for i in range(len(vals) - 1) if vals[i + 1] <= vals[i])
        assert inversions <= 1, vals

    def test_rho_positive(self, grid):
        drv = apfx.sample_driver(grid, 10, 1, seed=11)
        box = apfx.CompactBox.uniform(grid, 1, -1, 1)
        with pytest.raises(ValueError):
            apfx.uniform_continuity_probe(apfx.identity_operator(), box, [0.1, -0.2],
                                          trials=1, driver=drv, seed=0)


class TestCompositeTightness:
    def test_bounded_composite_outputs_concentrate(self):
        # J . h_f with bounded f maps bounded inputs into a calibrated compact
        grid = apfx.make_grid(0, 1, 64)
        op = apfx.compose(apfx.ito_integral(),
                          apfx.superposition(apfx.state_coefficient("tanh", np.tanh, bound=1.0)))

        def outputs(seed):
            drv = apfx.sample_driver(grid, 800, 1, seed=seed)
            u = random_ensemble(grid, 800, 1, seed=seed + 50, scale=2.0)
            return apfx.apply(op, u, drv)

        calib = [outputs(s) for s in (300, 301)]
        R, pairs = apfx.calibrate_compact(calib, (0.25, 0.125), quantile=0.99)
        rep = apfx.tight_set_probe([outputs(s) for s in (700, 701)], R, pairs, sigma=0.05)
        assert rep.exceedance < 0.05
