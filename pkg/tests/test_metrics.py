import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergopattern.errors import DimensionMismatchError, InsufficientAgentsError, UndefinedDistributionError
from ergopattern.metrics import (
    dimple_coeffs,
    dimple_performance_series,
    ergodic_metric,
    heterogeneity,
    performance_samples,
    smoothing_factors,
    team_heterogeneity,
    trial_performance,
)
from ergopattern.spectral import DensityMap, SpectralBasis, eval_basis, transform_density
from ergopattern.swarm import DimpleEvent, TrialRecord
from ergopattern.targets import builtin_target

B3 = SpectralBasis((1.0, 1.0), 3)
vec = st.lists(st.floats(-5, 5), min_size=9, max_size=9).map(np.array)


def fake_record(events, n_steps):
    z = np.zeros((n_steps, 1))
    return TrialRecord(0.1, 1, np.arange(1, n_steps + 1) * 0.1, np.zeros((n_steps, 1, 2)), z, np.zeros((n_steps, 1, 2)),
                       z.astype(bool), z.astype(bool), np.zeros(n_steps), np.zeros(n_steps), events, [], [],
                       np.zeros(0, int), np.zeros((0, 1, 9)), np.zeros((1, 9)))


class TestErgodicMetric:
    def test_zero_on_target(self, rng):
        c = rng.normal(size=9)
        assert ergodic_metric(c, c, B3) == 0.0

    def test_constant_mode_offset(self):
        c = np.zeros(9)
        phi = c.copy()
        phi[0] = 0.3
        assert ergodic_metric(c, phi, B3) == pytest.approx(0.09, rel=1e-15)

    def test_direct_summation(self, rng):
        for _ in range(10):
            c, phi = rng.normal(size=9), rng.normal(size=9)
            total = math.fsum((1 + k1 * k1 + k2 * k2) ** -1.5 * (c[3 * k1 + k2] - phi[3 * k1 + k2]) ** 2
                              for k1 in range(3) for k2 in range(3))
            assert ergodic_metric(c, phi, B3) == pytest.approx(total, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            ergodic_metric(np.zeros(9), np.zeros(4), B3)
        with pytest.raises(DimensionMismatchError):
            heterogeneity(np.zeros(4), np.zeros(4), B3)

    @settings(max_examples=60, deadline=None)
    @given(vec, vec, vec)
    def test_weighted_norm_identities(self, a, b, c):
        scale = 1 + np.abs(np.concatenate([a, b, c])).max() ** 2
        assert ergodic_metric(a, b, B3) >= 0
        assert heterogeneity(a, b, B3) == heterogeneity(b, a, B3)
        # parallelogram law for the weighted norm |x|^2 = d(x, 0)
        zero = np.zeros(9)
        lhs = ergodic_metric(a + b, zero, B3) + ergodic_metric(a - b, zero, B3)
        rhs = 2 * ergodic_metric(a, zero, B3) + 2 * ergodic_metric(b, zero, B3)
        assert abs(lhs - rhs) <= 1e-12 * scale
        assert abs(ergodic_metric(a + c, b + c, B3) - ergodic_metric(a, b, B3)) <= 1e-12 * scale


class TestHeterogeneity:
    def test_stationary_pair_closed_form(self):
        xi, xj = (0.2, 0.3), (0.8, 0.6)
        ci, cj = B3.values(np.array(xi)), B3.values(np.array(xj))
        expect = sum(B3.weights[i] * (eval_basis(B3, k, xi) - eval_basis(B3, k, xj)) ** 2
                     for i, k in enumerate(B3.modes))
        assert heterogeneity(ci, cj, B3) == pytest.approx(expect, rel=1e-12)
        assert heterogeneity(ci, ci, B3) == 0.0

    def test_team_examples(self, rng):
        c = rng.normal(size=9)
        assert team_heterogeneity([c, c, c], B3) == 0.0
        d = rng.normal(size=9)
        assert team_heterogeneity([c, d], B3) == pytest.approx(heterogeneity(c, d, B3), rel=1e-14)
        four = rng.normal(size=(4, 9))
        pairs = [heterogeneity(four[i], four[j], B3) for i in range(4) for j in range(i + 1, 4)]
        assert len(pairs) == 6
        assert team_heterogeneity(four, B3) == pytest.approx(sum(pairs) / 6, rel=1e-13)
        assert team_heterogeneity(four[[2, 0, 3, 1]], B3) == pytest.approx(team_heterogeneity(four, B3), rel=1e-13)

    def test_needs_two(self):
        with pytest.raises(InsufficientAgentsError):
            team_heterogeneity(np.zeros((1, 9)), B3)


class TestDimpleCoeffs:
    def test_single_and_repeated(self):
        x0 = (0.35, 0.8)
        np.testing.assert_allclose(dimple_coeffs([x0], B3), B3.values(np.array(x0)), atol=1e-15)
        ev = [DimpleEvent(x0, 0.1 * i, 0) for i in range(7)]
        np.testing.assert_allclose(dimple_coeffs(ev, B3), B3.values(np.array(x0)), atol=1e-15)

    def test_empty(self):
        with pytest.raises(UndefinedDistributionError):
            dimple_coeffs([], B3)

    def test_smoothing(self):
        x0 = np.array([[0.35, 0.8]])
        f = smoothing_factors(B3, 0.05)
        assert f[0] == 1.0 and np.all(np.diff(f[:3]) < 0)
        np.testing.assert_allclose(dimple_coeffs(x0, B3, 0.05), B3.values(x0[0]) * f)

    def test_target_draws_beat_uniform_draws(self):
        b = SpectralBasis((1, 1), 10)
        dm = builtin_target("two_lobe", resolution=64)
        phi = transform_density(b, dm)
        p = dm.grid.ravel() / dm.grid.sum()
        xs, ys = dm.cell_centers()
        wins = 0
        r = np.random.default_rng(0)
        for _ in range(20):
            cells = r.choice(p.size, 1000, p=p)
            rows, cols = np.divmod(cells, dm.shape[1])
            jitter = r.uniform(-0.5, 0.5, (1000, 2)) / 64
            tgt = np.column_stack([xs[cols], ys[rows]]) + jitter
            uni = r.uniform(0, 1, (1000, 2))
            wins += ergodic_metric(dimple_coeffs(tgt, b), phi, b) < ergodic_metric(dimple_coeffs(uni, b), phi, b)
        assert wins > 10


class TestPerformance:
    def test_samples(self):
        np.testing.assert_array_equal(performance_samples(25), [10, 20, 25])
        np.testing.assert_array_equal(performance_samples(20), [10, 20])
        assert performance_samples(0).size == 0

    def test_quadrature_dimples_score_near_zero(self):
        b = SpectralBasis((1, 1), 10)
        n = 64
        grid = np.ones((n, n))
        grid[: n // 2] = 3.0  # denser top half
        dm = DensityMap.from_values(grid)
        phi = transform_density(b, dm)
        xs, ys = dm.cell_centers()
        # one dimple per unit of integer cell weight reproduces the quadrature measure
        pts = [(xs[c], ys[r]) for r in range(n) for c in range(n) for _ in range(int(grid[r, c]))]
        ev = [DimpleEvent(p, 0.1, 0, 1) for p in pts]
        assert trial_performance(fake_record(ev, 1), phi, b) < 1e-3

    def test_single_dimple(self):
        phi = np.zeros(9)
        phi[0] = 1.0
        x0 = (0.2, 0.7)
        ev = [DimpleEvent(x0, 0.1, 0, 1)]
        assert trial_performance(fake_record(ev, 30), phi, B3) == pytest.approx(
            ergodic_metric(B3.values(np.array(x0)), phi, B3), rel=1e-14)

    def test_skips_samples_before_first_dimple(self):
        phi = np.zeros(9)
        phi[0] = 1.0
        a, c = (0.2, 0.7), (0.9, 0.1)
        ev = [DimpleEvent(a, 1.5, 0, 15), DimpleEvent(c, 2.5, 0, 25)]
        steps, vals = dimple_performance_series([15, 25], [a, c], 30, phi, B3)
        np.testing.assert_array_equal(steps, [20, 30])
        e1 = ergodic_metric(B3.values(np.array(a)), phi, B3)
        e2 = ergodic_metric((B3.values(np.array(a)) + B3.values(np.array(c))) / 2, phi, B3)
        np.testing.assert_allclose(vals, [e1, e2], rtol=1e-14)
        assert trial_performance(fake_record(ev, 30), phi, B3) == pytest.approx((e1 + e2) / 2, rel=1e-14)

    def test_tracking_beats_uniform(self):
        b = SpectralBasis((1, 1), 10)
        grid = np.zeros((32, 32))
        grid[4:10, 20:26] = 1.0
        dm = DensityMap.from_values(grid)
        phi = transform_density(b, dm)
        r = np.random.default_rng(2)
        tracking = [DimpleEvent((r.uniform(20, 26) / 32, 1 - r.uniform(4, 10) / 32), 0.1 * i, 0, i + 1)
                    for i in range(300)]
        uniform = [DimpleEvent(tuple(r.uniform(0, 1, 2)), 0.1 * i, 0, i + 1) for i in range(300)]
        assert trial_performance(fake_record(tracking, 300), phi, b) < trial_performance(fake_record(uniform, 300), phi, b)

    def test_no_dimples(self):
        with pytest.raises(UndefinedDistributionError):
            trial_performance(fake_record([], 10), np.zeros(9), B3)
