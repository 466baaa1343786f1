import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergopattern.errors import DimensionMismatchError, DomainViolationError, NormalizationError
from ergopattern.spectral import (
    DensityMap,
    SpectralBasis,
    TrajectoryStats,
    accumulate_trajectory,
    eval_basis,
    eval_basis_gradient,
    transform_density,
)


def direct_value(k, x, L):
    """Scalar oracle written straight from the product formula."""
    h2 = 1.0
    for ki, Li in zip(k, L):
        h2 *= Li if ki == 0 else Li / 2
    return math.cos(k[0] * math.pi * x[0] / L[0]) * math.cos(k[1] * math.pi * x[1] / L[1]) / math.sqrt(h2)


def midpoint_grid(n, L=(1.0, 1.0)):
    xs = (np.arange(n) + 0.5) * L[0] / n
    ys = (np.arange(n) + 0.5) * L[1] / n
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1), L[0] * L[1] / n**2


class TestBasis:
    def test_constant_mode_is_one_on_unit_square(self, unit_basis):
        for x in [(0, 0), (0.3, 0.9), (1, 1)]:
            assert eval_basis(unit_basis, (0, 0), x) == 1.0

    def test_first_mode_vanishes_at_midline(self, unit_basis):
        assert abs(eval_basis(unit_basis, (1, 0), (0.5, 0.77))) < 1e-15

    def test_matches_direct_formula(self, unit_basis):
        assert eval_basis(unit_basis, (2, 3), (0.25, 0.1)) == pytest.approx(
            direct_value((2, 3), (0.25, 0.1), (1, 1)), abs=1e-12)

    def test_nonunit_extents(self, rng):
        b = SpectralBasis((2.0, 0.5), 6)
        for _ in range(20):
            k = tuple(rng.integers(0, 6, 2))
            x = rng.uniform(0, 1, 2) * (2.0, 0.5)
            assert eval_basis(b, k, x) == pytest.approx(direct_value(k, x, (2.0, 0.5)), abs=1e-12)

    @pytest.mark.parametrize("x", [(-0.01, 0.5), (0.5, 1.01), (np.nan, 0.2)])
    def test_outside_domain_raises(self, unit_basis, x):
        with pytest.raises(DomainViolationError):
            eval_basis(unit_basis, (1, 1), x)
        with pytest.raises(DomainViolationError):
            eval_basis_gradient(unit_basis, (1, 1), x)

    def test_normalizers_and_weights(self):
        b = SpectralBasis((2.0, 3.0), 4)
        for (k1, k2), h, lam in zip(b.modes, b.normalizers, b.weights):
            expect = math.sqrt((2.0 if k1 == 0 else 1.0) * (3.0 if k2 == 0 else 1.5))
            assert h == pytest.approx(expect, rel=1e-15)
            assert lam == pytest.approx((1 + k1**2 + k2**2) ** -1.5, rel=1e-15)
        assert b.weights[0] == 1.0
        norms = np.hypot(*b.modes.T)
        order = np.argsort(norms)
        w = b.weights[order]
        n = norms[order]
        assert np.all(np.diff(w)[np.diff(n) > 0] < 0)

    def test_mode_index_is_row_major_in_x_frequency(self):
        b = SpectralBasis((1, 1), 5)
        assert b.mode_index((2, 3)) == 13
        assert tuple(b.modes[13]) == (2, 3)
        with pytest.raises(IndexError):
            b.mode_index((5, 0))

    def test_invalid_construction(self):
        with pytest.raises(ValueError):
            SpectralBasis((1, 1), 0)
        with pytest.raises(ValueError):
            SpectralBasis((1, 1), 33)
        with pytest.raises(ValueError):
            SpectralBasis((0, 1), 4)

    @pytest.mark.parametrize("L", [(1.0, 1.0), (2.0, 0.5)])
    def test_orthonormal_under_quadrature(self, L):
        b = SpectralBasis(L, 10)
        pts, area = midpoint_grid(256, L)
        F = b.values(pts)
        gram = F.T @ F * area
        assert np.abs(gram - np.eye(b.size)).max() <= 1e-3

    def test_batched_values_match_scalar(self, unit_basis, rng):
        pts = rng.uniform(0, 1, (7, 2))
        F = unit_basis.values(pts)
        G = unit_basis.gradients(pts)
        for i in rng.integers(0, unit_basis.size, 10):
            k = unit_basis.modes[i]
            for p, f, g in zip(pts, F, G):
                assert f[i] == pytest.approx(eval_basis(unit_basis, k, p), abs=1e-13)
                np.testing.assert_allclose(g[i], eval_basis_gradient(unit_basis, k, p), atol=1e-12)


class TestGradient:
    def test_constant_mode(self, unit_basis):
        np.testing.assert_array_equal(eval_basis_gradient(unit_basis, (0, 0), (0.3, 0.6)), [0.0, 0.0])

    def test_first_mode_at_centre(self, unit_basis):
        g = eval_basis_gradient(unit_basis, (1, 0), (0.5, 0.5))
        np.testing.assert_allclose(g, [-math.pi / math.sqrt(0.5), 0.0], atol=1e-12)

    def test_matches_central_differences(self, rng):
        b = SpectralBasis((1.3, 0.8), 10)
        eps = 1e-6
        worst = 0.0
        for _ in range(100):
            k = tuple(rng.integers(0, 10, 2))
            x = rng.uniform(0.05, 0.95, 2) * b.extents
            g = eval_basis_gradient(b, k, x)
            fd = np.array([
                (eval_basis(b, k, x + eps * e) - eval_basis(b, k, x - eps * e)) / (2 * eps)
                for e in np.eye(2)
            ])
            scale = max(np.linalg.norm(g), 1.0)
            worst = max(worst, np.linalg.norm(fd - g) / scale)
        assert worst <= 1e-5


class TestTransform:
    def test_uniform(self, unit_basis):
        phi = transform_density(unit_basis, DensityMap.from_values(np.ones((64, 64))))
        assert phi[0] == 1.0
        assert np.abs(phi[1:]).max() <= 1e-9

    def test_point_like_density(self, unit_basis):
        n = 128
        grid = np.zeros((n, n))
        r, c = 40, 90
        grid[r, c] = 1.0
        dm = DensityMap.from_values(grid)
        x0 = ((c + 0.5) / n, 1 - (r + 0.5) / n)  # row 0 is the top
        phi = transform_density(unit_basis, dm)
        for k1 in range(4):
            for k2 in range(4):
                i = unit_basis.mode_index((k1, k2))
                # midpoint rule on one cell is exact up to the cell's curvature
                bound = 2 * ((k1 + k2) * math.pi / n) ** 2 / 24 + 1e-12
                assert abs(phi[i] - eval_basis(unit_basis, (k1, k2), x0)) <= bound

    def test_left_right_gradient(self, unit_basis):
        n = 200
        xs = (np.arange(n) + 0.5) / n
        a, b = 1.0, -0.9  # density proportional to a + b x, high on the left
        grid = np.tile(a + b * xs, (n, 1))
        phi = transform_density(unit_basis, DensityMap.from_values(grid))
        mass = a + b / 2
        # integral of (a + b x) cos(pi x) over [0, 1] is -2 b / pi^2
        analytic = math.sqrt(2) * (-2 * b / math.pi**2) / mass
        i10, i01 = unit_basis.mode_index((1, 0)), unit_basis.mode_index((0, 1))
        assert phi[i10] > 0
        assert phi[i10] == pytest.approx(analytic, rel=1e-4)
        assert abs(phi[i01]) <= 1e-9

    def test_image_orientation(self, unit_basis):
        grid = np.zeros((10, 10))
        grid[0, :] = 1.0  # top row
        phi = transform_density(unit_basis, DensityMap.from_values(grid))
        # mass near y = 1 makes the (0, 1) coefficient negative
        assert phi[unit_basis.mode_index((0, 1))] < -1.0

    def test_rejects_unnormalized(self, unit_basis):
        with pytest.raises(NormalizationError):
            transform_density(unit_basis, DensityMap(np.full((4, 4), 2.0)))

    def test_rejects_zero_mass_and_negative(self):
        with pytest.raises(NormalizationError):
            DensityMap.from_values(np.zeros((3, 3)))
        with pytest.raises(NormalizationError):
            DensityMap(np.array([[1.0, -1.0]]))

    def test_extent_mismatch(self, unit_basis):
        with pytest.raises(DimensionMismatchError):
            transform_density(unit_basis, DensityMap.from_values(np.ones((4, 4)), (2.0, 1.0)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**32 - 1),
           st.floats(0.2, 5.0), st.floats(0.2, 5.0))
    def test_constant_coefficient_is_exact(self, R, C, seed, L1, L2):
        g = np.random.default_rng(seed).uniform(0, 1, (R, C)) + 1e-3
        b = SpectralBasis((L1, L2), 4)
        phi = transform_density(b, DensityMap.from_values(g, (L1, L2)))
        assert phi[0] == 1.0 / b.normalizers[0]


class TestAccumulation:
    def test_stationary_agent(self, unit_basis):
        x0 = (0.31, 0.72)
        s = TrajectoryStats.empty(unit_basis)
        for _ in range(1000):
            accumulate_trajectory(unit_basis, s, x0, 0.1)
        np.testing.assert_allclose(s.coefficients, unit_basis.values(np.array(x0)), rtol=0, atol=1e-15)

    def test_two_samples_average(self, unit_basis):
        x1, x2 = np.array([0.2, 0.4]), np.array([0.9, 0.1])
        s = TrajectoryStats.empty(unit_basis)
        accumulate_trajectory(unit_basis, s, x1, 0.5)
        accumulate_trajectory(unit_basis, s, x2, 0.5)
        expect = (unit_basis.values(x1) + unit_basis.values(x2)) / 2
        np.testing.assert_allclose(s.coefficients, expect, atol=1e-15)

    def test_random_walk_matches_one_shot(self, unit_basis, rng):
        steps = rng.normal(0, 0.01, (10_000, 2))
        path = np.empty_like(steps)
        p = np.array([0.5, 0.5])
        for i, d in enumerate(steps):
            p = np.abs(p + d)
            p = np.where(p > 1, 2 - p, p)
            path[i] = p
        s = TrajectoryStats.empty(unit_basis)
        for x in path:
            accumulate_trajectory(unit_basis, s, x, 0.1)
        F = unit_basis.values(path)
        oracle = np.array([math.fsum(col) for col in F.T]) / len(path)
        np.testing.assert_allclose(s.coefficients, oracle, rtol=0, atol=1e-10)

    def test_long_runs_keep_precision(self):
        b = SpectralBasis((1, 1), 1)
        s = TrajectoryStats.empty(b)
        v = np.array([0.1])
        for _ in range(1_000_000):
            s.add(v, 0.1)
        assert s.elapsed == pytest.approx(1e5, rel=1e-15)
        assert s.coefficients[0] == pytest.approx(0.1, rel=1e-14)

    def test_rejects_bad_input(self, unit_basis):
        s = TrajectoryStats.empty(unit_basis)
        with pytest.raises(ValueError):
            accumulate_trajectory(unit_basis, s, (0.5, 0.5), 0.0)
        with pytest.raises(DomainViolationError):
            accumulate_trajectory(unit_basis, s, (1.5, 0.5), 0.1)
        with pytest.raises(ValueError):
            s.coefficients

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(1, 40),
           st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_concatenation_is_time_weighted_mean(self, seed, na, nb, dta, dtb):
        b = SpectralBasis((1, 1), 4)
        r = np.random.default_rng(seed)
        A, B = r.uniform(0, 1, (na, 2)), r.uniform(0, 1, (nb, 2))
        both, sa, sb = (TrajectoryStats.empty(b) for _ in range(3))
        for x in A:
            accumulate_trajectory(b, both, x, dta)
            accumulate_trajectory(b, sa, x, dta)
        for x in B:
            accumulate_trajectory(b, both, x, dtb)
            accumulate_trajectory(b, sb, x, dtb)
        mix = (sa.elapsed * sa.coefficients + sb.elapsed * sb.coefficients) / (sa.elapsed + sb.elapsed)
        np.testing.assert_allclose(both.coefficients, mix, rtol=0, atol=1e-12)
        np.testing.assert_allclose(TrajectoryStats.pooled([sa, sb]).coefficients, mix, rtol=0, atol=1e-12)
