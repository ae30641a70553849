import math

import numpy as np
import pytest

import fieldflow as ff
from fieldflow.field import continuity_residual, gaussian_log_density, oracle_drift_rows


def random_cloud(rng, n, dim, scale=1.0):
    return ff.DataCloud(scale * rng.standard_normal((n, dim)))


class TestPosteriorWeights:
    def test_symmetric_pair(self):
        cloud = ff.DataCloud(np.array([[-1.0, 0.0], [1.0, 0.0]]))
        p = ff.AugmentedPoint(np.zeros(2), 1.0)
        w = ff.posterior_weights(p, cloud, ff.SpaceConfig(2, 4))
        assert np.allclose(w, [0.5, 0.5], atol=1e-15)

    def test_direct_evaluation_1d(self):
        # cloud {0, 2}, x=0, r=1, N=D=1: weights propto (1, 1/5)
        cloud = ff.DataCloud(np.array([[0.0], [2.0]]))
        p = ff.AugmentedPoint(np.zeros(1), 1.0)
        w = ff.posterior_weights(p, cloud, ff.SpaceConfig(1, 1))
        assert np.allclose(w, [5 / 6, 1 / 6], rtol=1e-12)

    def test_far_field_uniform(self, rng):
        cloud = random_cloud(rng, 12, 2)
        r = 1e6 * cloud.diameter()
        p = ff.AugmentedPoint(cloud.points[0], r)
        w = ff.posterior_weights(p, cloud, ff.SpaceConfig(2, 8))
        assert np.abs(w - 1 / 12).max() < 1e-3

    def test_sums_to_one_and_permutation_equivariant(self, rng):
        for d_aug in (1.0, 7.5, 64.0, 2048.0, math.inf):
            space = ff.SpaceConfig(3, d_aug)
            cloud = random_cloud(rng, 9, 3)
            p = ff.AugmentedPoint(rng.standard_normal(3), 0.7)
            w = ff.posterior_weights(p, cloud, space)
            assert abs(w.sum() - 1.0) < 1e-12
            perm = rng.permutation(9)
            w2 = ff.posterior_weights(p, ff.DataCloud(cloud.points[perm]), space)
            # summation order in the normalizer may reassociate
            assert np.allclose(w2, w[perm], rtol=1e-13, atol=0.0)

    def test_zero_anchor_on_duplicate_points_rejected(self):
        cloud = ff.DataCloud(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 0.0]]))
        p = ff.AugmentedPoint(np.array([1.0, 0.0]), 0.0)
        with pytest.raises(ValueError):
            ff.posterior_weights(p, cloud, ff.SpaceConfig(2, 4))

    def test_zero_anchor_single_hit_is_delta(self):
        cloud = ff.DataCloud(np.array([[1.0, 0.0], [0.0, 0.0]]))
        p = ff.AugmentedPoint(np.array([1.0, 0.0]), 0.0)
        w = ff.posterior_weights(p, cloud, ff.SpaceConfig(2, 4))
        assert np.array_equal(w, [1.0, 0.0])

    def test_large_dim_matches_gaussian_branch(self, rng):
        cloud = random_cloud(rng, 10, 2)
        sigma = 0.5
        sp = ff.SpaceConfig(2, 10**6)
        gauss = ff.SpaceConfig.gaussian(2)
        for _ in range(20):
            x = cloud.points[rng.integers(10)] + sigma * rng.standard_normal(2)
            wf = ff.posterior_weights(ff.AugmentedPoint(x, sp.anchor_of(sigma)), cloud, sp)
            wg = ff.posterior_weights(ff.AugmentedPoint(x, sigma), cloud, gauss)
            assert 0.5 * np.abs(wf - wg).sum() < 1e-3


class TestEmpiricalField:
    def test_single_point_ratio(self):
        cloud = ff.DataCloud(np.array([[0.0]]))
        p = ff.AugmentedPoint(np.array([3.0]), 4.0)
        f = ff.empirical_field(p, cloud, ff.SpaceConfig(1, 1))
        assert f.e_x[0] / f.e_r == pytest.approx(3.0 / 4.0, rel=1e-15)

    def test_posterior_mean_identity(self, rng):
        cloud = random_cloud(rng, 15, 2)
        space = ff.SpaceConfig(2, 24)
        for _ in range(25):
            p = ff.AugmentedPoint(rng.standard_normal(2), float(rng.uniform(0.05, 5.0)))
            f = ff.empirical_field(p, cloud, space)
            w = ff.posterior_weights(p, cloud, space)
            expected = (p.x - w @ cloud.points) / p.r
            assert np.allclose(f.e_x / f.e_r, expected, atol=1e-12)

    def test_e_r_positive(self, rng):
        cloud = random_cloud(rng, 5, 2)
        f = ff.empirical_field(ff.AugmentedPoint(np.zeros(2), 1e-6), cloud, ff.SpaceConfig(2, 64))
        assert f.e_r > 0


class TestDrift:
    def test_single_point_cloud(self):
        cloud = ff.DataCloud(np.array([[0.0, 0.0]]))
        p = ff.AugmentedPoint(np.array([2.0, -4.0]), 2.0)
        d = ff.drift(p, cloud, ff.SpaceConfig(2, 8))
        assert np.allclose(d, [1.0, -2.0], rtol=1e-14)

    def test_network_backend_stub(self):
        class Stub:
            def denoise(self, x, r):
                return np.array([1.0, 1.0])

        p = ff.AugmentedPoint(np.array([3.0, 1.0]), 2.0)
        d = ff.drift(p, Stub(), ff.SpaceConfig(2, 8))
        assert np.allclose(d, [1.0, 0.0])

    def test_scale_covariance(self, rng):
        cloud = random_cloud(rng, 8, 2)
        space = ff.SpaceConfig(2, 16)
        for c in (0.5, 2.0, 7.0):
            p = ff.AugmentedPoint(rng.standard_normal(2), 1.3)
            d1 = ff.drift(p, cloud, space)
            scaled = ff.DataCloud(c * cloud.points)
            d2 = ff.drift(ff.AugmentedPoint(c * p.x, c * p.r), scaled, space)
            assert np.allclose(d1, d2, rtol=1e-12)

    def test_rejects_zero_anchor(self):
        cloud = ff.DataCloud(np.array([[0.0, 0.0]]))
        with pytest.raises(ValueError):
            ff.drift(ff.AugmentedPoint(np.ones(2), 0.0), cloud, ff.SpaceConfig(2, 8))


class TestGaussianScore:
    def test_single_point(self):
        cloud = ff.DataCloud(np.array([[1.0, 2.0]]))
        s = ff.gaussian_score(np.array([0.0, 0.0]), 0.5, cloud)
        assert np.allclose(s, [1.0 / 0.25, 2.0 / 0.25])

    def test_symmetry_zero(self):
        cloud = ff.DataCloud(np.array([[-1.0, 0.0], [1.0, 0.0]]))
        s = ff.gaussian_score(np.zeros(2), 0.7, cloud)
        assert np.allclose(s, 0.0, atol=1e-14)

    def test_matches_finite_difference_of_log_density(self, rng):
        cloud = random_cloud(rng, 7, 2)
        sigma = 0.8
        h = 1e-6
        for _ in range(10):
            x = rng.standard_normal(2)
            s = ff.gaussian_score(x, sigma, cloud)
            fd = np.zeros(2)
            for j in range(2):
                e = np.zeros(2)
                e[j] = h
                fd[j] = (gaussian_log_density(x + e, sigma, cloud)
                         - gaussian_log_density(x - e, sigma, cloud)) / (2 * h)
            assert np.allclose(s, fd, rtol=1e-6, atol=1e-6)


class TestFieldScoreDivergence:
    def test_single_point_cancellation(self, rng):
        cloud = ff.DataCloud(np.array([[0.3, -0.1]]))
        probes = cloud.points + 0.5 * rng.standard_normal((64, 2))
        for d_aug in (2.0, 64.0, 2**20):
            assert ff.field_score_divergence(0.5, d_aug, cloud, probes) < 1e-12

    def test_monotone_decrease_and_limit(self, probe_cloud):
        rng = np.random.default_rng(3)
        curve = ff.convergence_curve(probe_cloud, 0.5, [2**4, 2**8, 2**12, 2**16, 2**20], 512, rng)
        values = [v for _, v in curve]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[-1] < 1e-2


class TestContinuityResidual:
    def test_single_point_recorded_bound(self):
        cloud = ff.DataCloud(np.array([[0.0]]))
        h = 1e-3
        grid = np.arange(-2.0, 2.0 + h / 2, h)
        res = continuity_residual(grid, cloud, 1.0, h, ff.SpaceConfig(1, 1))
        assert res.max_abs < 1e-4

    @pytest.mark.parametrize("points", [[[0.0]], [[-1.0], [1.0]]])
    def test_second_order_decay(self, points):
        cloud = ff.DataCloud(np.array(points))
        space = ff.SpaceConfig(1, 1)
        maxima = []
        for h in (2e-3, 1e-3):
            grid = np.arange(-2.0, 2.0 + h / 2, h)
            maxima.append(continuity_residual(grid, cloud, 1.0, h, space).max_abs)
        ratio = maxima[0] / maxima[1]
        assert 3.0 <= ratio <= 5.0

    def test_symmetric_cloud_even_residual(self, two_point_cloud):
        h = 1e-3
        grid = np.arange(-2.0, 2.0 + h / 2, h)
        res = continuity_residual(grid, two_point_cloud, 1.0, h, ff.SpaceConfig(1, 2))
        assert np.allclose(res.residual, res.residual[::-1], atol=1e-8)

    def test_2d_grid_runs(self):
        cloud = ff.DataCloud(np.array([[0.0, 0.0]]))
        h = 0.02
        ax = np.arange(-1.0, 1.0 + h / 2, h)
        res = continuity_residual((ax, ax), cloud, 1.0, h, ff.SpaceConfig(2, 2))
        assert res.max_abs < 1e-2

    def test_rejects_coarse_grid(self):
        cloud = ff.DataCloud(np.array([[0.0]]))
        h = 0.5
        grid = np.arange(-2.0, 2.0 + h / 2, h)
        with pytest.raises(ValueError):
            continuity_residual(grid, cloud, 0.4, h, ff.SpaceConfig(1, 1))


class TestBatchedEvaluation:
    def test_partitioning_invariance(self, rng, probe_cloud):
        space = ff.SpaceConfig(2, 64)
        X = rng.standard_normal((40, 2))
        full = oracle_drift_rows(X, 1.7, probe_cloud, space)
        parts = np.concatenate([
            oracle_drift_rows(X[:13], 1.7, probe_cloud, space),
            oracle_drift_rows(X[13:29], 1.7, probe_cloud, space),
            oracle_drift_rows(X[29:], 1.7, probe_cloud, space),
        ])
        assert np.allclose(full, parts, rtol=1e-10)
