"""Tests for autocorrelation, MPSRF, moment errors and span distances."""

import numpy as np
import pytest

from ensmc.diagnostics import (
    AutocorrCurve,
    autocorrelation,
    integrated_time,
    moment_errors,
    mpsrf,
    span_distance,
)
from ensmc.errors import NumericalError
from ensmc.problems import AnalyticGaussianPosterior


class TestAutocorrelation:
    def test_white_noise_small_everywhere(self):
        series = np.random.default_rng(0).standard_normal(100_000)
        curve = autocorrelation(series, max_lag=500)
        assert np.abs(curve.values[1:]).max() <= 0.02

    def test_ar1_matches_analytic_decay(self):
        rho = 0.9
        rng = np.random.default_rng(1)
        n = 200_000
        x = np.empty(n)
        x[0] = 0.0
        eps = rng.standard_normal(n)
        for i in range(1, n):
            x[i] = rho * x[i - 1] + eps[i]
        curve = autocorrelation(x, max_lag=40)
        expected = rho ** np.arange(21)
        assert np.abs(curve.values[:21] - expected).max() <= 0.02

    def test_lag_zero_is_exactly_one(self):
        series = np.full(500, 2.0)
        series[100] = 9.0  # constant plus a single spike
        curve = autocorrelation(series, max_lag=20)
        assert curve.values[0] == 1.0

    def test_constant_chain_raises(self):
        with pytest.raises(NumericalError, match="constant"):
            autocorrelation(np.ones(1000), max_lag=10)

    def test_particle_averaging(self):
        rng = np.random.default_rng(2)
        series = rng.standard_normal((8, 20_000))
        curve = autocorrelation(series)
        assert curve.values[0] == 1.0
        assert np.abs(curve.values[1:]).max() < 0.02

    def test_integrated_time_white_noise_near_one(self):
        series = np.random.default_rng(3).standard_normal(50_000)
        curve = autocorrelation(series, max_lag=1000)
        assert abs(curve.integrated_time - 1.0) < 0.2

    def test_integrated_time_truncates_at_negative_pair(self):
        values = np.array([1.0, 0.5, 0.25, -0.4, 0.3, 0.3])
        assert integrated_time(values) == pytest.approx(1.0 + 2 * 0.75)


class TestMpsrf:
    def test_iid_chains_converge_to_one(self):
        chains = np.random.default_rng(4).standard_normal((4, 10_000, 3))
        assert mpsrf(chains).value < 1.05

    def test_disjoint_means_large(self):
        rng = np.random.default_rng(5)
        chains = np.stack([
            rng.standard_normal((400, 2)) + 10.0,
            rng.standard_normal((400, 2)) - 10.0,
        ])
        assert mpsrf(chains).value > 5.0

    def test_two_halves_of_one_stream(self):
        stream = np.random.default_rng(6).standard_normal((2000, 2))
        chains = np.stack([stream[:1000], stream[1000:]])
        value = mpsrf(chains).value
        # >= 1 up to small-sample noise of the (n-1)/n correction
        assert 1.0 - 5e-3 <= value <= 1.1

    def test_affine_invariance(self):
        rng = np.random.default_rng(7)
        for p in (2, 3, 5):
            chains = rng.standard_normal((3, 500, p)) + rng.standard_normal(p)
            A = rng.standard_normal((p, p)) + 3 * np.eye(p)
            b = rng.standard_normal(p)
            r1 = mpsrf(chains).value
            r2 = mpsrf(chains @ A.T + b).value
            assert abs(r1 - r2) <= 1e-8 * max(1.0, r1)

    def test_projection_applied_when_dim_large(self):
        rng = np.random.default_rng(8)
        chains = rng.standard_normal((4, 200, 50))
        result = mpsrf(chains, proj_dim=5)
        assert result.proj_dim == 5
        assert result.value < 1.5

    def test_singular_within_raises(self):
        base = np.random.default_rng(9).standard_normal((3, 50, 1))
        chains = np.concatenate([base, base], axis=2)  # perfectly correlated coords
        with pytest.raises(NumericalError, match="projection"):
            mpsrf(chains)

    def test_shape_requirements(self):
        rng = np.random.default_rng(10)
        with pytest.raises(NumericalError):
            mpsrf(rng.standard_normal((1, 100, 2)))
        with pytest.raises(NumericalError):
            mpsrf(rng.standard_normal((3, 5, 2)))


class TestMomentErrors:
    def _posterior(self, dim=4):
        rng = np.random.default_rng(11)
        A = rng.standard_normal((dim, dim))
        cov = 0.01 * (A @ A.T + dim * np.eye(dim))
        mean = rng.standard_normal(dim)
        return AnalyticGaussianPosterior(mean=mean, cov=cov)

    def test_self_consistency(self):
        post = self._posterior(20)
        samples = post.sample(np.random.default_rng(12), 100_000)
        errs = moment_errors(samples, post)
        assert errs.rel_mean_error < 0.01
        assert errs.rel_cov_error < 0.05

    def test_degenerate_samples(self):
        post = self._posterior()
        samples = np.tile(post.mean, (100, 1))
        errs = moment_errors(samples, post)
        assert errs.rel_mean_error == pytest.approx(0.0, abs=1e-12)
        assert errs.rel_cov_error == pytest.approx(1.0)

    def test_reorder_invariance(self):
        post = self._posterior()
        samples = post.sample(np.random.default_rng(13), 500)
        shuffled = samples[np.random.default_rng(14).permutation(500)]
        a = moment_errors(samples, post)
        b = moment_errors(shuffled, post)
        assert a.rel_mean_error == pytest.approx(b.rel_mean_error, rel=1e-12)
        assert a.rel_cov_error == pytest.approx(b.rel_cov_error, rel=1e-10)

    def test_too_few_samples(self):
        post = self._posterior()
        with pytest.raises(NumericalError):
            moment_errors(post.mean[None, :], post)


class TestSpanDistance:
    def test_inside_span_is_zero(self):
        rng = np.random.default_rng(15)
        initial = rng.standard_normal((3, 6))
        point = initial.mean(axis=0) + 0.3 * (initial[1] - initial[0])
        assert span_distance(point[None, :], initial)[0] <= 1e-12

    def test_normal_offset_is_exact(self):
        rng = np.random.default_rng(16)
        initial = rng.standard_normal((3, 5))
        origin = initial.mean(axis=0)
        dirs = (initial - origin).T
        u, s, _ = np.linalg.svd(dirs, full_matrices=True)
        normal = u[:, -1]
        for t in (0.1, 1.0, 7.5):
            d = span_distance((origin + t * normal)[None, :], initial)[0]
            assert d == pytest.approx(t, abs=1e-12)

    def test_reparameterization_invariance(self):
        rng = np.random.default_rng(17)
        initial = rng.standard_normal((4, 7))
        # different affine basis of the same span: reorder + recombine particles
        mixed = np.stack([
            initial[1],
            0.5 * (initial[0] + initial[2]),
            initial[3],
            initial[0] + 0.25 * (initial[2] - initial[1]),
        ])
        samples = rng.standard_normal((20, 7))
        d1 = span_distance(samples, initial)
        d2 = span_distance(samples, mixed)
        assert np.abs(d1 - d2).max() <= 1e-10
