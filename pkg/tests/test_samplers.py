"""Kernel-level tests: trivial limits, exact identities, adaptation rules."""

import math

import numpy as np
import pytest

from ensmc.errors import ConfigurationError, NumericalError
from ensmc.fields import GaussianMeasure, GridSpec, LowRankJump, deviation_matrix
from ensmc.problems import LinearRegressionProblem
from ensmc.samplers import (
    AdaptPolicy,
    SamplerConfig,
    adapt_beta,
    aies_accept,
    aies_walk_step,
    fes_step,
    gpcn_step,
    pcn_step,
    run,
    safes_p_step,
    safes_propose,
    safes_step,
    stretch_factor,
    walk_propose,
)


def unit_prior(dim):
    grid = GridSpec(1, float(dim), (dim,), "neumann")
    return GaussianMeasure.from_recipe("inv:(I - lap)", grid)


def white_prior(dim):
    grid = GridSpec(1, float(dim), (dim,), "neumann")
    return GaussianMeasure.from_recipe("inv:I", grid)


class _StubRng:
    """Deterministic stand-in feeding queued draws to a kernel."""

    def __init__(self, normals=(), uniforms=(), integers=()):
        self._normals = list(normals)
        self._uniforms = list(uniforms)
        self._integers = list(integers)

    def standard_normal(self, size):
        return np.asarray(self._normals.pop(0), dtype=float)

    def random(self):
        return self._uniforms.pop(0)

    def integers(self, high):
        return self._integers.pop(0)


class TestPcn:
    def test_flat_likelihood_full_jump_is_prior_draw(self):
        prior = unit_prior(6)
        rng = np.random.default_rng(0)
        u = prior.sample(rng)
        probe = np.random.default_rng(33)
        expected = prior.mean + prior.cov_sqrt @ probe.standard_normal(6)
        out = pcn_step(u, 1.0, prior, lambda v: 0.0, np.random.default_rng(33))
        assert out.record.accept_prob == 1.0
        assert out.record.accepted
        np.testing.assert_allclose(out.state, expected, atol=1e-14)

    def test_equal_likelihood_accepts(self):
        prior = unit_prior(4)
        out = pcn_step(np.ones(4), 0.3, prior, lambda v: 2.5, np.random.default_rng(1))
        assert out.record.accept_prob == 1.0

    def test_nonfinite_current_state_raises(self):
        prior = unit_prior(4)
        with pytest.raises(NumericalError):
            pcn_step(np.ones(4), 0.3, prior, lambda v: np.nan, np.random.default_rng(1))

    def test_bad_beta(self):
        prior = unit_prior(4)
        with pytest.raises(ConfigurationError):
            pcn_step(np.ones(4), 1.5, prior, lambda v: 0.0, np.random.default_rng(1))

    def test_nonfinite_proposal_rejected(self):
        prior = unit_prior(4)
        calls = {"n": 0}

        def phi(v):
            calls["n"] += 1
            return 0.0 if calls["n"] == 1 else np.inf

        out = pcn_step(np.ones(4), 0.5, prior, phi, np.random.default_rng(2))
        assert not out.record.accepted
        assert out.record.accept_prob == 0.0


class TestGpcn:
    def test_trivial_jump_matches_pcn_bitwise(self):
        prior = unit_prior(8)
        phi = lambda v: 0.5 * float(v @ v)
        u = prior.sample(np.random.default_rng(3))
        jump = LowRankJump(prior, None, 0.0)
        for seed in range(5):
            a = pcn_step(u, 0.6, prior, phi, np.random.default_rng(seed))
            b = gpcn_step(u, 0.6, jump, prior, phi, np.random.default_rng(seed))
            assert np.array_equal(a.state, b.state)
            assert a.record.log_ratio == b.record.log_ratio

    def test_flat_likelihood_prior_jump_always_accepts(self):
        prior = unit_prior(5)
        jump = LowRankJump(prior, None, 0.0)
        rng = np.random.default_rng(4)
        u = prior.sample(rng)
        for _ in range(20):
            out = gpcn_step(u, 0.4, jump, prior, lambda v: 0.0, rng)
            assert out.record.accept_prob == 1.0
            u = out.state


class TestWalkMove:
    def test_zero_spread(self):
        u = np.array([1.0, 2.0])
        others = np.tile(np.array([0.5, 0.5]), (4, 1))
        z = np.random.default_rng(0).standard_normal(4)
        np.testing.assert_array_equal(walk_propose(u, others, 0.7, z), u)

    def test_zero_lambda(self):
        rng = np.random.default_rng(1)
        u = rng.standard_normal(3)
        others = rng.standard_normal((4, 3))
        z = rng.standard_normal(4)
        np.testing.assert_array_equal(walk_propose(u, others, 0.0, z), u)

    def test_affine_equivariance_shared_draws(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            dim = int(rng.integers(2, 6))
            n_others = int(rng.integers(2, 7))
            u = rng.standard_normal(dim)
            others = rng.standard_normal((n_others, dim))
            z = rng.standard_normal(n_others)
            A = rng.standard_normal((dim, dim))
            b = rng.standard_normal(dim)
            lhs = walk_propose(A @ u + b, others @ A.T + b, 0.8, z)
            rhs = A @ walk_propose(u, others, 0.8, z) + b
            bound = 1e-12 * (1.0 + np.linalg.norm(A) * np.linalg.norm(u))
            assert np.linalg.norm(lhs - rhs) <= bound

    def test_accept_identity_state(self):
        prior = unit_prior(3)
        u = np.array([0.3, -0.1, 0.2])
        assert aies_accept(u, u, lambda v: 1.2, prior) == 1.0

    def test_accept_monotone_prior_move(self):
        prior = unit_prior(3)
        u = np.array([1.0, 1.0, 1.0])
        assert aies_accept(u, 0.5 * u, lambda v: 0.0, prior) == 1.0


class TestSafes:
    def test_lambda_zero_matches_gpcn_bitwise(self):
        prior = unit_prior(6)
        phi = lambda v: 0.5 * float(v @ v)
        rng = np.random.default_rng(5)
        u = prior.sample(rng)
        others = prior.sample(rng, 4)
        jump = LowRankJump(prior, None, 0.0)
        for seed in range(5):
            a = safes_step(u, others, 0.5, 0.0, prior, prior, np.zeros(6), phi,
                           np.random.default_rng(seed))
            b = gpcn_step(u, 0.5, jump, prior, phi, np.random.default_rng(seed))
            assert np.array_equal(a.state, b.state)
            assert a.record.log_ratio == b.record.log_ratio

    def test_residual_identity(self):
        # R(Au+b, xi) - A R(u, xi) - b = beta (I - A) xi + (sqrt(1-beta^2) - 1) b
        rng = np.random.default_rng(6)
        for _ in range(100):
            dim = int(rng.integers(2, 6))
            n_others = int(rng.integers(2, 6))
            beta = float(rng.uniform(0.05, 0.95))
            lam = float(rng.uniform(0.0, 1.0))
            u = rng.standard_normal(dim)
            others = rng.standard_normal((n_others, dim))
            xi = rng.standard_normal(dim)
            z = rng.standard_normal(n_others)
            A = rng.standard_normal((dim, dim))
            b = rng.standard_normal(dim)
            zero = np.zeros(dim)
            V = deviation_matrix(others).matrix
            V_mapped = deviation_matrix(others @ A.T + b).matrix
            lhs = safes_propose(A @ u + b, zero, beta, lam, xi, V_mapped, z)
            rhs = A @ safes_propose(u, zero, beta, lam, xi, V, z) + b
            s = math.sqrt(1 - beta**2)
            expected = beta * (xi - A @ xi) + (s - 1.0) * b
            bound = 1e-12 * (1.0 + np.linalg.norm(A)) * (1.0 + np.linalg.norm(u) + np.linalg.norm(xi))
            assert np.linalg.norm((lhs - rhs) - expected) <= bound

    def test_flat_likelihood_acceptance_in_unit_interval(self):
        prior = unit_prior(5)
        rng = np.random.default_rng(7)
        u = prior.sample(rng)
        others = prior.sample(rng, 5)
        for _ in range(50):
            out = safes_step(u, others, 0.4, 0.3, prior, prior, np.zeros(5),
                             lambda v: 0.0, rng)
            assert 0.0 <= out.record.accept_prob <= 1.0
            assert np.isfinite(out.record.log_ratio)
            u = out.state


class TestSafesP:
    def test_orthogonal_noise_reduces_to_pcn(self):
        # others span e0/e1; zeta orthogonal to the retained subspace
        others = np.array([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [-1.0, -1.0, 0.0, 0.0],
        ])
        u = np.array([0.2, -0.4, 0.6, 0.1])
        zeta = np.array([0.0, 0.0, 1.0, -2.0])
        beta = 0.5
        stub = _StubRng(normals=[zeta], uniforms=[0.0])
        out, m_eff = safes_p_step(u, others, beta, 0.3, 2, lambda v: 0.0, stub)
        assert m_eff == 2
        expected = math.sqrt(1 - beta**2) * u + beta * zeta
        np.testing.assert_allclose(out.record.proposed, expected, atol=1e-12)

    def test_rank_guard_shrinks_subspace(self):
        # 3 particles give a rank-1 ensemble covariance at most
        others = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        u = np.zeros(3)
        rng = np.random.default_rng(8)
        out, m_eff = safes_p_step(u, others, 0.5, 0.2, 2, lambda v: 0.0, rng)
        assert m_eff == 1

    def test_collapsed_ensemble_degrades_to_pcn(self):
        others = np.zeros((3, 4))
        u = np.full(4, 0.3)
        out, m_eff = safes_p_step(u, others, 0.5, 0.2, 2, lambda v: 0.0,
                                  np.random.default_rng(9))
        assert m_eff == 0
        assert out.record.d_reg == 0.0

    def test_acceptance_probabilities_valid(self):
        rng = np.random.default_rng(10)
        u = rng.standard_normal(5)
        others = rng.standard_normal((6, 5))
        for _ in range(50):
            out, _ = safes_p_step(u, others, 0.4, 0.25, 3,
                                  lambda v: 0.1 * float(v @ v), rng)
            assert 0.0 <= out.record.accept_prob <= 1.0
            u = out.state


class TestFes:
    def test_unit_stretch_accepts_unchanged_block(self):
        # t = 1 keeps the low-mode block; acceptance is certain when phi is flat
        a = 2.0
        v_for_t1 = 1.0 / (math.sqrt(a) + 1.0)
        assert stretch_factor(a, v_for_t1) == pytest.approx(1.0, abs=1e-14)
        basis = np.eye(4)[:, :2]
        state = np.array([0.5, -0.5, 0.3, 0.1])
        others = np.array([[1.0, 1.0, 0.0, 0.0], [2.0, 0.5, 0.0, 0.0]])
        stub = _StubRng(
            normals=[np.zeros(4)],
            uniforms=[v_for_t1, 0.0, 0.0],
            integers=[0],
        )
        out, stretch_rec = fes_step(state, others, 0.5, 2, basis, a,
                                    lambda v: 3.0, stub)
        assert stretch_rec.accept_prob == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(stretch_rec.proposed, state, atol=1e-12)

    def test_stretch_factor_range(self):
        rng = np.random.default_rng(11)
        a = 2.0
        ts = np.array([stretch_factor(a, rng.random()) for _ in range(5000)])
        assert ts.min() >= 1 / a - 1e-12
        assert ts.max() <= a + 1e-12
        assert stretch_factor(a, 0.0) == pytest.approx(1 / a)
        assert stretch_factor(a, 1.0) == pytest.approx(a)

    def test_m_zero_is_pure_pcn_sweep(self):
        # on a white prior the fes driver path with M = 0 equals pcn bitwise
        prob = LinearRegressionProblem(points_per_axis=8, extent=8.0, n_obs=2,
                                       noise_std=0.5, recipe="inv:I", data_seed=1)
        cfg_f = SamplerConfig(kind="fes", n_particles=3, n_steps=100, subspace_dim=0,
                              seed=5, thin=10)
        cfg_p = SamplerConfig(kind="pcn", n_particles=3, n_steps=100, seed=5, thin=10)
        a = run(prob, cfg_f)
        b = run(prob, cfg_p)
        assert np.array_equal(a.g_values, b.g_values)
        assert all(np.array_equal(x, y) for x, y in zip(a.fields, b.fields))


class TestAdaptation:
    def test_inside_band_unchanged(self):
        assert adapt_beta(0.37, 0.2, AdaptPolicy()) == 0.37

    def test_stated_arithmetic(self):
        assert adapt_beta(0.5, 0.5, AdaptPolicy(factor=1.5)) == pytest.approx(0.75)

    def test_clamp_and_monotone_decrease(self):
        policy = AdaptPolicy(factor=1.5)
        beta = 0.5
        prev = beta
        for _ in range(60):
            beta = adapt_beta(beta, 0.01, policy)
            assert beta <= prev
            prev = beta
        assert beta == pytest.approx(1e-6)

    def test_upper_clamp(self):
        assert adapt_beta(0.9, 0.9, AdaptPolicy()) == 1.0

    def test_policy_validation(self):
        with pytest.raises(ConfigurationError):
            AdaptPolicy(target_low=0.5, target_high=0.3)


class TestDriver:
    def test_zero_steps_keeps_initial_ensemble(self):
        prob = LinearRegressionProblem(points_per_axis=10, extent=10.0, n_obs=2,
                                       noise_std=0.5)
        store = run(prob, SamplerConfig(kind="pcn", n_particles=3, n_steps=0, seed=1))
        assert store.g_values.size == 0
        assert store.field_steps.tolist() == [0]
        assert store.initial_ensemble().shape == (3, 10)

    def test_seed_determinism(self):
        prob = LinearRegressionProblem(points_per_axis=10, extent=10.0, n_obs=2,
                                       noise_std=0.5)
        cfg = SamplerConfig(kind="safes_p", n_particles=4, n_steps=60, seed=9,
                            subspace_dim=2)
        a, b = run(prob, cfg), run(prob, cfg)
        assert np.array_equal(a.g_values, b.g_values)
        assert np.array_equal(a.betas, b.betas)

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            SamplerConfig(kind="aies_walk", n_particles=2, n_steps=10)
        with pytest.raises(ConfigurationError):
            SamplerConfig(kind="nuts", n_particles=2, n_steps=10)
        with pytest.raises(ConfigurationError):
            SamplerConfig(kind="pcn", n_particles=2, n_steps=10, beta0=0.0)

    def test_subspace_dim_bounds(self):
        prob = LinearRegressionProblem(points_per_axis=5, extent=5.0, n_obs=1,
                                       noise_std=0.5)
        cfg = SamplerConfig(kind="safes_p", n_particles=3, n_steps=5, subspace_dim=9)
        with pytest.raises(ConfigurationError):
            run(prob, cfg)

    def test_beta_frozen_after_burn_in(self):
        prob = LinearRegressionProblem(points_per_axis=10, extent=10.0, n_obs=5,
                                       noise_std=1e-3)
        cfg = SamplerConfig(
            kind="pcn", n_particles=2, n_steps=400, seed=3, burn_in_fraction=0.25,
            adapt=AdaptPolicy(window=20),
        )
        store = run(prob, cfg)
        betas = store.betas.reshape(400, 2)
        post = betas[101:]
        assert np.all(post == post[0])

    def test_scalar_rows_bookkeeping(self):
        prob = LinearRegressionProblem(points_per_axis=10, extent=10.0, n_obs=2,
                                       noise_std=0.5)
        store = run(prob, SamplerConfig(kind="pcn", n_particles=3, n_steps=10, seed=0))
        assert store.g_values.shape == (30,)
        assert store.n_phi_evals == 3 + 30
