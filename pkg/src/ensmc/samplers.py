"""Metropolis-Hastings kernels and the ensemble sweep driver.

Kernels: pCN, generalized pCN with a prior-equivalent jump, the
affine-invariant walk move, FES (stretch move on leading prior modes plus
pCN on the complement), SAFES (pCN jump covariance inflated by the
ensemble sample covariance) and SAFES-P (approximately affine-invariant
moves on the leading singular subspace of the ensemble covariance, pCN on
its orthogonal complement, in whitened coordinates).

Each kernel consumes its random draws in a fixed documented order
(state noise, then ensemble noise when applicable, then the acceptance
uniform), so parameter limits that skip a draw reproduce the reduced
kernel stream for stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_solve

from .errors import ConfigurationError, NumericalError
from .fields import LowRankJump, capacitance_factor, deviation_matrix, i_c
from .seeding import PURPOSE_CHAIN, PURPOSE_INIT, rng_stream
from .store import ChainStore

BETA_MIN = 1e-6

SAMPLER_KINDS = ("pcn", "gpcn", "aies_walk", "fes", "safes", "safes_p")

# Kernels operating in whitened coordinates (centered prior mapped to N(0, I)).
WHITENED_KINDS = ("fes", "safes_p")

# Singular values of the ensemble covariance below this fraction of the
# largest are dropped before inverting the subspace spectrum.
RANK_GUARD = 1e-12


@dataclass(frozen=True)
class AdaptPolicy:
    """Multiplicative step-size controller targeting an acceptance band.

    The window and factor defaults are deliberately gentle: beta must
    descend no faster than the ensemble can track it through the sharp
    early phase, or the run freezes wherever the ensemble happened to be
    when beta bottomed out.
    """

    target_low: float = 0.15
    target_high: float = 0.3
    window: int = 50
    factor: float = 1.15
    freeze_after_burn_in: bool = True

    def __post_init__(self):
        if not 0.0 < self.target_low < self.target_high < 1.0:
            raise ConfigurationError("need 0 < target_low < target_high < 1")
        if self.window < 1 or self.factor <= 1.0:
            raise ConfigurationError("adaptation window >= 1 and factor > 1 required")


# When a whole window passes with essentially nothing accepted the jump
# scale is hopeless rather than slightly off; descend by
# factor**RESCUE_EXPONENT there so deep targets are reachable within
# burn-in, and keep single-factor steps anywhere acceptance is merely low,
# where the ensemble needs time to track the shrinking scale.
RESCUE_FRACTION = 0.05
RESCUE_EXPONENT = 4


def adapt_beta(beta, rate, policy):
    """One controller update: scale beta up/down when the window rate leaves the band."""
    if rate > policy.target_high:
        return min(1.0, beta * policy.factor)
    if rate < policy.target_low:
        step = policy.factor
        if rate < RESCUE_FRACTION * policy.target_low:
            step = policy.factor**RESCUE_EXPONENT
        return max(BETA_MIN, beta / step)
    return beta


@dataclass(frozen=True)
class ProposalRecord:
    """Audit trail of one propose/accept decision."""

    proposed: np.ndarray
    d_phi: float       # phi(current) - phi(proposed)
    d_reg: float       # prior/jump correction part of the log ratio
    log_ratio: float
    accept_prob: float
    uniform: float
    accepted: bool


class StepOutcome(NamedTuple):
    state: np.ndarray
    phi_value: float
    record: ProposalRecord


def _decide(proposed, d_phi, d_reg, rng):
    log_ratio = d_phi + d_reg
    prob = 0.0 if math.isnan(log_ratio) else math.exp(min(0.0, log_ratio))
    uniform = rng.random()
    return ProposalRecord(
        proposed=proposed,
        d_phi=float(d_phi),
        d_reg=float(d_reg),
        log_ratio=float(log_ratio),
        accept_prob=prob,
        uniform=uniform,
        accepted=uniform < prob,
    )


def _check_current(beta, phi_u):
    if not 0.0 < beta <= 1.0:
        raise ConfigurationError(f"beta must lie in (0, 1], got {beta}")
    if not np.isfinite(phi_u):
        raise NumericalError("likelihood is not finite at the current state")


def _mean_shift_propose(u, mean, beta, xi):
    """Common autoregressive proposal mean + sqrt(1-beta^2)(u - mean) + beta*xi."""
    return mean + math.sqrt(1.0 - beta * beta) * (u - mean) + beta * xi


# ----------------------------------------------------------------------
# pCN and generalized pCN
# ----------------------------------------------------------------------

def pcn_step(u, beta, prior, phi, rng, phi_u=None):
    """Dimension-robust random walk preconditioned by the prior.

    Acceptance depends only on the likelihood ratio; the prior is fully
    contained in the proposal.
    """
    if phi_u is None:
        phi_u = phi(u)
    _check_current(beta, phi_u)
    xi = prior.cov_sqrt @ rng.standard_normal(u.shape[0])
    proposed = _mean_shift_propose(u, prior.mean, beta, xi)
    phi_prop = phi(proposed)
    rec = _decide(proposed, phi_u - phi_prop, 0.0, rng)
    if rec.accepted:
        return StepOutcome(proposed, phi_prop, rec)
    return StepOutcome(u, phi_u, rec)


def gpcn_step(u, beta, jump, prior, phi, rng, phi_u=None):
    """pCN with an arbitrary prior-equivalent jump N(mean, C).

    The acceptance ratio carries the correction functional difference in
    addition to the likelihood ratio; with the trivial jump (mean 0,
    C = prior covariance) the trajectory coincides with :func:`pcn_step`
    draw for draw.
    """
    if phi_u is None:
        phi_u = phi(u)
    _check_current(beta, phi_u)
    xi = jump.sample_centered(rng)
    proposed = _mean_shift_propose(u, jump.mean, beta, xi)
    phi_prop = phi(proposed)
    d_reg = i_c(u, jump, prior) - i_c(proposed, jump, prior)
    rec = _decide(proposed, phi_u - phi_prop, d_reg, rng)
    if rec.accepted:
        return StepOutcome(proposed, phi_prop, rec)
    return StepOutcome(u, phi_u, rec)


# ----------------------------------------------------------------------
# Affine-invariant walk move
# ----------------------------------------------------------------------

def walk_propose(u, others, lam, z):
    """Walk-move proposal u + lam/sqrt(|S|) * sum_j z_j (u_j - mean(S)).

    Pure given the normal draws ``z``; commutes exactly with affine maps
    of (u, S) applied with shared draws.
    """
    others = np.asarray(others, dtype=float)
    r = others.shape[0]
    if r < 2:
        raise ConfigurationError("walk move needs at least 2 complementary particles")
    centered = others - others.mean(axis=0)
    return u + (lam / math.sqrt(r)) * (centered.T @ z)


def aies_accept(u, u_hat, phi, prior, phi_u=None, phi_hat=None):
    """Acceptance probability of the walk move: likelihood and prior ratio."""
    if phi_u is None:
        phi_u = phi(u)
    if not np.isfinite(phi_u):
        raise NumericalError("likelihood is not finite at the current state")
    if phi_hat is None:
        phi_hat = phi(u_hat)
    d_reg = 0.5 * (prior.cm_norm_sq(u) - prior.cm_norm_sq(u_hat))
    log_ratio = (phi_u - phi_hat) + d_reg
    prob = math.exp(min(0.0, log_ratio))
    return 0.0 if math.isnan(prob) else prob


def aies_walk_step(u, others, lam, prior, phi, rng, phi_u=None):
    if phi_u is None:
        phi_u = phi(u)
    if not np.isfinite(phi_u):
        raise NumericalError("likelihood is not finite at the current state")
    z = rng.standard_normal(len(others))
    proposed = walk_propose(u, others, lam, z)
    phi_prop = phi(proposed)
    d_reg = 0.5 * (prior.cm_norm_sq(u) - prior.cm_norm_sq(proposed))
    rec = _decide(proposed, phi_u - phi_prop, d_reg, rng)
    if rec.accepted:
        return StepOutcome(proposed, phi_prop, rec)
    return StepOutcome(u, phi_u, rec)


# ----------------------------------------------------------------------
# SAFES
# ----------------------------------------------------------------------

def safes_propose(u, mean, beta, lam, xi, deviations, z):
    """Pure SAFES proposal map given the base noise xi and ensemble noise z."""
    proposed = _mean_shift_propose(u, mean, beta, xi)
    if lam != 0.0 and deviations is not None:
        proposed = proposed + lam * (deviations @ z)
    return proposed


def _ensemble_correction_diff(V, PV, gamma, u, proposed):
    """Correction difference for the base-prior, zero-mean jump.

    In that special case the dense quadratic forms cancel and
    ``i_c(u) = 0.5 <V'Pu, (gamma^{-2} I + V'PV)^{-1} V'Pu>`` with only the
    small capacitance matrix inverted.
    """
    factor = capacitance_factor(V.T @ PV, gamma)
    w_u = PV.T @ u
    w_p = PV.T @ proposed
    return 0.5 * (
        float(w_u @ cho_solve(factor, w_u, check_finite=False))
        - float(w_p @ cho_solve(factor, w_p, check_finite=False))
    )


def safes_step(u, others, beta, lam, base, prior, mean, phi, rng, phi_u=None, pv=None):
    """Ensemble-inflated gpCN update of one particle.

    The jump covariance is C = C_base + gamma^2 V V' with gamma = lam/beta
    and V the deviation matrix of the complementary ensemble; lam = 0
    reproduces :func:`gpcn_step` with the base jump draw for draw.
    ``pv`` optionally supplies precomputed columns of ``P_base @ V`` (the
    sweep driver maintains them incrementally).
    """
    if phi_u is None:
        phi_u = phi(u)
    _check_current(beta, phi_u)
    V = deviation_matrix(others).matrix
    xi = base.cov_sqrt @ rng.standard_normal(u.shape[0])
    z = rng.standard_normal(V.shape[1]) if lam != 0.0 else None
    proposed = safes_propose(u, mean, beta, lam, xi, V if lam != 0.0 else None, z)
    gamma = lam / beta
    phi_prop = phi(proposed)
    if gamma != 0.0 and base is prior and not np.any(mean):
        if pv is None:
            pv = base.precision @ V
        d_reg = _ensemble_correction_diff(V, pv, gamma, u, proposed)
    else:
        jump = LowRankJump(base, V if gamma != 0.0 else None, gamma, mean)
        d_reg = i_c(u, jump, prior) - i_c(proposed, jump, prior)
    rec = _decide(proposed, phi_u - phi_prop, d_reg, rng)
    if rec.accepted:
        return StepOutcome(proposed, phi_prop, rec)
    return StepOutcome(u, phi_u, rec)


# ----------------------------------------------------------------------
# SAFES-P (whitened coordinates)
# ----------------------------------------------------------------------

def safes_p_step(xi_state, others, beta, lam, subspace_dim, phi, rng, phi_u=None, mean=None):
    """Subspace-projected hybrid update in whitened coordinates.

    Diagonalizes the complementary sample covariance, inflates the leading
    ``subspace_dim`` singular directions by gamma * sqrt(spectrum) and
    applies plain white pCN on the orthogonal complement.  Retained
    singular values must exceed a relative rank guard; the subspace is
    shrunk (and reported) when the ensemble is too degenerate.

    Returns ``(outcome, n_retained)``.
    """
    if phi_u is None:
        phi_u = phi(xi_state)
    _check_current(beta, phi_u)
    dim = xi_state.shape[0]
    if not 1 <= subspace_dim <= dim:
        raise ConfigurationError(f"subspace dimension {subspace_dim} out of range for dim {dim}")
    mean = np.zeros(dim) if mean is None else mean
    V = deviation_matrix(others).matrix
    # spectrum of V V' through the small Gram matrix V'V (same nonzero part)
    evals, evecs = np.linalg.eigh(V.T @ V)
    spectrum_full = np.clip(evals[::-1], 0.0, None)
    n_ok = int(np.sum(spectrum_full > RANK_GUARD * spectrum_full[0])) if spectrum_full[0] > 0 else 0
    m_eff = min(int(subspace_dim), n_ok)
    gamma = lam / beta
    zeta = rng.standard_normal(dim)
    if m_eff == 0:
        proposed = _mean_shift_propose(xi_state, mean, beta, zeta)
        phi_prop = phi(proposed)
        rec = _decide(proposed, phi_u - phi_prop, 0.0, rng)
    else:
        spectrum = spectrum_full[:m_eff]
        if np.any(spectrum <= 0):  # the guard above must prevent this
            raise NumericalError("zero singular value inside the retained subspace block")
        basis = V @ (evecs[:, ::-1][:, :m_eff] / np.sqrt(spectrum))
        coeff = gamma * np.sqrt(spectrum) - 1.0
        xi_noise = basis @ (coeff * (basis.T @ zeta)) + zeta
        proposed = _mean_shift_propose(xi_state, mean, beta, xi_noise)
        phi_prop = phi(proposed)

        def subspace_correction(v):
            z = basis.T @ v
            return 0.5 * float(z @ z) - 0.5 / gamma**2 * float(z @ (z / spectrum))

        d_reg = subspace_correction(xi_state) - subspace_correction(proposed)
        rec = _decide(proposed, phi_u - phi_prop, d_reg, rng)
    outcome = StepOutcome(proposed, phi_prop, rec) if rec.accepted else StepOutcome(xi_state, phi_u, rec)
    return outcome, m_eff


# ----------------------------------------------------------------------
# FES (whitened coordinates)
# ----------------------------------------------------------------------

def stretch_factor(a, uniform):
    """Inverse-CDF draw of the stretch move factor, density prop. to 1/sqrt(z) on [1/a, a]."""
    return (1.0 + (a - 1.0) * uniform) ** 2 / a


def fes_step(xi_state, others, beta, subspace_dim, basis, stretch_a, phi, rng, phi_u=None):
    """Gibbs update: stretch move on the leading prior modes, pCN on the rest.

    ``basis`` holds the leading prior Karhunen-Loeve modes expressed in
    whitened coordinates (orthonormal columns).  ``subspace_dim = 0``
    degenerates to a plain white-prior pCN sweep.  Returns
    ``(outcome, stretch_record)`` with ``stretch_record`` None when the
    stretch block is empty.
    """
    if phi_u is None:
        phi_u = phi(xi_state)
    _check_current(beta, phi_u)
    state = xi_state
    stretch_rec = None
    if subspace_dim > 0:
        if len(others) < 2:
            raise ConfigurationError("stretch move needs at least 2 complementary particles")
        partner = others[rng.integers(len(others))]
        t = stretch_factor(stretch_a, rng.random())
        z = basis.T @ state
        z_partner = basis.T @ partner
        z_new = z_partner + t * (z - z_partner)
        proposed = state + basis @ (z_new - z)
        phi_prop = phi(proposed)
        d_reg = (subspace_dim - 1) * math.log(t) + 0.5 * (float(z @ z) - float(z_new @ z_new))
        stretch_rec = _decide(proposed, phi_u - phi_prop, d_reg, rng)
        if stretch_rec.accepted:
            state, phi_u = proposed, phi_prop
    eta = rng.standard_normal(state.shape[0])
    if subspace_dim > 0:
        eta = eta - basis @ (basis.T @ eta)
        low = basis @ (basis.T @ state)
        proposed = low + math.sqrt(1.0 - beta * beta) * (state - low) + beta * eta
    else:
        proposed = _mean_shift_propose(state, np.zeros(state.shape[0]), beta, eta)
    phi_prop = phi(proposed)
    rec = _decide(proposed, phi_u - phi_prop, 0.0, rng)
    if rec.accepted:
        return StepOutcome(proposed, phi_prop, rec), stretch_rec
    return StepOutcome(state, phi_u, rec), stretch_rec


# ----------------------------------------------------------------------
# Sweep driver
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SamplerConfig:
    """Run parameters for one ensemble sampler."""

    kind: str
    n_particles: int
    n_steps: int
    burn_in_fraction: float = 0.25
    beta0: float = 0.5
    lam: float = 0.2
    subspace_dim: int | None = None
    stretch_a: float = 2.0
    adapt: AdaptPolicy = field(default_factory=AdaptPolicy)
    seed: int = 0
    thin: int = 10

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ConfigurationError(f"unknown sampler kind {self.kind!r}")
        if self.n_particles < 1:
            raise ConfigurationError("n_particles must be >= 1")
        if self.n_steps < 0:
            raise ConfigurationError("n_steps must be >= 0")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ConfigurationError("burn_in_fraction must lie in [0, 1)")
        if not 0.0 < self.beta0 <= 1.0:
            raise ConfigurationError("beta0 must lie in (0, 1]")
        if self.lam < 0.0:
            raise ConfigurationError("lambda must be >= 0")
        if self.stretch_a <= 1.0:
            raise ConfigurationError("stretch_a must be > 1")
        if self.thin < 1:
            raise ConfigurationError("thin must be >= 1")
        if self.kind == "aies_walk" and self.n_particles < 3:
            raise ConfigurationError("aies_walk needs at least 3 particles")
        if self.kind in ("safes", "safes_p") and self.n_particles < 2:
            raise ConfigurationError(f"{self.kind} needs at least 2 particles")
        if self.kind == "fes" and self.n_particles < 3 and self.effective_subspace_dim(10**9) > 0:
            raise ConfigurationError("fes needs at least 3 particles for the stretch move")

    def effective_subspace_dim(self, dim):
        """Subspace dimension after defaults: 10 for fes, 20 for safes_p."""
        if self.kind not in ("fes", "safes_p"):
            return 0
        m = self.subspace_dim
        if m is None:
            m = min(10 if self.kind == "fes" else 20, dim)
        m = int(m)
        if m > dim:
            raise ConfigurationError(f"subspace_dim {m} exceeds problem dimension {dim}")
        if self.kind == "safes_p" and m < 1:
            raise ConfigurationError("safes_p needs subspace_dim >= 1")
        if m < 0:
            raise ConfigurationError("subspace_dim must be >= 0")
        return m

    def phi_evals_per_step(self):
        """Likelihood evaluations consumed per particle update."""
        return 2 if self.kind == "fes" and self.effective_subspace_dim(10**9) > 0 else 1


def burn_in_index(n_steps, fraction):
    return int(math.floor(n_steps * fraction))


def run(problem, config, config_echo=None):
    """Execute K sweeps of N particles and return the populated ChainStore.

    Within a sweep particles update sequentially; each proposal sees the
    already updated lower-index particles.  The complementary ensemble is
    always the full remainder.  pCN runs are N independent chains by
    construction.  The recorded scalar series is g(u) = ||u||_{L2}^2.
    ``config_echo`` is the full run configuration to persist in metadata.
    """
    prior = problem.prior
    grid = problem.grid
    dim = prior.dim
    n = config.n_particles
    steps = config.n_steps
    kind = config.kind
    whitened = kind in WHITENED_KINDS
    sub_dim = config.effective_subspace_dim(dim)
    if whitened and np.any(prior.mean != 0.0):
        raise ConfigurationError(f"{kind} requires a centered prior (whitened coordinates)")
    if kind == "fes" and sub_dim > 0 and n < 3:
        raise ConfigurationError("fes needs at least 3 particles for the stretch move")

    n_phi = 0

    def phi_plain(u):
        nonlocal n_phi
        n_phi += 1
        return problem.phi(u)

    if whitened:
        cov_sqrt = prior.cov_sqrt

        def phi_fn(xi):
            return phi_plain(cov_sqrt @ xi)

        def to_field(xi):
            return cov_sqrt @ xi
    else:
        phi_fn = phi_plain

        def to_field(u):
            return u

    # initial ensemble: i.i.d. prior draws (white coefficients when whitened)
    states = np.empty((n, dim))
    for j in range(n):
        zeta = rng_stream(config.seed, PURPOSE_INIT, j).standard_normal(dim)
        states[j] = zeta if whitened else prior.mean + prior.cov_sqrt @ zeta
    phis = np.array([phi_fn(states[j]) for j in range(n)])
    if not np.all(np.isfinite(phis)):
        raise NumericalError(
            "likelihood not finite on the initial ensemble; re-seed or redraw the prior"
        )

    chains = [rng_stream(config.seed, PURPOSE_CHAIN, j) for j in range(n)]
    betas = np.full(n, config.beta0)
    basis = prior.kl_basis(sub_dim) if kind == "fes" and sub_dim > 0 else None
    jump_mean = np.zeros(dim)
    burn_idx = burn_in_index(steps, config.burn_in_fraction)
    # SAFES keeps P @ state per particle so the capacitance needs no dense matvecs
    use_pcache = kind == "safes" and config.lam > 0.0
    p_states = states @ prior.precision if use_pcache else None
    sqrt_rm1 = math.sqrt(n - 2.0) if n > 2 else 1.0

    # preallocated scalar records: one row per particle per sweep
    total_rows = steps * n
    scalar_steps = np.empty(total_rows, dtype=np.int64)
    scalar_particles = np.empty(total_rows, dtype=np.int64)
    g_values = np.empty(total_rows)
    accepted_col = np.empty(total_rows, dtype=np.int64)
    betas_col = np.empty(total_rows)

    field_steps = [0]
    fields = [[to_field(states[j]).copy()] for j in range(n)]

    window_props = np.zeros(n, dtype=np.int64)
    window_accepts = np.zeros(n, dtype=np.int64)
    total_props = np.zeros(n, dtype=np.int64)
    total_accepts = np.zeros(n, dtype=np.int64)
    beta_history = [[config.beta0] for _ in range(n)]
    rank_reductions = 0
    adapting = kind != "aies_walk"
    row = 0

    for k in range(1, steps + 1):
        frozen = config.adapt.freeze_after_burn_in and k > burn_idx
        for j in range(n):
            rng = chains[j]
            u = states[j]
            others = None
            if kind in ("aies_walk", "safes", "safes_p") or (kind == "fes" and sub_dim > 0):
                others = np.delete(states, j, axis=0)
            accepted_any = 0
            acc_controller = 0
            if kind == "pcn":
                out = pcn_step(u, betas[j], prior, phi_fn, rng, phis[j])
                accepted_any = acc_controller = int(out.record.accepted)
            elif kind == "gpcn":
                jump = LowRankJump(prior, None, 0.0, jump_mean)
                out = gpcn_step(u, betas[j], jump, prior, phi_fn, rng, phis[j])
                accepted_any = acc_controller = int(out.record.accepted)
            elif kind == "safes":
                pv = None
                if use_pcache:
                    p_others = np.delete(p_states, j, axis=0)
                    pv = (p_others - p_others.mean(axis=0)).T / sqrt_rm1
                out = safes_step(
                    u, others, betas[j], config.lam, prior, prior, jump_mean,
                    phi_fn, rng, phis[j], pv=pv,
                )
                if use_pcache and out.record.accepted:
                    p_states[j] = prior.precision @ out.state
                accepted_any = acc_controller = int(out.record.accepted)
            elif kind == "safes_p":
                out, m_eff = safes_p_step(
                    u, others, betas[j], config.lam, sub_dim, phi_fn, rng, phis[j]
                )
                rank_reductions += int(m_eff < sub_dim)
                accepted_any = acc_controller = int(out.record.accepted)
            elif kind == "aies_walk":
                out = aies_walk_step(u, others, config.lam, prior, phi_fn, rng, phis[j])
                accepted_any = acc_controller = int(out.record.accepted)
            else:  # fes
                out, stretch_rec = fes_step(
                    u, others, betas[j], sub_dim, basis, config.stretch_a,
                    phi_fn, rng, phis[j],
                )
                acc_controller = int(out.record.accepted)
                accepted_any = int(
                    out.record.accepted or bool(stretch_rec and stretch_rec.accepted)
                )
                if stretch_rec is not None:
                    total_props[j] += 1
                    total_accepts[j] += int(stretch_rec.accepted)
            states[j] = out.state
            phis[j] = out.phi_value
            total_props[j] += 1
            total_accepts[j] += acc_controller
            if adapting:
                window_props[j] += 1
                window_accepts[j] += acc_controller
                if window_props[j] >= config.adapt.window:
                    if not frozen:
                        betas[j] = adapt_beta(
                            betas[j], window_accepts[j] / window_props[j], config.adapt
                        )
                        beta_history[j].append(float(betas[j]))
                    window_props[j] = 0
                    window_accepts[j] = 0
            scalar_steps[row] = k
            scalar_particles[row] = j
            g_values[row] = grid.norm_l2_sq(to_field(states[j]))
            accepted_col[row] = accepted_any
            betas_col[row] = betas[j]
            row += 1
        if k % config.thin == 0:
            field_steps.append(k)
            for j in range(n):
                fields[j].append(to_field(states[j]).copy())

    acceptance_rates = np.divide(
        total_accepts, total_props, out=np.zeros(n), where=total_props > 0
    )
    return ChainStore(
        config=config_echo if config_echo is not None else {},
        sampler=config,
        seed=config.seed,
        n_particles=n,
        n_steps=steps,
        burn_in_idx=burn_idx,
        thin=config.thin,
        scalar_steps=scalar_steps,
        scalar_particles=scalar_particles,
        g_values=g_values,
        accepted=accepted_col,
        betas=betas_col,
        field_steps=np.asarray(field_steps, dtype=np.int64),
        fields=[np.asarray(f) for f in fields],
        acceptance_rates=acceptance_rates,
        beta_history=beta_history,
        n_phi_evals=n_phi,
        rank_reductions=rank_reductions,
    )
