"""Benchmark inverse problems.

Three benchmarks: linear point-observation regression with a closed-form
Gaussian posterior, 1-d Darcy flow in two prior/noise setups, and a 2-d
level-set Poisson problem.  All share the observation model
``y = G(u) + eta`` with ``eta ~ N(0, gamma^2 I)`` and a centered Gaussian
prior assembled from a precision recipe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigurationError, NumericalError
from .fields import GaussianMeasure, GridSpec, _neg_laplacian_1d
from .seeding import PURPOSE_DATA, PURPOSE_POSTERIOR, rng_stream


@dataclass(frozen=True)
class ObservationSet:
    """Observed data with its generating noise level.

    ``rel_noise_level`` is the noise standard deviation relative to the
    norm of the noise-free observations; ``rel_error_realized`` is the
    relative l2 size of the actually drawn noise vector.
    """

    points: np.ndarray
    y: np.ndarray
    gamma: float
    seed: int
    rel_noise_level: float
    rel_error_realized: float


def make_data(problem, seed):
    """Generate observations ``y = G(truth) + gamma * zeta`` for a problem."""
    clean = problem.forward(problem.truth)
    rng = rng_stream(seed, PURPOSE_DATA)
    noise = problem.noise_std * rng.standard_normal(clean.shape[0]) if clean.size else np.zeros(0)
    y = clean + noise
    signal = float(np.linalg.norm(clean))
    rel_level = float(problem.noise_std / signal) if signal > 0 else 0.0
    rel_realized = float(np.linalg.norm(noise) / signal) if signal > 0 else 0.0
    return ObservationSet(
        points=problem.obs_points,
        y=y,
        gamma=problem.noise_std,
        seed=int(seed),
        rel_noise_level=rel_level,
        rel_error_realized=rel_realized,
    )


class _PointObservationProblem:
    """Shared machinery: point observations of a forward map plus misfit."""

    def forward(self, u):
        raise NotImplementedError

    def phi(self, u):
        """Negative log-likelihood 0.5 * ||G(u) - y||^2 / gamma^2."""
        if self.data.y.size == 0:
            return 0.0
        if self.noise_std <= 0:
            raise NumericalError("likelihood undefined for zero observation noise")
        resid = self.forward(u) - self.data.y
        return 0.5 * float(resid @ resid) / self.noise_std**2


class LinearRegressionProblem(_PointObservationProblem):
    """Noisy point observations of the field itself; conjugate Gaussian posterior."""

    kind = "linear"

    def __init__(self, points_per_axis=100, extent=2 * np.pi, n_obs=25, noise_std=1e-3,
                 recipe="inv:(I - lap)", boundary="neumann", data_seed=0, truth=None):
        self.grid = GridSpec(1, float(extent), (int(points_per_axis),), boundary)
        self.prior = GaussianMeasure.from_recipe(recipe, self.grid)
        self.noise_std = float(noise_std)
        nodes = self.grid.axis_nodes()
        self.truth = np.sin(nodes) / 2 if truth is None else np.asarray(truth, dtype=float)
        n_obs = int(n_obs)
        self.obs_points = (extent / n_obs) * np.arange(1, n_obs + 1) if n_obs else np.zeros(0)
        self.obs_idx = np.array(
            [self.grid.node_index(p) for p in self.obs_points], dtype=int
        )
        self.data = make_data(self, data_seed)

    def forward(self, u):
        return u[self.obs_idx]

    def exact_posterior(self):
        return exact_posterior(self)

    def effective_dimension(self):
        return effective_dimension(self)


@dataclass
class AnalyticGaussianPosterior:
    """Closed-form Gaussian posterior N(mean, cov) of the linear problem."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        vals, vecs = np.linalg.eigh(0.5 * (self.cov + self.cov.T))
        if vals[0] <= 0:
            raise NumericalError(
                f"posterior covariance not positive definite (min eigenvalue {vals[0]:.3e})"
            )
        self._cov_sqrt = (vecs * np.sqrt(vals)) @ vecs.T

    def sample(self, rng, size):
        zeta = rng.standard_normal((int(size), self.mean.shape[0]))
        return self.mean + zeta @ self._cov_sqrt.T

    def sample_stream(self, seed, size):
        return self.sample(rng_stream(seed, PURPOSE_POSTERIOR), size)


def exact_posterior(problem):
    """Conjugate posterior of the linear problem.

    The posterior precision is the prior quadratic form plus the scaled
    normal matrix of the point-observation operator.
    """
    if problem.kind != "linear":
        raise ConfigurationError("closed-form posterior exists only for the linear problem")
    P = problem.prior.precision.copy()
    b = np.zeros(problem.grid.n_dof)
    if problem.data.y.size:
        g2 = problem.noise_std**2
        np.add.at(P, (problem.obs_idx, problem.obs_idx), 1.0 / g2)
        np.add.at(b, problem.obs_idx, problem.data.y / g2)
    cov = np.linalg.inv(P)
    cov = 0.5 * (cov + cov.T)
    mean = np.linalg.solve(P, b)
    return AnalyticGaussianPosterior(mean=mean, cov=cov)


def effective_dimension(problem):
    """Count of prior directions substantially informed by the data.

    ``trace(Q (I+Q)^{-1})`` with ``Q`` the prior-weighted Gauss-Newton
    Hessian; computed from the eigenvalues of the J x J observed block of
    the prior covariance scaled by the noise precision.
    """
    if problem.data.y.size == 0 or not np.isfinite(problem.noise_std) or problem.noise_std == 0:
        if problem.noise_std == 0 and problem.data.y.size:
            return float(min(problem.data.y.size, problem.grid.n_dof))
        return 0.0
    block = problem.prior.covariance[np.ix_(problem.obs_idx, problem.obs_idx)]
    mu = np.clip(np.linalg.eigvalsh(block / problem.noise_std**2), 0.0, None)
    return float(np.sum(mu / (1.0 + mu)))


# ----------------------------------------------------------------------
# Darcy flow (1-d, periodic pressure)
# ----------------------------------------------------------------------

def darcy_source(grid):
    """Gaussian bump forcing centered at pi, shifted to discrete zero mean."""
    x = grid.axis_nodes()
    bump = np.exp(-((x - np.pi) ** 2) / 10.0)
    return bump - bump.mean()


def solve_darcy_1d(u, grid, source=None):
    """Solve -(e^u p')' = f with periodic boundary conditions and zero-mean p.

    Conservative second-order differences with geometric-mean face
    conductivities ``exp((u_i + u_{i+1})/2)``.  The source is projected to
    zero mean (periodic solvability) and the constant null space is removed
    by a rank-one shift, so the returned pressure has exactly zero mean.
    """
    n = grid.n_dof
    h = grid.h[0]
    if source is None:
        source = darcy_source(grid)
    f = source - source.mean()
    face = np.exp(0.5 * (u + np.roll(u, -1)))  # conductivity between node i and i+1
    A = np.zeros((n, n))
    idx = np.arange(n)
    A[idx, idx] = face + np.roll(face, 1)
    np.add.at(A, (idx, (idx + 1) % n), -face)
    np.add.at(A, ((idx + 1) % n, idx), -face)
    A /= h**2
    shift = A.diagonal().mean()
    M = A + shift / n
    try:
        p = np.linalg.solve(M, f)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Darcy system singular beyond the constant null space: {exc}") from exc
    return p - p.mean()


class DarcyProblem(_PointObservationProblem):
    """1-d Darcy flow with log-conductivity unknown.

    Variant "i" uses a squared shifted-Laplacian prior on a periodic grid
    with moderate noise; variant "ii" uses a rougher Neumann prior with
    much smaller noise, giving a far more concentrated posterior.
    """

    def __init__(self, variant, points_per_axis=100, extent=2 * np.pi, n_obs=10,
                 noise_std=None, data_seed=0):
        if variant not in ("i", "ii"):
            raise ConfigurationError(f"Darcy variant must be 'i' or 'ii', got {variant!r}")
        self.kind = f"darcy_{variant}"
        self.variant = variant
        if variant == "i":
            recipe, boundary = "inv:4*(100*T - lap)^2", "periodic"
            default_noise = 1e-2
        else:
            recipe, boundary = "inv:(I - lap)", "neumann"
            default_noise = 1e-4
        self.grid = GridSpec(1, float(extent), (int(points_per_axis),), boundary)
        self.prior = GaussianMeasure.from_recipe(recipe, self.grid)
        self.noise_std = float(default_noise if noise_std is None else noise_std)
        nodes = self.grid.axis_nodes()
        self.truth = np.sin(nodes) / 2
        self.source = darcy_source(self.grid)
        n_obs = int(n_obs)
        self.obs_points = (extent / n_obs) * np.arange(1, n_obs + 1)
        self.obs_idx = np.array([self.grid.node_index(p) for p in self.obs_points], dtype=int)
        self.data = make_data(self, data_seed)

    def solve(self, u):
        return solve_darcy_1d(u, self.grid, self.source)

    def forward(self, u):
        return self.solve(u)[self.obs_idx]


# ----------------------------------------------------------------------
# Level-set Poisson problem (2-d, Dirichlet pressure)
# ----------------------------------------------------------------------

class _DirichletPoisson:
    """Prefactored 5-point Poisson solve -lap(p) = s, p = 0 on the boundary.

    Unknowns are the strictly interior nodes; nodes on the right/top
    boundary carry the value 0.
    """

    def __init__(self, grid):
        if grid.dimension != 2:
            raise ConfigurationError("Dirichlet Poisson solver requires a 2-d grid")
        nx, ny = grid.shape
        hx, hy = grid.h
        mx, my = nx - 1, ny - 1
        lx = _neg_laplacian_1d(mx, hx, "dirichlet")
        ly = _neg_laplacian_1d(my, hy, "dirichlet")
        A = np.kron(lx, np.eye(my)) + np.kron(np.eye(mx), ly)
        self._factor = cho_factor(A)
        ix, iy = np.meshgrid(np.arange(mx), np.arange(my), indexing="ij")
        self._interior = (ix * ny + iy).ravel()
        self._n_dof = grid.n_dof

    def solve(self, source):
        p = np.zeros(self._n_dof)
        p[self._interior] = cho_solve(self._factor, source[self._interior])
        return p


def solve_levelset_poisson(u, grid, solver=None):
    """Solve -lap(p) = sgn(u) with homogeneous Dirichlet boundary values."""
    if solver is None:
        solver = _DirichletPoisson(grid)
    return solver.solve(np.sign(u))


class LevelSetProblem(_PointObservationProblem):
    """Recover a binary field through Poisson point observations.

    The forward map sees only ``sgn(u)``, so the posterior is non-Gaussian
    and invariant under positive rescaling of ``u``.  The prior recipe uses
    the Neumann Laplacian; the pressure solve applies Dirichlet conditions
    regardless of the grid tag.
    """

    kind = "level_set"

    def __init__(self, points_per_axis=32, extent=1.0, noise_std=1e-3, data_seed=0,
                 circle_center=(0.5, 0.5), circle_radius=0.25):
        self.grid = GridSpec(2, float(extent), (int(points_per_axis),) * 2, "neumann")
        self.prior = GaussianMeasure.from_recipe("inv:(I - lap)^2", self.grid)
        self.noise_std = float(noise_std)
        self._poisson = _DirichletPoisson(self.grid)
        nodes = self.grid.nodes()
        center = np.asarray(circle_center, dtype=float)
        inside = np.linalg.norm(nodes - center, axis=1) <= float(circle_radius)
        self.truth = np.where(inside, 1.0, -1.0)
        # uniform 3x3 grid of interior observation points
        ticks = extent * np.arange(1, 4) / 4.0
        self.obs_points = np.array([(px, py) for px in ticks for py in ticks])
        self.obs_idx = np.array([self.grid.node_index(p) for p in self.obs_points], dtype=int)
        self.data = make_data(self, data_seed)

    def solve(self, u):
        return solve_levelset_poisson(u, self.grid, self._poisson)

    def forward(self, u):
        return self.solve(u)[self.obs_idx]
