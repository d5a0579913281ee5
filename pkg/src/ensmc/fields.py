"""Gaussian random fields on uniform grids.

Grids and second-order finite-difference operators, Gaussian measures with
dense symmetric covariance factors, whitening maps, ensemble deviation
matrices, and low-rank covariance updates together with the acceptance
correction functional needed by prior-equivalent jump proposals.

Conventions
-----------
* Nodes sit at ``x_i = i*h`` for ``i = 1..D`` per axis with ``h = L/D``,
  so points of the form ``j*L/J`` fall exactly on nodes whenever ``D`` is
  a multiple of ``J``.  2-d grids are flattened grid-major
  (``index = ix*Dy + iy``).
* The discrete L2 inner product is ``<u, v> = w * sum(u_i v_i)`` with mesh
  weight ``w = prod(h_axis)``.
* ``assemble_precision`` returns the plain operator matrix ``A`` of the
  recipe; a :class:`GaussianMeasure` folds the mesh weight into its stored
  quadratic form ``P = w * A`` so that ``||u||_C0^2 = u' P u`` is the
  discretization of the continuum Cameron-Martin norm and draws have
  coefficient covariance ``P^{-1}``.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import BuildError, ConfigurationError, NumericalError

BOUNDARIES = ("neumann", "periodic", "dirichlet")

# Woodbury capacitance matrices with condition numbers beyond this are
# refused rather than silently corrupting acceptance ratios.
CAPACITANCE_COND_LIMIT = 1e12


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on (0, L) or (0, L)^2.

    Parameters
    ----------
    dimension : 1 or 2
    extent : side length L of the domain
    points_per_axis : D, or (Dx, Dy) for 2-d grids
    boundary : "neumann", "periodic" or "dirichlet"
    """

    dimension: int
    extent: float
    points_per_axis: tuple
    boundary: str

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ConfigurationError(f"grid dimension must be 1 or 2, got {self.dimension}")
        if self.boundary not in BOUNDARIES:
            raise ConfigurationError(f"unknown boundary {self.boundary!r}")
        ppa = self.points_per_axis
        if np.isscalar(ppa):
            ppa = (int(ppa),) * self.dimension
        else:
            ppa = tuple(int(p) for p in ppa)
        if len(ppa) != self.dimension or any(p < 1 for p in ppa):
            raise ConfigurationError(f"bad points_per_axis {self.points_per_axis!r}")
        if not self.extent > 0:
            raise ConfigurationError("grid extent must be positive")
        object.__setattr__(self, "points_per_axis", ppa)
        object.__setattr__(self, "_weight", float(np.prod([self.extent / p for p in ppa])))

    @property
    def shape(self):
        return self.points_per_axis

    @property
    def n_dof(self):
        return int(np.prod(self.points_per_axis))

    @property
    def h(self):
        """Spacing per axis."""
        return tuple(self.extent / p for p in self.points_per_axis)

    @property
    def weight(self):
        """Quadrature weight of the mesh inner product, prod(h_axis)."""
        return self._weight

    def axis_nodes(self, axis=0):
        n = self.points_per_axis[axis]
        h = self.h[axis]
        return h * np.arange(1, n + 1)

    def nodes(self):
        """All node coordinates, shape (n_dof, dimension), grid-major order."""
        if self.dimension == 1:
            return self.axis_nodes(0)[:, None]
        xs, ys = self.axis_nodes(0), self.axis_nodes(1)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def node_index(self, point):
        """Flat index of the node nearest to ``point``."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        idx = []
        for axis in range(self.dimension):
            n = self.points_per_axis[axis]
            h = self.h[axis]
            i = int(round(point[axis] / h))
            idx.append(min(max(i, 1), n) - 1)
        if self.dimension == 1:
            return idx[0]
        return idx[0] * self.points_per_axis[1] + idx[1]

    def inner(self, u, v):
        """Mesh-weighted L2 inner product."""
        return self.weight * float(np.dot(u, v))

    def norm_l2_sq(self, u):
        return self.weight * float(np.dot(u, u))


@dataclass(frozen=True)
class Field:
    """Coefficient vector of a function sampled on a grid."""

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (self.grid.n_dof,):
            raise ConfigurationError(
                f"field length {coeffs.shape} does not match grid dof {self.grid.n_dof}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    def norm_l2_sq(self):
        return self.grid.norm_l2_sq(self.coeffs)


# ----------------------------------------------------------------------
# Finite-difference operators and the precision-recipe DSL
# ----------------------------------------------------------------------

def _neg_laplacian_1d(n, h, boundary):
    """Matrix of -d^2/dx^2 with second-order centered stencils.

    Neumann uses mirrored ghost values across the faces beyond the end
    nodes, periodic wraps the stencil, Dirichlet eliminates zero boundary
    values.
    """
    A = np.zeros((n, n))
    main = np.arange(n)
    A[main, main] = 2.0
    off = np.arange(n - 1)
    A[off, off + 1] = -1.0
    A[off + 1, off] = -1.0
    if boundary == "neumann":
        A[0, 0] = 1.0
        A[-1, -1] = 1.0
    elif boundary == "periodic":
        A[0, -1] += -1.0
        A[-1, 0] += -1.0
    return A / h**2


def laplacian(grid):
    """Matrix of the Laplacian (negative semi-definite sign convention)."""
    if grid.dimension == 1:
        neg = _neg_laplacian_1d(grid.points_per_axis[0], grid.h[0], grid.boundary)
    else:
        nx, ny = grid.points_per_axis
        lx = _neg_laplacian_1d(nx, grid.h[0], grid.boundary)
        ly = _neg_laplacian_1d(ny, grid.h[1], grid.boundary)
        neg = np.kron(lx, np.eye(ny)) + np.kron(np.eye(nx), ly)
    return -neg


def mean_projector(grid):
    """Matrix of v -> (1/|domain|) * integral(v), i.e. the mean of v at every node."""
    n = grid.n_dof
    return np.full((n, n), 1.0 / n)


_ALLOWED_BINOPS = {ast.Add: "add", ast.Sub: "sub", ast.Mult: "mul", ast.Pow: "pow"}


def _eval_recipe_node(node, env):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name):
        try:
            return env[node.id]
        except KeyError:
            raise ConfigurationError(f"unknown symbol {node.id!r} in precision recipe") from None
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        val = _eval_recipe_node(node.operand, env)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.BinOp) and type(node.op) in _ALLOWED_BINOPS:
        op = _ALLOWED_BINOPS[type(node.op)]
        left = _eval_recipe_node(node.left, env)
        right = _eval_recipe_node(node.right, env)
        l_mat = isinstance(left, np.ndarray)
        r_mat = isinstance(right, np.ndarray)
        if op == "add" or op == "sub":
            if l_mat != r_mat:
                raise ConfigurationError("recipe adds a scalar to an operator; multiply I instead")
            return left + right if op == "add" else left - right
        if op == "mul":
            if l_mat and r_mat:
                return left @ right
            return left * right
        # pow
        if l_mat:
            if r_mat or right != int(right) or right < 0:
                raise ConfigurationError("operator powers must be non-negative integers")
            return np.linalg.matrix_power(left, int(right))
        if r_mat:
            raise ConfigurationError("cannot raise a scalar to an operator power")
        return left**right
    raise ConfigurationError(f"unsupported syntax in precision recipe: {ast.dump(node)}")


def parse_recipe(recipe, grid):
    """Evaluate a precision-recipe string ("inv:<expr>") to an operator matrix.

    The expression grammar covers the identity ``I``, the Laplacian ``lap``,
    the mean projection ``T``, scalar shifts/scales, sums, products, and
    integer powers; ``^`` denotes a power.
    """
    recipe = recipe.strip()
    if not recipe.startswith("inv:"):
        raise ConfigurationError(f"precision recipe must start with 'inv:', got {recipe!r}")
    expr = recipe[len("inv:"):].replace("^", "**")
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse precision recipe {recipe!r}: {exc}") from None
    env = {"I": np.eye(grid.n_dof), "lap": laplacian(grid), "T": mean_projector(grid)}
    matrix = _eval_recipe_node(tree.body, env)
    if not isinstance(matrix, np.ndarray):
        raise ConfigurationError("precision recipe evaluates to a scalar, not an operator")
    return matrix


def assemble_precision(recipe, grid):
    """Assemble the (unweighted) operator matrix of a precision recipe.

    Raises :class:`BuildError` if the assembled matrix is not symmetric
    positive definite on the grid.
    """
    A = parse_recipe(recipe, grid)
    A = 0.5 * (A + A.T)
    vals = np.linalg.eigvalsh(A)
    if vals[0] <= 1e-12 * max(abs(vals[-1]), 1.0):
        raise BuildError(
            f"precision recipe {recipe!r} is not positive definite on this grid "
            f"(smallest eigenvalue {vals[0]:.6e})"
        )
    return A


# ----------------------------------------------------------------------
# Gaussian measures
# ----------------------------------------------------------------------

class GaussianMeasure:
    """Gaussian measure on grid coefficients.

    ``precision`` stores the mesh-weighted quadratic form of the inverse
    covariance: the Cameron-Martin norm is ``||u||^2 = u' P u`` and draws
    have coefficient covariance ``P^{-1}``.  The symmetric factor
    ``cov_sqrt = P^{-1/2}`` is computed once per measure by eigendecomposition.
    """

    def __init__(self, grid, precision=None, mean=None, cov_factor=None):
        self.grid = grid
        n = grid.n_dof
        self.mean = np.zeros(n) if mean is None else np.asarray(mean, dtype=float)
        if self.mean.shape != (n,):
            raise ConfigurationError("measure mean does not match grid dof")
        if precision is None:
            # Degenerate construction from an explicit factor (test doubles);
            # only sampling is supported.
            if cov_factor is None:
                raise ConfigurationError("either a precision matrix or a factor is required")
            self.precision = None
            self.cov_sqrt = np.asarray(cov_factor, dtype=float)
            self._eigvals = self._eigvecs = self.prec_sqrt = None
            return
        P = 0.5 * (precision + precision.T)
        vals, vecs = np.linalg.eigh(P)
        if vals[0] <= 1e-12 * max(abs(vals[-1]), 1e-300):
            raise BuildError(
                f"precision matrix not positive definite (smallest eigenvalue {vals[0]:.6e})"
            )
        self.precision = P
        self._eigvals = vals
        self._eigvecs = vecs
        self.cov_sqrt = (vecs * (1.0 / np.sqrt(vals))) @ vecs.T
        self.prec_sqrt = (vecs * np.sqrt(vals)) @ vecs.T

    @classmethod
    def from_recipe(cls, recipe, grid, mean=None):
        op = assemble_precision(recipe, grid)
        return cls(grid, precision=grid.weight * op, mean=mean)

    @classmethod
    def from_factor(cls, grid, cov_factor, mean=None):
        """Degenerate measure defined only through ``mean + factor @ noise``."""
        return cls(grid, precision=None, mean=mean, cov_factor=cov_factor)

    @property
    def dim(self):
        return self.grid.n_dof

    @property
    def covariance(self):
        self._require_precision()
        return (self._eigvecs * (1.0 / self._eigvals)) @ self._eigvecs.T

    def _require_precision(self):
        if self.precision is None:
            raise NumericalError("operation requires a non-degenerate measure")

    def sample(self, rng, size=None):
        """Draw ``mean + cov_sqrt @ zeta`` with ``zeta`` standard normal."""
        if size is None:
            return self.mean + self.cov_sqrt @ rng.standard_normal(self.dim)
        zeta = rng.standard_normal((int(size), self.dim))
        return self.mean + zeta @ self.cov_sqrt.T

    def cm_norm_sq(self, u):
        """Squared Cameron-Martin norm u' P u."""
        self._require_precision()
        return float(u @ (self.precision @ u))

    def whiten(self, u):
        self._require_precision()
        return self.prec_sqrt @ u

    def unwhiten(self, xi):
        return self.cov_sqrt @ xi

    def kl_basis(self, n_modes):
        """Leading covariance eigenvectors (largest variance first)."""
        self._require_precision()
        if not 0 <= n_modes <= self.dim:
            raise ConfigurationError(f"subspace dimension {n_modes} out of range")
        return self._eigvecs[:, :n_modes]


# ----------------------------------------------------------------------
# Deviation matrices and low-rank jump covariances
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DeviationMatrix:
    """Normalized centred ensemble data: column j is (u_j - mean)/sqrt(r-1)."""

    matrix: np.ndarray  # (dim, r)
    mean: np.ndarray    # (dim,)


def deviation_matrix(particles):
    """Build the deviation matrix of an ensemble given as rows.

    ``V @ V.T`` equals the unbiased sample covariance of the particles.
    """
    particles = np.asarray(particles, dtype=float)
    r = particles.shape[0]
    if r < 2:
        raise ConfigurationError("deviation matrix needs at least 2 particles")
    mean = particles.mean(axis=0)
    V = (particles - mean).T / np.sqrt(r - 1.0)
    return DeviationMatrix(matrix=V, mean=mean)


def capacitance_factor(gram, gamma):
    """Cholesky factor of the capacitance matrix gamma^{-2} I + V' P V.

    Refuses (with a condition-number report) when the matrix is close
    enough to singular to corrupt acceptance ratios.
    """
    K = np.asarray(gram, dtype=float).copy()
    r = K.shape[0]
    inv_g2 = gamma**-2
    trace_gram = float(K.trace())
    K.flat[:: r + 1] += inv_g2
    # lambda_min(K) >= gamma^-2 exactly, so this bound is cheap and safe
    cond_bound = 1.0 + trace_gram / inv_g2
    if not np.isfinite(cond_bound) or cond_bound > CAPACITANCE_COND_LIMIT:
        cond = float(np.linalg.cond(K))
        if not np.isfinite(cond) or cond > CAPACITANCE_COND_LIMIT:
            raise NumericalError(
                f"capacitance matrix numerically singular (condition number {cond:.3e})"
            )
    try:
        return cho_factor(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded above
        raise NumericalError(
            f"capacitance factorization failed (condition number {np.linalg.cond(K):.3e})"
        ) from exc


class LowRankJump:
    """Jump distribution N(mean, C) with C = C_base + gamma^2 V V'.

    The dense covariance is never formed; quadratic forms in C^{-1} go
    through the Woodbury identity, inverting only the small capacitance
    matrix ``gamma^{-2} I + V' P_base V``.  ``gamma = 0`` (or no deviations)
    collapses to the base measure.
    """

    def __init__(self, base, deviations=None, gamma=0.0, mean=None):
        self.base = base
        self.gamma = float(gamma)
        if self.gamma < 0:
            raise ConfigurationError("jump inflation gamma must be non-negative")
        if deviations is not None and deviations.shape[1] == 0:
            deviations = None
        self.deviations = None if self.gamma == 0.0 else deviations
        self.mean = base.mean if mean is None else np.asarray(mean, dtype=float)
        self._cap = None

    def _capacitance(self):
        if self._cap is None:
            V = self.deviations
            PV = self.base.precision @ V
            self._cap = capacitance_factor(V.T @ PV, self.gamma)
        return self._cap

    def mahalanobis_sq(self, resid):
        """Quadratic form resid' C^{-1} resid via Woodbury."""
        P = self.base.precision
        if P is None:
            raise NumericalError("low-rank jump requires a non-degenerate base measure")
        Pr = P @ resid
        quad = float(resid @ Pr)
        if self.deviations is None:
            return quad
        w = self.deviations.T @ Pr
        return quad - float(w @ cho_solve(self._capacitance(), w, check_finite=False))

    def sample_centered(self, rng):
        """Draw from N(0, C); consumes base noise first, then ensemble noise."""
        xi = self.base.cov_sqrt @ rng.standard_normal(self.base.dim)
        if self.deviations is not None:
            xi = xi + self.gamma * (self.deviations @ rng.standard_normal(self.deviations.shape[1]))
        return xi


def i_c(u, jump, prior):
    """Acceptance correction for a prior-equivalent jump N(m, C).

    Evaluates ``0.5 ||u||_C0^2 - 0.5 ||u - m||_C^2`` without forming C^{-1}
    densely.  Identically zero for the plain prior jump (m = 0, C = C0).
    """
    return 0.5 * prior.cm_norm_sq(u) - 0.5 * jump.mahalanobis_sq(u - jump.mean)


# ----------------------------------------------------------------------
# Monte Carlo oracle for fourth moments of quadratic forms
# ----------------------------------------------------------------------

def quadratic_moment_mc(Z, n_samples, rng):
    """Monte Carlo estimate of E <xi, Z xi>^2 for xi ~ N(0, I).

    Returns ``(estimate, standard_error)``.  Intended as an independent
    check of closed-form fourth-moment computations at small dimension.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
        raise ConfigurationError("Z must be a square matrix")
    if not np.allclose(Z, Z.T, atol=1e-12):
        raise ConfigurationError("Z must be symmetric")
    if Z.shape[0] > 16:
        raise ConfigurationError("quadratic_moment_mc is restricted to dimension <= 16")
    n_samples = int(n_samples)
    if n_samples < 1000:
        raise ConfigurationError("need at least 1000 samples for a meaningful estimate")
    xi = rng.standard_normal((n_samples, Z.shape[0]))
    vals = np.einsum("ni,ij,nj->n", xi, Z, xi) ** 2
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n_samples))
    return est, se
