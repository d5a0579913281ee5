"""Convergence diagnostics for ensemble chains.

Particle-averaged autocorrelation with integrated time, the multivariate
potential scale reduction factor, moment errors against an analytic
posterior, and the distance of samples from the affine span of the
initial ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError


@dataclass(frozen=True)
class AutocorrCurve:
    """Particle-averaged normalized autocorrelation with integrated time."""

    lags: np.ndarray
    values: np.ndarray
    integrated_time: float


@dataclass(frozen=True)
class MPSRFResult:
    value: float
    n_chains: int
    length: int
    lambda_max: float
    proj_dim: int | None


@dataclass(frozen=True)
class MomentErrors:
    rel_mean_error: float
    rel_cov_error: float


def _autocov_biased(series, max_lag):
    """Biased autocovariance c_j = (1/K) sum_{k<=K-j} (x_k - mean)(x_{k+j} - mean)."""
    k = series.shape[0]
    centered = series - series.mean()
    n_fft = 1 << int(np.ceil(np.log2(2 * k)))
    spec = np.fft.rfft(centered, n=n_fft)
    acov = np.fft.irfft(spec * np.conj(spec), n=n_fft)[: max_lag + 1]
    return acov / k


def autocorrelation(series, max_lag=None):
    """Average the per-particle normalized autocorrelations of scalar chains.

    ``series`` has one row per particle (a single 1-d series is treated as
    one particle).  Burn-in is assumed already removed.  Sums are divided
    by the series length and centered with the per-particle mean.
    """
    series = np.atleast_2d(np.asarray(series, dtype=float))
    n, k = series.shape
    if max_lag is None:
        max_lag = min(5000, k // 10)
    max_lag = int(max_lag)
    if k <= max_lag:
        raise NumericalError(f"series length {k} must exceed max lag {max_lag}")
    curves = np.empty((n, max_lag + 1))
    for i in range(n):
        acov = _autocov_biased(series[i], max_lag)
        if acov[0] <= 0:
            raise NumericalError(f"series for particle {i} has zero variance (constant chain)")
        curves[i] = acov / acov[0]
    values = curves.mean(axis=0)
    return AutocorrCurve(
        lags=np.arange(max_lag + 1),
        values=values,
        integrated_time=integrated_time(values),
    )


def integrated_time(acf_values):
    """Initial-positive-sequence truncation: tau = 1 + 2 sum c(j).

    Lags are added in consecutive pairs until a pair sums negative.
    """
    total = 0.0
    j = 1
    n = len(acf_values)
    while j + 1 < n:
        pair = acf_values[j] + acf_values[j + 1]
        if pair < 0:
            break
        total += pair
        j += 2
    return 1.0 + 2.0 * total


def project_chains(chains, proj_dim):
    """Project chains onto the leading principal components of the pooled samples."""
    m, n, p = chains.shape
    pooled = chains.reshape(m * n, p)
    centered = pooled - pooled.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    basis = vt[:proj_dim].T
    return chains @ basis


def mpsrf(chains, proj_dim=None):
    """Multivariate potential scale reduction factor over m chains.

    ``chains`` has shape (m, n, p).  When the dimension is too large for
    the within-chain covariance to be well conditioned the chains are
    first projected onto the leading ``proj_dim`` principal components of
    the pooled samples.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 2:
        chains = chains[:, :, None]
    m, n, p = chains.shape
    if m < 2:
        raise NumericalError("MPSRF needs at least 2 chains")
    if n < 10:
        raise NumericalError("MPSRF needs chains of length >= 10")
    if proj_dim is not None and p > proj_dim:
        chains = project_chains(chains, proj_dim)
        p = chains.shape[2]
    else:
        proj_dim = None
    if n <= p:
        raise NumericalError(
            f"chain length {n} must exceed dimension {p}; reduce the projection dimension"
        )
    means = chains.mean(axis=1)
    within = np.zeros((p, p))
    for i in range(m):
        dev = chains[i] - means[i]
        within += dev.T @ dev / (n - 1)
    within /= m
    grand = means.mean(axis=0)
    dev_means = means - grand
    between_over_n = dev_means.T @ dev_means / (m - 1)
    # the generalized eigensolver does not reliably flag a singular W itself
    w_eigs = np.linalg.eigvalsh(within)
    if w_eigs[0] <= 1e-12 * max(w_eigs[-1], 1e-300):
        raise NumericalError(
            "within-chain covariance is singular; reduce the projection dimension"
        )
    try:
        lam = scipy.linalg.eigh(
            between_over_n, within, eigvals_only=True, check_finite=False
        )[-1]
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "within-chain covariance is singular; reduce the projection dimension"
        ) from exc
    value = (n - 1) / n + (m + 1) / m * lam
    return MPSRFResult(value=float(value), n_chains=m, length=n,
                       lambda_max=float(lam), proj_dim=proj_dim)


def moment_errors(samples, exact):
    """Relative l2 errors of pooled sample mean and covariance."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < 2:
        raise NumericalError("moment errors need at least 2 samples")
    mean = samples.mean(axis=0)
    cov = np.cov(samples.T, ddof=1)
    mean_scale = np.linalg.norm(exact.mean)
    rel_mean = np.linalg.norm(mean - exact.mean) / (mean_scale if mean_scale > 0 else 1.0)
    rel_cov = np.linalg.norm(cov - exact.cov, "fro") / np.linalg.norm(exact.cov, "fro")
    return MomentErrors(rel_mean_error=float(rel_mean), rel_cov_error=float(rel_cov))


def span_distance(samples, initial_ensemble):
    """Distance of each sample from the affine span of the initial ensemble."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    initial = np.asarray(initial_ensemble, dtype=float)
    if initial.shape[0] < 2:
        raise NumericalError("span distance needs an initial ensemble of >= 2 particles")
    origin = initial.mean(axis=0)
    dirs = initial - origin
    u, s, _ = np.linalg.svd(dirs.T, full_matrices=False)
    rank = int(np.sum(s > 1e-12 * s[0])) if s.size and s[0] > 0 else 0
    basis = u[:, :rank]
    rel = samples - origin
    resid = rel - (rel @ basis) @ basis.T
    return np.linalg.norm(resid, axis=1)
