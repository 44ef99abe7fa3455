"""Differentially private release of a single-Gaussian feature model.

For features confined to the unit ball, the sample mean and covariance
of a class are released under the Gaussian mechanism: both receive
additive noise with standard deviation (4 / (n * epsilon)) *
sqrt(5 * ln(4 / delta)), and the noisy covariance is projected back onto
the positive semi-definite cone. The release is restricted to one full
covariance Gaussian per class; mixtures with several components are not
offered a private path.
"""

import math
from dataclasses import dataclass

import numpy as np

from .gmm import CovarianceFamily, GmmParams


@dataclass(frozen=True)
class DpConfig:
    """Privacy budget for one release."""

    epsilon: float
    delta: float
    seed: int = 0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class DpReleaseStats:
    """Bookkeeping for one release: sample count, noise scale, projection clips."""

    num_samples: int
    sigma: float
    clipped_eigenvalues: int

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")


def noise_sigma(n: int, epsilon: float, delta: float, *, derivation_consistent: bool = False) -> float:
    """Noise standard deviation (4 / (n * epsilon)) * sqrt(5 * ln(4 / delta)).

    The default constant uses ln(4 / delta). Composing the 2*sqrt(10)/n
    joint sensitivity of (mean, covariance) with the standard Gaussian
    mechanism gives ln(2 / delta) instead; pass derivation_consistent=True
    to use that slightly smaller scale.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    ratio = 2.0 if derivation_consistent else 4.0
    return 4.0 / (n * epsilon) * math.sqrt(5.0 * math.log(ratio / delta))


def _project_psd(m: np.ndarray, asym_tol: float = 1e-8):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("need a square matrix")
    if not np.isfinite(m).all():
        raise ValueError("matrix contains non-finite entries")
    asym = float(np.abs(m - m.T).max(initial=0.0))
    if asym > asym_tol * max(1.0, float(np.abs(m).max(initial=0.0))):
        raise ValueError(f"matrix asymmetry {asym:.3e} exceeds tolerance")
    sym = 0.5 * (m + m.T)
    eigval, eigvec = np.linalg.eigh(sym)
    clipped = int((eigval < 0).sum())
    proj = (eigvec * np.clip(eigval, 0.0, None)) @ eigvec.T
    return 0.5 * (proj + proj.T), clipped


def psd_project(m) -> np.ndarray:
    """Frobenius-nearest positive semi-definite matrix.

    Symmetrizes the input (rejecting asymmetry beyond 1e-8), clips
    negative eigenvalues to zero, and reconstructs.
    """
    return _project_psd(m)[0]


def dp_release(x, config: DpConfig):
    """Release a noisy (mean, covariance) pair as a K=1 full-covariance model.

    Every row of x must lie in the unit ball (enforce upstream with
    normalize_to_unit_ball) and n must be at least 2. The covariance uses
    the 1/n normalization; its noise matrix has i.i.d. entries and is
    symmetrized before projection. Deterministic given config.seed.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("need an (n, d) matrix")
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least 2 samples for a private release")
    norms = np.linalg.norm(x, axis=1)
    if norms.size and norms.max() > 1.0 + 1e-9:
        raise ValueError(
            f"row norm {norms.max():.6f} exceeds 1; normalize features first"
        )
    sigma = noise_sigma(n, config.epsilon, config.delta)
    rng = np.random.default_rng(config.seed)
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / n
    cov = 0.5 * (cov + cov.T)
    noisy_mean = mean + sigma * rng.standard_normal(d)
    noise = sigma * rng.standard_normal((d, d))
    noisy_cov, clipped = _project_psd(cov + 0.5 * (noise + noise.T))
    params = GmmParams(
        CovarianceFamily.FULL,
        weights=np.ones(1),
        means=noisy_mean[None, :],
        covariances=noisy_cov[None, :, :],
    )
    return params, DpReleaseStats(num_samples=n, sigma=sigma, clipped_eigenvalues=clipped)
