"""Gaussian mixture models over feature space.

Supports three covariance families (full, diagonal, spherical), maximum
likelihood fitting via expectation-maximization with k-means++ seeded
restarts, log-density evaluation, and seeded sampling. Mixtures fitted
per class are the payload that clients transmit instead of raw features.
"""

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

_LOG_2PI = np.log(2.0 * np.pi)


class GmmError(Exception):
    """Invalid mixture parameters or failed density evaluation."""


class FitError(GmmError):
    """EM could not produce a valid fit."""


class CovarianceFamily(IntEnum):
    """Structural constraint on component covariances.

    The integer values are the wire encoding and must not change.
    """

    FULL = 0
    DIAG = 1
    SPHERICAL = 2

    @classmethod
    def from_name(cls, name: str) -> "CovarianceFamily":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown covariance family: {name!r}") from None


def _readonly(a: np.ndarray) -> np.ndarray:
    """Defensive copy to immutable float64; read-only input is adopted as is."""
    if (
        isinstance(a, np.ndarray)
        and a.dtype == np.float64
        and not a.flags.writeable
        and a.flags.c_contiguous
    ):
        return a
    a = np.array(a, dtype=np.float64, copy=True, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GmmParams:
    """One mixture: weights, means, and per-family covariances.

    covariances shape by family:
      FULL      (K, d, d) symmetric PSD matrices
      DIAG      (K, d)    per-dimension variances
      SPHERICAL (K,)      one variance per component
    """

    family: CovarianceFamily
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "family", CovarianceFamily(self.family))
        object.__setattr__(self, "weights", _readonly(self.weights))
        object.__setattr__(self, "means", _readonly(self.means))
        object.__setattr__(self, "covariances", _readonly(self.covariances))
        self._validate()

    def _validate(self):
        w, mu, cov = self.weights, self.means, self.covariances
        if mu.ndim != 2:
            raise GmmError("means must be a (K, d) matrix")
        k, d = mu.shape
        if k < 1 or d < 1:
            raise GmmError("need K >= 1 components and d >= 1 dimensions")
        if w.shape != (k,):
            raise GmmError("weights must have one entry per component")
        if not (np.isfinite(w).all() and np.isfinite(mu).all() and np.isfinite(cov).all()):
            raise GmmError("parameters must be finite")
        if w.min() < -1e-12:
            raise GmmError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise GmmError("weights must sum to 1")
        if self.family == CovarianceFamily.FULL:
            if cov.shape != (k, d, d):
                raise GmmError("full covariances must have shape (K, d, d)")
            if not np.array_equal(cov, cov.swapaxes(1, 2)):
                # tolerance path, hit only on inexact symmetry
                asym = max(float(np.abs(m - m.T).max(initial=0.0)) for m in cov)
                scale = max(1.0, float(np.abs(cov).max(initial=0.0)))
                if asym > 1e-8 * scale:
                    raise GmmError("full covariances must be symmetric")
        elif self.family == CovarianceFamily.DIAG:
            if cov.shape != (k, d):
                raise GmmError("diagonal covariances must have shape (K, d)")
            if cov.min() < 0:
                raise GmmError("diagonal variances must be non-negative")
        else:
            if cov.shape != (k,):
                raise GmmError("spherical covariances must have shape (K,)")
            if cov.min() < 0:
                raise GmmError("spherical variances must be non-negative")

    @property
    def num_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class EmConfig:
    """EM hyperparameters.

    tol is the relative improvement of average log-likelihood below which
    iteration stops; reg_covar is added to every covariance diagonal each
    M-step so few-sample classes never yield singular fits.
    """

    max_iters: int = 200
    tol: float = 1e-5
    reg_covar: float = 1e-6
    n_init: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.reg_covar <= 0:
            raise ValueError("reg_covar must be > 0")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")


@dataclass(frozen=True)
class FitStats:
    """Outcome of one em_fit call.

    avg_log_likelihood is the mean per-sample log density of the returned
    parameters on the training data; trace holds that quantity after each
    E-step and never decreases by more than numerical noise.
    """

    avg_log_likelihood: float
    iterations: int
    converged: bool
    trace: tuple = field(repr=False, default=())


def _component_log_density(params: GmmParams, x: np.ndarray) -> np.ndarray:
    """Per-component Gaussian log densities, shape (n, K)."""
    mu = params.means
    k, d = mu.shape
    if params.family == CovarianceFamily.FULL:
        out = np.empty((x.shape[0], k))
        for j in range(k):
            try:
                chol = np.linalg.cholesky(params.covariances[j])
            except np.linalg.LinAlgError:
                raise GmmError(
                    f"component {j} covariance is not positive definite"
                ) from None
            diff = (x - mu[j]).T
            sol = solve_triangular(chol, diff, lower=True, check_finite=False)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            out[:, j] = -0.5 * (d * _LOG_2PI + logdet + (sol * sol).sum(axis=0))
    elif params.family == CovarianceFamily.DIAG:
        var = params.covariances
        if var.min() <= 0:
            raise GmmError("diagonal variance is zero; fit with a regularizer")
        inv = 1.0 / var
        quad = (x * x) @ inv.T - 2.0 * (x @ (mu * inv).T) + (mu * mu * inv).sum(axis=1)
        out = -0.5 * (d * _LOG_2PI + np.log(var).sum(axis=1) + quad)
    else:
        lam = params.covariances
        if lam.min() <= 0:
            raise GmmError("spherical variance is zero; fit with a regularizer")
        sq = ((x * x).sum(axis=1)[:, None] - 2.0 * x @ mu.T + (mu * mu).sum(axis=1))
        out = -0.5 * (d * (_LOG_2PI + np.log(lam)) + sq / lam)
    return out


def _mixture_log_density(params: GmmParams, x: np.ndarray) -> np.ndarray:
    """Mixture log densities for each row of x, via log-sum-exp."""
    comp = _component_log_density(params, x)
    with np.errstate(divide="ignore"):
        logw = np.log(params.weights)
    return logsumexp(comp + logw, axis=1)


def log_pdf(params: GmmParams, x) -> float:
    """Log density of the mixture at a single point."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.dim:
        raise ValueError(f"point must be a vector of dimension {params.dim}")
    return float(_mixture_log_density(params, x[None, :])[0])


def avg_log_likelihood(params: GmmParams, x) -> float:
    """Mean log density over the rows of x."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need a non-empty (n, d) matrix")
    if x.shape[1] != params.dim:
        raise ValueError(f"data dimension {x.shape[1]} != mixture dimension {params.dim}")
    return float(_mixture_log_density(params, x).mean())


def sample(params: GmmParams, n: int, seed: int) -> np.ndarray:
    """Draw n points: component by weight, then its Gaussian.

    Full covariances are factored by eigendecomposition with negative
    eigenvalues clipped to zero, so PSD-projected (possibly singular)
    matrices sample cleanly.
    """
    if n < 0:
        raise ValueError("sample count must be >= 0")
    k, d = params.means.shape
    out = np.empty((n, d))
    if n == 0:
        return out
    rng = np.random.default_rng(seed)
    w = params.weights / params.weights.sum()
    comps = rng.choice(k, size=n, p=w)
    for j in range(k):
        mask = comps == j
        m = int(mask.sum())
        if m == 0:
            continue
        z = rng.standard_normal((m, d))
        mu = params.means[j]
        if params.family == CovarianceFamily.FULL:
            eigval, eigvec = np.linalg.eigh(params.covariances[j])
            factor = eigvec * np.sqrt(np.clip(eigval, 0.0, None))
            out[mask] = mu + z @ factor.T
        elif params.family == CovarianceFamily.DIAG:
            out[mask] = mu + z * np.sqrt(np.clip(params.covariances[j], 0.0, None))
        else:
            out[mask] = mu + z * np.sqrt(max(params.covariances[j], 0.0))
    return out


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[j] = x[idx]
        closest = np.minimum(closest, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _moment_params(x, resp, family, reg_covar) -> GmmParams:
    """M-step: responsibility-weighted moments plus diagonal regularizer."""
    n, d = x.shape
    nk = resp.sum(axis=0)
    weights = nk / nk.sum()
    means = (resp.T @ x) / nk[:, None]
    if family == CovarianceFamily.FULL:
        cov = np.empty((len(nk), d, d))
        for j in range(len(nk)):
            diff = x - means[j]
            s = (diff * resp[:, j : j + 1]).T @ diff / nk[j]
            s = 0.5 * (s + s.T)
            s[np.diag_indices(d)] += reg_covar
            cov[j] = s
    else:
        ex2 = (resp.T @ (x * x)) / nk[:, None]
        var = np.clip(ex2 - means**2, 0.0, None)
        if family == CovarianceFamily.DIAG:
            cov = var + reg_covar
        else:
            cov = var.mean(axis=1) + reg_covar
    return GmmParams(family, weights, means, cov)


def _init_params(x, k, family, reg_covar, rng) -> GmmParams:
    """k-means++ centers followed by one hard-assignment moment estimate."""
    centers = _kmeanspp_centers(x, k, rng)
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    resp = np.zeros((x.shape[0], k))
    resp[np.arange(x.shape[0]), assign] = 1.0
    # empty clusters keep their center and inherit the global scale
    counts = resp.sum(axis=0)
    if (counts == 0).any():
        resp[:, counts == 0] = 1e-12
    params = _moment_params(x, resp, family, reg_covar)
    if (counts == 0).any():
        means = np.array(params.means)
        means[counts == 0] = centers[counts == 0]
        params = GmmParams(family, params.weights, means, params.covariances)
    return params


def _reseed_empty(resp, norm, dead) -> np.ndarray:
    """Re-seed dead components at the lowest-density points."""
    resp = resp.copy()
    order = np.argsort(norm)
    for slot, j in enumerate(np.flatnonzero(dead)):
        row = order[slot % len(norm)]
        resp[row, :] = 0.0
        resp[row, j] = 1.0
    return resp


def _em_single(x, k, family, config, rng):
    params = _init_params(x, k, family, config.reg_covar, rng)
    n = x.shape[0]
    trace = []
    prev = -np.inf
    converged = False
    for _ in range(config.max_iters):
        comp = _component_log_density(params, x)
        with np.errstate(divide="ignore"):
            joint = comp + np.log(params.weights)
        norm = logsumexp(joint, axis=1)
        ll = float(norm.mean())
        if not np.isfinite(ll):
            raise FitError("log-likelihood diverged")
        trace.append(ll)
        if len(trace) > 1:
            rel = (ll - prev) / max(abs(prev), 1e-12)
            if rel < config.tol:
                converged = True
                break
        prev = ll
        resp = np.exp(joint - norm[:, None])
        dead = resp.sum(axis=0) < 1e-10 * n
        if dead.any():
            resp = _reseed_empty(resp, norm, dead)
        params = _moment_params(x, resp, family, config.reg_covar)
    else:
        trace.append(avg_log_likelihood(params, x))
    stats = FitStats(
        avg_log_likelihood=trace[-1],
        iterations=len(trace) - 1,
        converged=converged,
        trace=tuple(trace),
    )
    return params, stats


def em_fit(x, num_components: int, family: CovarianceFamily, config: EmConfig | None = None):
    """Fit a mixture to the rows of x; returns (GmmParams, FitStats).

    Runs n_init seeded restarts and keeps the best final log-likelihood.
    If there are fewer points than components, the component count drops
    to the sample count.
    """
    if config is None:
        config = EmConfig()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise FitError("cannot fit a mixture to empty data")
    if not np.isfinite(x).all():
        raise FitError("data contains non-finite values")
    if num_components < 1:
        raise FitError("component count must be >= 1")
    family = CovarianceFamily(family)
    k = min(num_components, x.shape[0])
    best = None
    for child in np.random.SeedSequence(config.seed).spawn(config.n_init):
        rng = np.random.default_rng(child)
        try:
            candidate = _em_single(x, k, family, config, rng)
        except (np.linalg.LinAlgError, GmmError) as exc:
            if isinstance(exc, FitError):
                raise
            raise FitError(f"numerical failure during EM: {exc}") from exc
        if best is None or candidate[1].avg_log_likelihood > best[1].avg_log_likelihood:
            best = candidate
    return best
