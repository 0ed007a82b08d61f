"""Statistical targets: priors, likelihoods, and the joint log-density.

Two models are provided.  LogisticModel is the workhorse: a binary logistic
likelihood with an independent Gaussian prior on the coefficients.
ConjugateGaussianModel is a scalar Gaussian-Gaussian toy whose posterior is
available in closed form; it serves as the convergence oracle for the
optimizer tests.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Dataset:
    """Dense binary-response design.

    features: (n_obs, d) matrix; if ``intercept`` is set, column 0 is all ones.
    labels: (n_obs,) vector of {0, 1}.
    """

    features: np.ndarray
    labels: np.ndarray
    intercept: bool = True

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=float)
        if features.ndim != 2:
            raise ValidationError("features must be a 2-d matrix")
        if labels.shape != (features.shape[0],):
            raise ValidationError(
                f"labels length {labels.shape} does not match {features.shape[0]} observations"
            )
        if not np.all(np.isfinite(features)):
            raise ValidationError("features contain non-finite entries")
        bad = np.nonzero((labels != 0.0) & (labels != 1.0))[0]
        if bad.size:
            raise ValidationError(f"label at row {bad[0]} is not 0 or 1 (got {labels[bad[0]]})")
        if self.intercept and features.shape[0] > 0 and not np.all(features[:, 0] == 1.0):
            raise ValidationError("intercept declared but column 0 is not all ones")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n_obs(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]


def _as_theta_batch(theta, dim):
    """Validate theta and return it as a (m, dim) batch plus a scalar flag."""
    arr = np.asarray(theta, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValidationError(f"theta has shape {np.shape(theta)}, expected dimension {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("theta contains non-finite entries")
    return arr, single


@dataclass(frozen=True)
class LogisticModel:
    """Logistic regression likelihood with a N(0, prior_variance I) prior.

    log p(theta, y) = sum_i [y_i x_i'theta - log(1 + exp(x_i'theta))]
                      + sum_j [-theta_j^2 / (2 s0) - 0.5 log(2 pi s0)]

    The likelihood term uses log1p-of-exponential so that |x'theta| up to
    ~700 stays finite.
    """

    dataset: Dataset
    prior_variance: float

    kind: str = field(default="logistic", init=False)

    def __post_init__(self):
        if not self.prior_variance > 0:
            raise ValidationError(f"prior_variance must be positive, got {self.prior_variance}")

    @property
    def dim(self):
        return self.dataset.d

    def log_joint(self, theta):
        """Joint log-density log p(theta) L(theta); batched over rows of theta."""
        th, single = _as_theta_batch(theta, self.dim)
        logits = th @ self.dataset.features.T  # (m, n_obs)
        # y*z - log(1+e^z) = y*z - logaddexp(0, z), stable for any z
        loglik = (self.dataset.labels * logits - np.logaddexp(0.0, logits)).sum(axis=1)
        s0 = self.prior_variance
        logprior = (-0.5 * th**2 / s0 - 0.5 * np.log(2.0 * np.pi * s0)).sum(axis=1)
        out = loglik + logprior
        if not np.all(np.isfinite(out)):
            i = int(np.nonzero(~np.isfinite(out))[0][0])
            raise NumericalError(f"log joint is non-finite at sample index {i}")
        return float(out[0]) if single else out


@dataclass(frozen=True)
class ConjugateGaussianModel:
    """Scalar theta with prior N(0, prior_variance) and likelihood prod_i N(y_i; theta, obs_variance).

    The exact posterior is N(mu_star, v_star) with
        v_star = 1 / (1/s0 + n/s),   mu_star = v_star * sum(y) / s,
    exposed through :meth:`posterior`.  The marginal likelihood log p(y) is
    also closed form (y ~ N(0, s I + s0 11')), used as the lower-bound oracle.
    """

    observations: np.ndarray
    obs_variance: float
    prior_variance: float

    kind: str = field(default="conjugate-gaussian", init=False)

    def __post_init__(self):
        if not self.obs_variance > 0:
            raise ValidationError(f"obs_variance must be positive, got {self.obs_variance}")
        if not self.prior_variance > 0:
            raise ValidationError(f"prior_variance must be positive, got {self.prior_variance}")
        obs = np.atleast_1d(np.asarray(self.observations, dtype=float))
        if not np.all(np.isfinite(obs)):
            raise ValidationError("observations contain non-finite entries")
        object.__setattr__(self, "observations", obs)

    @property
    def dim(self):
        return 1

    def posterior(self):
        """(mean, variance) of the exact posterior."""
        n = self.observations.size
        v_star = 1.0 / (1.0 / self.prior_variance + n / self.obs_variance)
        mu_star = v_star * self.observations.sum() / self.obs_variance
        return mu_star, v_star

    def log_marginal_likelihood(self):
        """log p(y) under y ~ N(0, obs_variance I + prior_variance 11')."""
        y = self.observations
        n = y.size
        if n == 0:
            return 0.0
        cov = self.obs_variance * np.eye(n) + self.prior_variance * np.ones((n, n))
        sign, logdet = np.linalg.slogdet(cov)
        return float(-0.5 * (n * LOG_2PI + logdet + y @ np.linalg.solve(cov, y)))

    def log_joint(self, theta):
        th, single = _as_theta_batch(theta, 1)
        t = th[:, 0]
        s0, s = self.prior_variance, self.obs_variance
        out = -0.5 * t**2 / s0 - 0.5 * np.log(2.0 * np.pi * s0)
        for y in self.observations:
            out = out - 0.5 * (y - t) ** 2 / s - 0.5 * np.log(2.0 * np.pi * s)
        return float(out[0]) if single else out

    def log_posterior(self, theta):
        """Exact posterior log-density, for oracle checks."""
        th, single = _as_theta_batch(theta, 1)
        mu, v = self.posterior()
        out = -0.5 * (th[:, 0] - mu) ** 2 / v - 0.5 * np.log(2.0 * np.pi * v)
        return float(out[0]) if single else out
