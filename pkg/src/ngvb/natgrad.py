"""Regression-based natural gradient.

The natural gradient is estimated as the slope vector of a least-squares
regression of h(theta_i) = log p(theta_i, y) - log q(theta_i) on the score
T(theta_i), with an intercept because the score has zero mean.  The
minimum-norm solution g of the stacked system is obtained through a
Cholesky factorization of the small Gram matrix:

    M <  N+1:  g = T'(TT')^{-1} h        (Gram is M x M)
    M >= N+1:  g = (T'T)^{-1} T' h       (Gram is (N+1) x (N+1))

which costs O(N M^2) for the wide case instead of the O(N^3) needed to
assemble and invert the Fisher matrix.  Component 0 of g estimates the
lower bound; the remaining N components are the natural gradient.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import NumericalError, ValidationError

# Defect-correction passes with residuals recomputed through the design
# matrix.  Plain normal equations lose ~kappa^2 * eps relative accuracy;
# two corrected passes (same Cholesky factor, O(NM) each) restore roughly
# kappa * eps, which keeps the solver within 1e-8 of the pseudoinverse up
# to kappa ~ 1e6.
_CORRECTION_STEPS = 2

_JITTER_FLOOR = 1e-12
_JITTER_CEIL = 1e-6


@dataclass(frozen=True)
class RegressionSystem:
    """Design matrix with rows (1, T(theta_i)') and response h(theta_i)."""

    design: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        design = np.asarray(self.design, dtype=float)
        response = np.asarray(self.response, dtype=float)
        if design.ndim != 2 or response.shape != (design.shape[0],):
            raise ValidationError("design must be (M, N+1) with a length-M response")
        if design.shape[0] < 1:
            raise ValidationError("need at least one sample row")
        if not np.all(design[:, 0] == 1.0):
            raise ValidationError("column 0 of the design must be all ones")
        if not np.all(np.isfinite(design)) or not np.all(np.isfinite(response)):
            raise ValidationError("regression system contains non-finite entries")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "response", response)

    @property
    def n_samples(self):
        return self.design.shape[0]

    @property
    def n_params(self):
        return self.design.shape[1] - 1


@dataclass(frozen=True)
class SolveDiagnostics:
    condition_number: float
    gram_jitter_used: float
    residual_norm: float
    underdetermined: bool

    def __post_init__(self):
        if not (np.isnan(self.condition_number) or self.condition_number >= 1.0):
            raise ValidationError(f"condition number must be >= 1, got {self.condition_number}")


@dataclass(frozen=True)
class NatGradEstimate:
    """Natural-gradient vector plus the regression intercept (lower-bound estimate)."""

    beta: np.ndarray
    beta0: float
    norm: float
    estimator: str
    diagnostics: Optional[SolveDiagnostics] = None


def build_regression(samples, family, model):
    """Assemble the design/response pair from draws of the current q."""
    thetas = family.thetas(samples)
    scores = family.score(samples)
    if not np.all(np.isfinite(scores)):
        i = int(np.nonzero(~np.isfinite(scores).all(axis=1))[0][0])
        raise NumericalError(f"score is non-finite at sample index {i}")
    log_q = np.atleast_1d(family.sample_log_density(samples))
    log_joint = np.atleast_1d(model.log_joint(thetas))
    h = log_joint - log_q
    if not np.all(np.isfinite(h)):
        i = int(np.nonzero(~np.isfinite(h))[0][0])
        raise NumericalError(f"regression response is non-finite at sample index {i}")
    design = np.column_stack([np.ones(len(h)), scores])
    return RegressionSystem(design=design, response=h)


def _gram_condition(gram):
    evals = np.linalg.eigvalsh(gram)
    lam_min, lam_max = float(evals[0]), float(evals[-1])
    if lam_min <= 0.0:
        return np.inf
    return float(np.sqrt(lam_max / lam_min))


def solve_min_norm(system, jitter=0.0):
    """Minimum-norm least-squares solve of (design) g = response for a
    RegressionSystem; see min_norm_solve for the underlying kernel."""
    return min_norm_solve(system.design, system.response, jitter)


def min_norm_solve(design, response, jitter=0.0):
    """Minimum-norm least-squares kernel for an arbitrary design matrix.

    Returns (g, diagnostics).  ``jitter`` is the starting Tikhonov term on
    the Gram diagonal; on Cholesky failure it escalates from
    1e-12 * mean-diagonal by factors of 10 up to 1e-6 * mean-diagonal,
    after which the solve fails with the condition-number estimate attached.
    """
    if jitter < 0:
        raise ValidationError(f"jitter must be non-negative, got {jitter}")
    design = np.asarray(design, dtype=float)
    h = np.asarray(response, dtype=float)
    if design.ndim != 2 or h.shape != (design.shape[0],):
        raise ValidationError("design must be 2-d with a matching response vector")
    if not (np.all(np.isfinite(design)) and np.all(np.isfinite(h))):
        raise ValidationError("system contains non-finite entries")
    m, n1 = design.shape
    under = m < n1
    gram = design @ design.T if under else design.T @ design
    scale = float(np.trace(gram)) / gram.shape[0]
    kappa = _gram_condition(gram)

    jit = float(jitter)
    while True:
        try:
            target = gram if jit == 0.0 else gram + jit * np.eye(gram.shape[0])
            factor = cho_factor(target, lower=True)
            break
        except LinAlgError:
            jit = _JITTER_FLOOR * scale if jit < _JITTER_FLOOR * scale else jit * 10.0
            if jit > _JITTER_CEIL * scale * (1.0 + 1e-12):
                raise NumericalError(
                    f"Gram matrix not positive definite after jitter escalation "
                    f"(condition estimate {kappa:.3e})",
                    condition_number=kappa,
                ) from None

    if under:
        g = design.T @ cho_solve(factor, h)
        if jit == 0.0:
            for _ in range(_CORRECTION_STEPS):
                g = g + design.T @ cho_solve(factor, h - design @ g)
    else:
        g = cho_solve(factor, design.T @ h)
        if jit == 0.0:
            for _ in range(_CORRECTION_STEPS):
                g = g + cho_solve(factor, design.T @ (h - design @ g))

    if not np.all(np.isfinite(g)):
        raise NumericalError(
            f"solution contains non-finite entries (condition estimate {kappa:.3e})",
            condition_number=kappa,
        )
    diagnostics = SolveDiagnostics(
        condition_number=kappa,
        gram_jitter_used=jit,
        residual_norm=float(np.linalg.norm(design @ g - h)),
        underdetermined=under,
    )
    return g, diagnostics


def estimate_natural_gradient(family, model, m, rng, jitter=0.0):
    """Draw m samples, regress, and split off the intercept."""
    samples = family.sample(rng, m)
    system = build_regression(samples, family, model)
    g, diagnostics = solve_min_norm(system, jitter)
    beta = g[1:]
    return NatGradEstimate(
        beta=beta,
        beta0=float(g[0]),
        norm=float(np.linalg.norm(beta)),
        estimator="classical",
        diagnostics=diagnostics,
    )
