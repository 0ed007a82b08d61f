"""Momentum natural-gradient descent with interchangeable gradient estimators.

One iteration: draw M_t samples, estimate the natural gradient with the
configured estimator (classical regression solve, simulated full readout,
or simulated Gauss-Southwell coordinate readout), clip it, fold it into the
momentum Y_{t+1} = omega Y_t + (1-omega) ghat_t, and retract
lambda_{t+1} = lambda_t + alpha_t Y_{t+1}.

The readout estimators consume the classically solved gradient, normalize
it, and re-estimate it from simulated measurements; the readout therefore
carries direction only, and its output is scaled by the clip threshold so
classical and readout paths move on the same scale.

Learning rates follow alpha_t = alpha0 * tau / (tau + t), which is
nonincreasing with divergent sum and convergent sum of squares.  The loop
stops at max_iters or when the window-smoothed lower bound fails to improve
for `patience` consecutive checks (one check every CHECK_INTERVAL
iterations).
"""

import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .errors import NumericalError, ValidationError
from .natgrad import NatGradEstimate, estimate_natural_gradient
from .qsim import AEMode, gauss_southwell_vector, simulate_full_readout

ESTIMATORS = ("classical", "full-readout", "gauss-southwell")
M_GROWTH_MODES = ("fixed", "linear")

# Iterations between stopping-rule evaluations.
CHECK_INTERVAL = 10


@dataclass(frozen=True)
class OptimizerConfig:
    omega: float = 0.6
    alpha0: float = 0.1
    tau: float = 100.0
    clip_threshold: float = 1.0
    m0: int = 1000
    m_growth: str = "fixed"
    m_growth_rate: float = 0.0
    n_measurements: int = 500
    estimator: str = "classical"
    ae_mode: AEMode = field(default_factory=lambda: AEMode("exact"))
    max_iters: int = 500
    patience: int = 10
    smoothing_window: int = 50
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.omega < 1.0:
            raise ValidationError(f"omega must lie in (0, 1), got {self.omega}")
        if not 0.0 < self.alpha0 <= 1.0:
            raise ValidationError(f"alpha0 must lie in (0, 1], got {self.alpha0}")
        if not self.tau > 0:
            raise ValidationError(f"tau must be positive, got {self.tau}")
        if not self.clip_threshold > 0:
            raise ValidationError(f"clip threshold must be positive, got {self.clip_threshold}")
        if self.m0 < 1:
            raise ValidationError(f"initial sample count must be >= 1, got {self.m0}")
        if self.m_growth not in M_GROWTH_MODES:
            raise ValidationError(f"m_growth must be one of {M_GROWTH_MODES}")
        if self.m_growth == "linear" and self.m_growth_rate < 0:
            raise ValidationError("linear sample growth needs a non-negative rate")
        if self.n_measurements < 1:
            raise ValidationError("n_measurements must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ValidationError(f"estimator must be one of {ESTIMATORS}")
        if self.max_iters < 0:
            raise ValidationError("max_iters must be >= 0")
        if self.patience < 1:
            raise ValidationError("patience must be >= 1")
        if self.smoothing_window < 1:
            raise ValidationError("smoothing window must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    t: int
    lower_bound: float
    grad_norm: float
    condition_number: float  # nan unless the classical estimator produced it
    m_t: int
    alpha_t: float
    wall_time: float


@dataclass
class OptimizerState:
    t: int
    params: object
    momentum: np.ndarray
    trace: List[TraceRecord]


@dataclass
class ResumeState:
    """Everything needed to continue a run as if it had never stopped."""

    t: int
    family: object
    momentum: np.ndarray
    rng_state: dict
    lb_tail: List[float]
    best_smoothed: float
    bad_checks: int


@dataclass
class RunResult:
    params: object
    trace: List[TraceRecord]
    final_state: ResumeState

    def __iter__(self):
        # allows `params, trace = run(...)`
        return iter((self.params, self.trace))


def learning_rate(config, t):
    """alpha_t = alpha0 * tau / (tau + t)."""
    if t < 0:
        raise ValidationError("iteration index must be >= 0")
    return config.alpha0 * config.tau / (config.tau + t)


def sample_size(config, t):
    """M_t: fixed at m0, or m0 + floor(rate * t) in linear mode."""
    if t < 0:
        raise ValidationError("iteration index must be >= 0")
    if config.m_growth == "fixed":
        return config.m0
    return config.m0 + int(np.floor(config.m_growth_rate * t))


def clip(gradient, threshold):
    """Rescale to norm `threshold` when longer; shorter vectors pass unchanged."""
    if not threshold > 0:
        raise ValidationError(f"clip threshold must be positive, got {threshold}")
    gradient = np.asarray(gradient, dtype=float)
    norm = np.linalg.norm(gradient)
    if norm > threshold:
        return gradient * (threshold / norm)
    return gradient


def smooth_lower_bound(trace, window):
    """Trailing moving average of the lower-bound column; partial windows
    average over what is available, so the output has the trace's length."""
    if window < 1:
        raise ValidationError("window must be >= 1")
    values = [r.lower_bound for r in trace]
    out = np.empty(len(values))
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out[i] = np.mean(values[lo : i + 1])
    return out


def step(state, estimate, config, wall_time=0.0):
    """One momentum update; returns the advanced state with a trace row appended."""
    beta = np.asarray(estimate.beta, dtype=float)
    if beta.shape != (state.params.n_params,):
        raise ValidationError(
            f"estimate length {beta.size} != parameter count {state.params.n_params}"
        )
    alpha = learning_rate(config, state.t)
    momentum = config.omega * state.momentum + (1.0 - config.omega) * clip(
        beta, config.clip_threshold
    )
    if not np.all(np.isfinite(momentum)):
        err = NumericalError(f"non-finite momentum update at iteration {state.t}")
        err.trace = state.trace
        raise err
    params = state.params.retract(alpha * momentum)
    diag = estimate.diagnostics
    record = TraceRecord(
        t=state.t,
        lower_bound=estimate.beta0,
        grad_norm=estimate.norm,
        condition_number=diag.condition_number if diag is not None else float("nan"),
        m_t=sample_size(config, state.t),
        alpha_t=alpha,
        wall_time=wall_time,
    )
    return OptimizerState(
        t=state.t + 1,
        params=params,
        momentum=momentum,
        trace=state.trace + [record],
    )


def _readout_estimate(base, config, rng):
    """Replace the classical gradient by its simulated measurement readout."""
    if base.norm == 0.0:
        return replace(base, estimator=config.estimator, diagnostics=None)
    unit = base.beta / base.norm
    if config.estimator == "full-readout":
        _, g_hat = simulate_full_readout(unit, config.n_measurements, rng)
    else:
        g_hat = gauss_southwell_vector(unit, config.ae_mode, rng)
    beta = config.clip_threshold * g_hat
    return NatGradEstimate(
        beta=beta,
        beta0=base.beta0,
        norm=float(np.linalg.norm(beta)),
        estimator=config.estimator,
        diagnostics=None,
    )


def make_estimator(config, model) -> Callable:
    """Returns estimator(params, m, rng) -> NatGradEstimate for the configured scheme."""

    def classical(params, m, rng):
        return estimate_natural_gradient(params, model, m, rng, config.jitter)

    if config.estimator == "classical":
        return classical

    def readout(params, m, rng):
        return _readout_estimate(classical(params, m, rng), config, rng)

    return readout


def run(config, model, family, *, resume: Optional[ResumeState] = None, callback=None):
    """Run the descent loop; returns a RunResult (unpacks as (params, trace)).

    `resume` continues a previous run exactly: parameters, momentum, RNG
    state, and the stopping rule's smoothing tail are all restored, so the
    combined trace is identical to an uninterrupted run.
    """
    estimator = make_estimator(config, model)
    if resume is not None:
        t0 = resume.t
        state = OptimizerState(
            t=t0, params=resume.family, momentum=np.array(resume.momentum, dtype=float), trace=[]
        )
        bit_gen = np.random.PCG64()
        bit_gen.state = resume.rng_state
        rng = np.random.Generator(bit_gen)
        lb_tail = list(resume.lb_tail)
        best_smoothed = resume.best_smoothed
        bad_checks = resume.bad_checks
    else:
        t0 = 0
        state = OptimizerState(
            t=0, params=family, momentum=np.zeros(family.n_params), trace=[]
        )
        rng = np.random.default_rng(config.seed)
        lb_tail = []
        best_smoothed = -np.inf
        bad_checks = 0

    start = time.perf_counter()
    for t in range(t0, config.max_iters):
        m_t = sample_size(config, t)
        try:
            estimate = estimator(state.params, m_t, rng)
        except NumericalError as err:
            err.trace = state.trace
            raise
        state = step(state, estimate, config, wall_time=time.perf_counter() - start)
        lb_tail.append(estimate.beta0)
        del lb_tail[: -config.smoothing_window]
        if callback is not None:
            callback(state)
        if (t + 1) % CHECK_INTERVAL == 0:
            smoothed = float(np.mean(lb_tail))
            if smoothed > best_smoothed:
                best_smoothed = smoothed
                bad_checks = 0
            else:
                bad_checks += 1
            if bad_checks >= config.patience:
                break

    final = ResumeState(
        t=state.t,
        family=state.params,
        momentum=state.momentum,
        rng_state=rng.bit_generator.state,
        lb_tail=lb_tail,
        best_smoothed=best_smoothed,
        bad_checks=bad_checks,
    )
    return RunResult(params=state.params, trace=state.trace, final_state=final)
