"""Natural-gradient variational Bayes via score regression, with simulated
quantum measurement readout of the gradient."""

from .advisor import AdvisorInput, complexity_estimate, select_algorithm
from .errors import (
    CheckpointError,
    FlowDomainError,
    NumericalError,
    ValidationError,
)
from .model import ConjugateGaussianModel, Dataset, LogisticModel
from .natgrad import (
    NatGradEstimate,
    RegressionSystem,
    SolveDiagnostics,
    build_regression,
    estimate_natural_gradient,
    min_norm_solve,
    solve_min_norm,
)
from .optimizer import (
    OptimizerConfig,
    OptimizerState,
    TraceRecord,
    clip,
    learning_rate,
    run,
    sample_size,
    smooth_lower_bound,
    step,
)
from .qsim import (
    AEMode,
    MeasurementCounts,
    MeasurementScheme,
    ae_estimate,
    readout_probabilities,
    simulate_full_readout,
    simulate_gauss_southwell,
)
from .varfam import FlowBatch, GaussianMeanField, StiefelFlow, expected_score_check

__all__ = [
    "AdvisorInput",
    "AEMode",
    "CheckpointError",
    "ConjugateGaussianModel",
    "Dataset",
    "FlowBatch",
    "FlowDomainError",
    "GaussianMeanField",
    "LogisticModel",
    "MeasurementCounts",
    "MeasurementScheme",
    "NatGradEstimate",
    "NumericalError",
    "OptimizerConfig",
    "OptimizerState",
    "RegressionSystem",
    "SolveDiagnostics",
    "StiefelFlow",
    "TraceRecord",
    "ValidationError",
    "ae_estimate",
    "build_regression",
    "clip",
    "complexity_estimate",
    "estimate_natural_gradient",
    "expected_score_check",
    "learning_rate",
    "min_norm_solve",
    "readout_probabilities",
    "run",
    "sample_size",
    "select_algorithm",
    "simulate_full_readout",
    "simulate_gauss_southwell",
    "smooth_lower_bound",
    "solve_min_norm",
    "step",
]
