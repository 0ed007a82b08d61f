"""Complexity-regime advisor for the pseudoinverse solve.

Which solver is cheapest depends on how the sample count M and the design
condition number kappa scale with the parameter count N.  Writing
M ~ N^alpha and kappa ~ N^delta, each (alpha, delta) regime has a known
best algorithm among:

    CL       classical SVD / Cholesky pseudoinverse
    QI       quantum-inspired sampling solver
    HHL/WZP  quantum linear-systems solvers, with full readout (-FR)
             or Gauss-Southwell readout (-GS)

`select_algorithm` returns the winning set for a concrete (N, M, kappa);
`complexity_estimate` evaluates the corresponding operation-count formula
(polylog factors dropped) for inspection and ordering.  All quantum rows
are floored at N*M, the cost of materializing the design matrix.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

ALGORITHMS = ("CL", "QI", "HHL", "HHL-FR", "HHL-GS", "WZP", "WZP-FR", "WZP-GS")

# Scaling exponents at or below this threshold count as polylogarithmic.
POLYLOG_THRESHOLD = 0.05

_BUCKET_LABELS = ("0", "(0,1/4]", "(1/4,1/2]", "(1/2,1)")

# Cell sets indexed by (delta_bucket, alpha_bucket).
SELECTION_TABLE = {
    (0, 0): frozenset({"QI"}),
    (0, 1): frozenset({"HHL", "WZP-GS"}),
    (0, 2): frozenset({"HHL", "WZP"}),
    (0, 3): frozenset({"HHL", "WZP"}),
    (1, 0): frozenset({"CL", "HHL-GS"}),
    (1, 1): frozenset({"HHL-GS"}),
    (1, 2): frozenset({"HHL-GS", "WZP-GS"}),
    (1, 3): frozenset({"HHL-GS", "WZP"}),
    (2, 0): frozenset({"CL"}),
    (2, 1): frozenset({"CL", "HHL-GS"}),
    (2, 2): frozenset({"CL", "HHL-GS", "WZP-GS"}),
    (2, 3): frozenset({"WZP-GS"}),
    (3, 0): frozenset({"CL"}),
    (3, 1): frozenset({"CL"}),
    (3, 2): frozenset({"CL"}),
    (3, 3): frozenset({"CL", "WZP-GS"}),
}


@dataclass(frozen=True)
class AdvisorInput:
    n_params: int
    n_samples: int
    kappa: float

    def __post_init__(self):
        if self.n_params < 2:
            raise ValidationError(f"N must be >= 2, got {self.n_params}")
        if self.n_samples < 1:
            raise ValidationError(f"M must be >= 1, got {self.n_samples}")
        if not self.kappa >= 1.0:
            raise ValidationError(f"kappa must be >= 1, got {self.kappa}")

    @property
    def alpha(self):
        """Sample-count scaling exponent ln M / ln N."""
        return math.log(self.n_samples) / math.log(self.n_params) if self.n_samples > 1 else 0.0

    @property
    def delta(self):
        """Conditioning scaling exponent ln kappa / ln N."""
        return math.log(self.kappa) / math.log(self.n_params) if self.kappa > 1.0 else 0.0


def scaling_bucket(exponent):
    """Map an exponent to {0, (0,1/4], (1/4,1/2], (1/2,1)}; >= 1 is out of table."""
    if exponent >= 1.0:
        raise ValidationError(f"scaling exponent {exponent:.4f} >= 1 is outside the table")
    if exponent <= POLYLOG_THRESHOLD:
        return 0
    if exponent <= 0.25:
        return 1
    if exponent <= 0.5:
        return 2
    return 3


def select_algorithm(advisor_input):
    """The most efficient solver set for the input's (alpha, delta) regime."""
    a = scaling_bucket(advisor_input.alpha)
    d = scaling_bucket(advisor_input.delta)
    return set(SELECTION_TABLE[(d, a)])


@dataclass(frozen=True)
class CostEstimate:
    algorithm: str
    formula: str
    operations: float


def complexity_estimate(advisor_input, algorithm, epsilon, frobenius_norm=1.0):
    """Evaluate the operation-count formula for one algorithm, polylogs dropped."""
    if not 0.0 < epsilon < 1.0:
        raise ValidationError(f"epsilon must lie in (0, 1), got {epsilon}")
    n = float(advisor_input.n_params)
    m = float(advisor_input.n_samples)
    k = float(advisor_input.kappa)
    floor = n * m  # materializing the design matrix
    if algorithm == "CL":
        return CostEstimate("CL", "N M^2", n * m * m)
    if algorithm == "HHL-FR":
        return CostEstimate(
            "HHL-FR", "max(N M kappa^2 / eps^3, N M)", max(n * m * k**2 / epsilon**3, floor)
        )
    if algorithm == "HHL-GS":
        return CostEstimate(
            "HHL-GS",
            "max(sqrt(N) M kappa^2 / eps^2, N M)",
            max(np.sqrt(n) * m * k**2 / epsilon**2, floor),
        )
    if algorithm == "WZP-FR":
        return CostEstimate(
            "WZP-FR", "max(N^(3/2) kappa^2 / eps^3, N M)", max(n**1.5 * k**2 / epsilon**3, floor)
        )
    if algorithm == "WZP-GS":
        return CostEstimate(
            "WZP-GS", "max(N kappa^2 / eps^2, N M)", max(n * k**2 / epsilon**2, floor)
        )
    if algorithm == "QI":
        return CostEstimate(
            "QI",
            "M^6 kappa^16 ||T||_F^6 / eps^6",
            m**6 * k**16 * frobenius_norm**6 / epsilon**6,
        )
    raise ValidationError(f"unknown algorithm label {algorithm!r}")


def expand_readout_variants(labels):
    """Bare HHL/WZP labels mean 'either readout'; expand them for costing."""
    out = []
    for label in sorted(labels):
        if label in ("HHL", "WZP"):
            out.extend([f"{label}-FR", f"{label}-GS"])
        else:
            out.append(label)
    return out


def describe_regime(advisor_input):
    a = scaling_bucket(advisor_input.alpha)
    d = scaling_bucket(advisor_input.delta)
    return (
        f"alpha = {advisor_input.alpha:.4f} (bucket {_BUCKET_LABELS[a]}), "
        f"delta = {advisor_input.delta:.4f} (bucket {_BUCKET_LABELS[d]})"
    )
