"""Classical simulation of the quantum readout of a unit gradient vector.

A normalized gradient g (||g|| = 1, length N) is encoded alongside a uniform
reference state so that a joint measurement lands on outcome (i, +/-) with
probability |g_i +/- 1/sqrt(N)|^2 / 4.  Counting outcomes over n_T shots
gives the unbiased estimator

    ghat_i = sqrt(N) (n_i^+ - n_i^-) / n_T.

The coordinate-descent variant samples a single index i with probability
g_i^2 and reads that coordinate's value (sign included) through two
amplitude estimates, using the identity

    |g_i + 1/sqrt(N)|^2/4 - |g_i - 1/sqrt(N)|^2/4 = g_i / sqrt(N).

Amplitude estimation itself is modelled either exactly or with binomial
shot noise; nothing here simulates circuits.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

_UNIT_TOL = 1e-10


@dataclass(frozen=True)
class AEMode:
    """Amplitude-estimation fidelity: 'exact' passthrough or 'shots' binomial noise."""

    kind: str
    shots: int = 0

    def __post_init__(self):
        if self.kind not in ("exact", "shots"):
            raise ValidationError(f"AE mode must be 'exact' or 'shots', got {self.kind!r}")
        if self.kind == "shots" and self.shots < 1:
            raise ValidationError("shots mode needs shots >= 1")


@dataclass(frozen=True)
class MeasurementCounts:
    """Outcome counts of the sign-augmented readout; plus/minus per coordinate."""

    n_plus: np.ndarray
    n_minus: np.ndarray
    n_total: int

    def __post_init__(self):
        if np.any(self.n_plus < 0) or np.any(self.n_minus < 0):
            raise ValidationError("negative measurement counts")
        if int(self.n_plus.sum() + self.n_minus.sum()) != self.n_total:
            raise ValidationError("counts do not sum to the total number of measurements")


def _as_unit(gradient):
    g = np.asarray(gradient, dtype=float)
    if g.ndim != 1 or g.size < 1:
        raise ValidationError("gradient must be a 1-d vector")
    norm = np.linalg.norm(g)
    if abs(norm - 1.0) > _UNIT_TOL:
        raise ValidationError(f"gradient must have unit norm, got ||g|| = {norm!r}")
    return g


@dataclass(frozen=True)
class MeasurementScheme:
    """The 2N-outcome distribution, ordered (i,+) for i=1..N then (i,-)."""

    unit_gradient: np.ndarray
    probabilities: np.ndarray

    @property
    def n_outcomes(self):
        return 2 * self.unit_gradient.size

    @classmethod
    def for_gradient(cls, unit_gradient):
        g = _as_unit(unit_gradient)
        return cls(unit_gradient=g, probabilities=readout_probabilities(g))


def readout_probabilities(unit_gradient):
    """p(i, +/-) = |g_i +/- 1/sqrt(N)|^2 / 4, concatenated [plus block, minus block]."""
    g = _as_unit(unit_gradient)
    shift = 1.0 / np.sqrt(g.size)
    return np.concatenate([(g + shift) ** 2, (g - shift) ** 2]) / 4.0


def simulate_full_readout(unit_gradient, n_total, rng):
    """One multinomial draw of n_total outcomes; returns counts and the estimate."""
    g = _as_unit(unit_gradient)
    if not isinstance(n_total, (int, np.integer)) or n_total < 1:
        raise ValidationError(f"number of measurements must be >= 1, got {n_total!r}")
    probs = readout_probabilities(g)
    counts = rng.multinomial(int(n_total), probs / probs.sum())
    n = g.size
    n_plus, n_minus = counts[:n], counts[n:]
    g_hat = np.sqrt(n) * (n_plus - n_minus) / float(n_total)
    return MeasurementCounts(n_plus=n_plus, n_minus=n_minus, n_total=int(n_total)), g_hat


def ae_estimate(amplitude, mode, rng):
    """Estimate an amplitude in [0, 1]: exact passthrough, or sqrt(k/n) with
    k ~ Binomial(n, amplitude^2) in shots mode."""
    if not 0.0 <= amplitude <= 1.0:
        raise ValidationError(f"amplitude must lie in [0, 1], got {amplitude!r}")
    if mode.kind == "exact":
        return float(amplitude)
    k = rng.binomial(mode.shots, amplitude * amplitude)
    return float(np.sqrt(k / mode.shots))


def simulate_gauss_southwell(unit_gradient, mode, rng):
    """Sample index i with probability g_i^2, then read g_i via two amplitude estimates.

    Returns (index, value).  In exact AE mode the value equals g_i to
    rounding; the sign survives because the two squared amplitudes are
    differenced.
    """
    g = _as_unit(unit_gradient)
    weights = g * g
    index = int(rng.choice(g.size, p=weights / weights.sum()))
    shift = 1.0 / np.sqrt(g.size)
    a_plus = 0.5 * abs(g[index] + shift)
    a_minus = 0.5 * abs(g[index] - shift)
    est_plus = ae_estimate(a_plus, mode, rng)
    est_minus = ae_estimate(a_minus, mode, rng)
    value = np.sqrt(g.size) * (est_plus**2 - est_minus**2)
    return index, float(value)


def gauss_southwell_vector(unit_gradient, mode, rng):
    """Full-length 1-sparse gradient: zero everywhere except the sampled coordinate."""
    g = _as_unit(unit_gradient)
    index, value = simulate_gauss_southwell(g, mode, rng)
    out = np.zeros(g.size)
    out[index] = value
    return out
