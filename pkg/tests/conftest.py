import numpy as np
import pytest

from ngvb.dataio import format_libsvm, parse_libsvm
from ngvb.model import ConjugateGaussianModel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_model():
    """Conjugate Gaussian toy with a known posterior N(4/3, 1/3)."""
    return ConjugateGaussianModel(np.array([2.0, 2.0]), 1.0, 1.0)


def synthetic_logistic_text(n_obs=62, n_features=20, feature_scale=1.0,
                            coef_scale=0.4, seed=42):
    """A LIBSVM-format logistic dataset generated from a known model."""
    gen = np.random.default_rng(seed)
    features = feature_scale * gen.standard_normal((n_obs, n_features))
    coef = gen.normal(0.0, coef_scale, size=n_features + 1)
    logits = coef[0] + features @ coef[1:]
    labels = (gen.random(n_obs) < 1.0 / (1.0 + np.exp(-logits))).astype(float)
    return format_libsvm(features, labels)


@pytest.fixture
def small_logistic_dataset():
    return parse_libsvm(synthetic_logistic_text(n_obs=40, n_features=5), covariate_limit=5)
