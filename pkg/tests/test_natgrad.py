import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ngvb.errors import ValidationError
from ngvb.model import ConjugateGaussianModel
from ngvb.natgrad import (
    RegressionSystem,
    build_regression,
    estimate_natural_gradient,
    min_norm_solve,
    solve_min_norm,
)
from ngvb.varfam import GaussianMeanField


def spectrum_system(gen, n_rows, n_cols, kappa):
    """Random system whose design has a log-spaced spectrum with condition kappa."""
    r = min(n_rows, n_cols)
    singular_values = np.logspace(0.0, -np.log10(kappa), r)
    u = np.linalg.qr(gen.standard_normal((n_rows, n_rows)))[0]
    v = np.linalg.qr(gen.standard_normal((n_cols, n_cols)))[0]
    design = u[:, :r] @ np.diag(singular_values) @ v[:, :r].T
    return design, gen.standard_normal(n_rows)


def min_norm_via_svd(design, response):
    """Independent oracle: full-SVD pseudoinverse."""
    return np.linalg.pinv(design) @ response


class TestSolveMinNorm:
    def test_orthonormal_rows_shortcut(self, rng):
        # for TT' = I the minimum-norm solution is exactly T'h
        design = np.linalg.qr(rng.standard_normal((9, 9)))[0][:3]
        response = np.array([1.0, 2.0, 3.0])
        g, diag = min_norm_solve(design, response)
        np.testing.assert_allclose(g, design.T @ response, atol=1e-12)
        assert diag.underdetermined
        assert diag.condition_number == pytest.approx(1.0, abs=1e-8)

    def test_one_by_two_hand_example(self):
        # T'(TT')^{-1} h = (1,2) * 5/5
        g, diag = min_norm_solve(np.array([[1.0, 2.0]]), np.array([5.0]))
        np.testing.assert_allclose(g, [1.0, 2.0], rtol=1e-12)
        assert diag.condition_number == pytest.approx(1.0)
        assert diag.gram_jitter_used == 0.0

    @pytest.mark.parametrize("shape", [(6, 20), (20, 6)])
    def test_matches_svd_oracle_random(self, shape, rng):
        for _ in range(20):
            design = rng.standard_normal(shape)
            design[:, 0] = 1.0
            response = rng.standard_normal(shape[0])
            system = RegressionSystem(design=design, response=response)
            g, _ = solve_min_norm(system)
            oracle = min_norm_via_svd(design, response)
            assert np.linalg.norm(g - oracle) <= 1e-8 * np.linalg.norm(oracle)

    @pytest.mark.parametrize("kappa", [1e2, 1e4, 1e6])
    def test_matches_svd_oracle_conditioned(self, kappa, rng):
        for _ in range(10):
            n_rows = int(rng.integers(3, 41))
            n_cols = int(rng.integers(3, 41))
            design, response = spectrum_system(rng, n_rows, n_cols, kappa)
            g, _ = min_norm_solve(design, response)
            oracle = min_norm_via_svd(design, response)
            assert np.linalg.norm(g - oracle) <= 1e-8 * np.linalg.norm(oracle)

    def test_minimum_norm_among_exact_solutions(self, rng):
        design = rng.standard_normal((5, 12))
        design[:, 0] = 1.0
        response = rng.standard_normal(5)
        g, _ = solve_min_norm(RegressionSystem(design=design, response=response))
        _, _, vt = np.linalg.svd(design)
        null_basis = vt[5:]
        for _ in range(100):
            alt = g + null_basis.T @ rng.standard_normal(null_basis.shape[0])
            np.testing.assert_allclose(design @ alt, response, atol=1e-8)
            assert np.linalg.norm(g) <= np.linalg.norm(alt) + 1e-12

    def test_singular_system_falls_back_to_jitter(self):
        # duplicated rows make the Gram exactly singular
        design = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
        response = np.array([1.0, 1.0])
        g, diag = solve_min_norm(RegressionSystem(design=design, response=response))
        assert diag.gram_jitter_used > 0
        np.testing.assert_allclose(design @ g, response, rtol=1e-5)

    def test_negative_jitter_rejected(self):
        system = RegressionSystem(design=np.array([[1.0, 2.0]]), response=np.array([1.0]))
        with pytest.raises(ValidationError):
            solve_min_norm(system, jitter=-1.0)

    def test_diagnostics_residual_overdetermined(self, rng):
        design = rng.standard_normal((30, 4))
        design[:, 0] = 1.0
        response = rng.standard_normal(30)
        g, diag = solve_min_norm(RegressionSystem(design=design, response=response))
        assert not diag.underdetermined
        assert diag.residual_norm == pytest.approx(
            np.linalg.norm(design @ g - response), rel=1e-9
        )
        assert diag.condition_number >= 1.0


class TestRegressionSystem:
    def test_ones_column_required(self):
        with pytest.raises(ValidationError, match="ones"):
            RegressionSystem(design=np.array([[2.0, 1.0]]), response=np.array([0.0]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValidationError):
            RegressionSystem(design=np.array([[1.0, np.inf]]), response=np.array([0.0]))

    def test_build_regression_single_sample_row(self):
        # Gaussian d=1 at (0,0), theta=0, model with no data:
        # score=(0,-1), h = log_joint - log_q = 0
        model = ConjugateGaussianModel(np.array([]), 1.0, 1.0)
        fam = GaussianMeanField.standard(1)
        system = build_regression(np.array([[0.0]]), fam, model)
        np.testing.assert_allclose(system.design, [[1.0, 0.0, -1.0]], atol=1e-14)
        assert system.response[0] == pytest.approx(0.0, abs=1e-14)

    def test_build_regression_column_zero_is_ones(self, rng, toy_model):
        fam = GaussianMeanField.standard(1)
        samples = fam.sample(rng, 50)
        system = build_regression(samples, fam, toy_model)
        assert (system.design[:, 0] == 1.0).all()


class TestEstimateNaturalGradient:
    def analytic_natural_gradient(self, model, mu, omega):
        mu_star, v_star = model.posterior()
        sigma2 = np.exp(2 * omega)
        # I_F = diag(1/sigma^2, 2); gradient of the bound from the Gaussian KL
        return np.array([sigma2 * (mu_star - mu) / v_star, (1.0 - sigma2 / v_star) / 2.0])

    def test_matches_analytic_oracle(self):
        model = ConjugateGaussianModel(np.array([0.0]), 1.0, 1.0)
        fam = GaussianMeanField.standard(1)
        target = self.analytic_natural_gradient(model, 0.0, 0.0)
        betas = [
            estimate_natural_gradient(fam, model, 4000, np.random.default_rng(seed)).beta
            for seed in range(20)
        ]
        assert np.abs(np.mean(betas, axis=0) - target).max() <= 0.1

    def test_gradient_vanishes_at_optimum(self):
        model = ConjugateGaussianModel(np.array([0.0]), 1.0, 1.0)
        mu_star, v_star = model.posterior()
        lam_star = GaussianMeanField(np.array([mu_star]), np.array([0.5 * np.log(v_star)]))
        norms = [
            estimate_natural_gradient(lam_star, model, 4000, np.random.default_rng(s)).norm
            for s in range(20)
        ]
        assert np.mean(norms) <= 0.05

    def test_beta0_estimates_lower_bound(self, toy_model):
        # at lambda*, h(theta) is constant = log p(y), so beta0 recovers it exactly
        mu_star, v_star = toy_model.posterior()
        lam_star = GaussianMeanField(np.array([mu_star]), np.array([0.5 * np.log(v_star)]))
        est = estimate_natural_gradient(lam_star, toy_model, 500, np.random.default_rng(1))
        assert est.beta0 == pytest.approx(toy_model.log_marginal_likelihood(), abs=1e-8)

    def test_beta0_within_monte_carlo_error_of_mean_h(self, toy_model, rng):
        fam = GaussianMeanField(np.array([0.3]), np.array([0.1]))
        samples = fam.sample(rng, 2000)
        system = build_regression(samples, fam, toy_model)
        g, _ = solve_min_norm(system)
        h = system.response
        assert abs(g[0] - h.mean()) <= 4.0 * h.std() / np.sqrt(h.size)

    def test_norm_field_consistent(self, toy_model, rng):
        fam = GaussianMeanField.standard(1)
        est = estimate_natural_gradient(fam, toy_model, 200, rng)
        assert est.norm == pytest.approx(np.linalg.norm(est.beta), abs=1e-12)
        assert est.estimator == "classical"
        assert est.diagnostics is not None


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_rows=st.integers(2, 12), n_cols=st.integers(2, 12))
def test_solve_always_matches_oracle(seed, n_rows, n_cols):
    gen = np.random.default_rng(seed)
    design = gen.standard_normal((n_rows, n_cols))
    design[:, 0] = 1.0
    response = gen.standard_normal(n_rows)
    g, _ = solve_min_norm(RegressionSystem(design=design, response=response))
    oracle = min_norm_via_svd(design, response)
    assert np.linalg.norm(g - oracle) <= 1e-7 * max(1.0, np.linalg.norm(oracle))
