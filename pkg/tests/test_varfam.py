import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ngvb.errors import FlowDomainError, ValidationError
from ngvb.varfam import (
    FlowBatch,
    GaussianMeanField,
    StiefelFlow,
    expected_score_check,
)


def random_flow(d, n_layers, activation, seed, step_scale=0.25):
    """A flow at a generic point on the manifold, reached by one retraction."""
    gen = np.random.default_rng(seed)
    flow = StiefelFlow.identity_init(d, n_layers, activation)
    return flow.retract(step_scale * gen.standard_normal(flow.n_params))


def finite_difference_scores(flow, theta, h=1e-6):
    vec = flow.to_vector()
    out = np.zeros((theta.shape[0], flow.n_params))
    for j in range(flow.n_params):
        vp, vm = vec.copy(), vec.copy()
        vp[j] += h
        vm[j] -= h
        fp = StiefelFlow.from_vector(vp, flow.dim, flow.n_layers, flow.activation, validate=False)
        fm = StiefelFlow.from_vector(vm, flow.dim, flow.n_layers, flow.activation, validate=False)
        out[:, j] = (fp.log_density(theta) - fm.log_density(theta)) / (2 * h)
    return out


class TestGaussianMeanField:
    def test_log_density_standard_normal_at_zero(self):
        fam = GaussianMeanField.standard(1)
        assert fam.log_density(np.array([0.0])) == pytest.approx(-0.918939, abs=1e-6)

    def test_score_closed_form_at_mode(self):
        fam = GaussianMeanField.standard(1)
        score = fam.score(np.array([[0.0]]))
        np.testing.assert_allclose(score, [[0.0, -1.0]], atol=1e-14)

    def test_score_closed_form_hand_example(self):
        fam = GaussianMeanField(np.array([1.0]), np.array([0.5]))
        score = fam.score(np.array([[2.0]]))
        np.testing.assert_allclose(score, [[np.exp(-1.0), -1.0 + np.exp(-1.0)]], rtol=1e-12)

    def test_score_matches_finite_differences(self, rng):
        fam = GaussianMeanField(rng.standard_normal(4), 0.3 * rng.standard_normal(4))
        theta = fam.sample(rng, 5)
        score = fam.score(theta)
        h = 1e-6
        vec = fam.to_vector()
        fd = np.zeros_like(score)
        for j in range(fam.n_params):
            vp, vm = vec.copy(), vec.copy()
            vp[j] += h
            vm[j] -= h
            fp = GaussianMeanField.from_vector(vp, 4)
            fm = GaussianMeanField.from_vector(vm, 4)
            fd[:, j] = (fp.log_density(theta) - fm.log_density(theta)) / (2 * h)
        assert np.abs(score - fd).max() < 1e-5

    def test_sample_moments_and_determinism(self):
        fam = GaussianMeanField.standard(3)
        draws = fam.sample(np.random.default_rng(0), 100_000)
        assert np.abs(draws.mean(axis=0)).max() < 4.0 / np.sqrt(100_000)
        again = fam.sample(np.random.default_rng(0), 100_000)
        np.testing.assert_array_equal(draws, again)

    def test_retract_is_additive(self):
        fam = GaussianMeanField.standard(2)
        step = np.ones(4)
        moved = fam.retract(step)
        np.testing.assert_array_equal(moved.mu, [1.0, 1.0])
        np.testing.assert_array_equal(moved.log_sigma, [1.0, 1.0])

    def test_zero_samples_rejected(self, rng):
        with pytest.raises(ValidationError):
            GaussianMeanField.standard(2).sample(rng, 0)

    def test_expected_score_vanishes(self):
        fam = GaussianMeanField(np.array([0.5, -1.0]), np.array([0.2, 0.0]))
        gen = np.random.default_rng(11)
        samples = fam.sample(gen, 100_000)
        scores = fam.score(samples)
        bound = 4.0 * scores.std(axis=0) / np.sqrt(100_000)
        assert (np.abs(scores.mean(axis=0)) <= bound).all()


class TestStiefelFlowDensity:
    def test_identity_flow_is_standard_normal(self):
        flow = StiefelFlow.identity_init(3, 1, "identity")
        theta = np.array([0.0, 0.0, 0.0])
        assert flow.log_density(theta) == pytest.approx(-1.5 * np.log(2 * np.pi), abs=1e-12)

    def test_tanh_change_of_variables_hand_value(self):
        # K=1, W=(1), b=(0): log q(0) = log phi(0) - log(1 - 0^2)
        flow = StiefelFlow.identity_init(1, 1, "tanh")
        assert flow.log_density(np.array([0.0])) == pytest.approx(-0.918939, abs=1e-6)

    def test_tanh_domain_error_at_boundary(self):
        flow = StiefelFlow.identity_init(1, 1, "tanh")
        with pytest.raises(FlowDomainError):
            flow.log_density(np.array([1.0]))

    def test_tanh_samples_stay_in_range(self, rng):
        flow = StiefelFlow.identity_init(1, 1, "tanh")
        batch = flow.sample(rng, 1000)
        assert np.abs(batch.theta).max() < 1.0

    def test_forward_consistency(self, rng):
        flow = random_flow(3, 2, "tanh", seed=5)
        batch = flow.sample(rng, 8)
        np.testing.assert_array_equal(batch.states[-1], batch.theta)
        for a, z in zip(batch.preacts, batch.states[1:]):
            np.testing.assert_allclose(np.tanh(a), z, rtol=1e-12)

    @pytest.mark.parametrize("activation", ["tanh", "identity"])
    @pytest.mark.parametrize("d,n_layers", [(2, 1), (5, 3), (8, 2)])
    def test_inverse_round_trip(self, activation, d, n_layers):
        flow = random_flow(d, n_layers, activation, seed=d * 10 + n_layers)
        z0 = np.random.default_rng(1).standard_normal((20, d))
        batch = flow.forward(z0)
        recovered = flow.inverse(batch.theta)
        assert np.abs(recovered.states[0] - z0).max() < 1e-10

    def test_path_density_matches_inverse_density(self, rng):
        flow = random_flow(4, 2, "tanh", seed=9)
        batch = flow.sample(rng, 50)
        np.testing.assert_allclose(
            flow.sample_log_density(batch), flow.log_density(batch.theta), atol=1e-10
        )

    def test_identity_flow_samples_standard_normal(self):
        # KS-style sanity: identity flow with W=I, b=0 is exactly N(0, I)
        from scipy import stats

        flow = StiefelFlow.identity_init(1, 1, "identity")
        batch = flow.sample(np.random.default_rng(4), 10_000)
        _, p = stats.kstest(batch.theta[:, 0], "norm")
        assert p > 0.001


class TestStiefelFlowScore:
    @pytest.mark.parametrize("activation", ["tanh", "identity"])
    @pytest.mark.parametrize("d,n_layers", [(1, 1), (3, 2), (4, 2)])
    def test_score_matches_finite_differences(self, activation, d, n_layers, rng):
        flow = random_flow(d, n_layers, activation, seed=17)
        batch = flow.sample(rng, 5)
        score = flow.score(batch)
        fd = finite_difference_scores(flow, batch.theta)
        assert np.abs(score - fd).max() < 1e-5

    def test_score_of_inverse_batch_matches_sample_batch(self, rng):
        flow = random_flow(3, 2, "tanh", seed=23)
        batch = flow.sample(rng, 6)
        np.testing.assert_allclose(
            flow.score(batch), flow.score(flow.inverse(batch.theta)), atol=1e-9
        )

    def test_expected_score_vanishes_tanh(self):
        flow = random_flow(3, 2, "tanh", seed=31, step_scale=0.15)
        gen = np.random.default_rng(7)
        samples = flow.sample(gen, 100_000)
        scores = flow.score(samples)
        bound = 4.0 * scores.std(axis=0) / np.sqrt(100_000)
        assert (np.abs(scores.mean(axis=0)) <= bound).all()

    def test_expected_score_check_helper(self):
        flow = StiefelFlow.identity_init(2, 1, "identity")
        mean = expected_score_check(flow, np.random.default_rng(2), 100_000)
        assert np.abs(mean).max() < 0.05


class TestRetraction:
    def test_zero_step_is_identity(self):
        flow = random_flow(3, 2, "tanh", seed=2)
        moved = flow.retract(np.zeros(flow.n_params))
        for w0, w1 in zip(flow.weights, moved.weights):
            np.testing.assert_allclose(w0, w1, atol=1e-12)

    def test_rotation_retraction_hand_value(self):
        # qf(I + [[0, e], [-e, 0]]) is the rotation by atan(e)
        flow = StiefelFlow.identity_init(2, 1, "tanh")
        eps = 0.1
        step = np.zeros(flow.n_params)
        # column-major positions of W: (0,0)->0, (1,0)->1, (0,1)->2, (1,1)->3
        step[1] = -eps
        step[2] = eps
        moved = flow.retract(step)
        w = moved.weights[0]
        assert np.linalg.norm(w.T @ w - np.eye(2)) < 1e-12
        phi = np.arctan(eps)
        expected = np.array([[np.cos(phi), np.sin(phi)], [-np.sin(phi), np.cos(phi)]])
        np.testing.assert_allclose(w, expected, atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        scale=st.floats(1e-3, 50.0),
        d=st.integers(2, 5),
        n_layers=st.integers(1, 3),
    )
    def test_retraction_preserves_orthogonality(self, seed, scale, d, n_layers):
        gen = np.random.default_rng(seed)
        flow = StiefelFlow.identity_init(d, n_layers, "tanh")
        moved = flow.retract(scale * gen.standard_normal(flow.n_params))
        assert moved.orthogonality_defect() <= 1e-8

    def test_layout_round_trip(self):
        flow = random_flow(3, 2, "tanh", seed=77)
        rebuilt = StiefelFlow.from_vector(flow.to_vector(), 3, 2, "tanh")
        for w0, w1 in zip(flow.weights, rebuilt.weights):
            np.testing.assert_array_equal(w0, w1)
        for b0, b1 in zip(flow.biases, rebuilt.biases):
            np.testing.assert_array_equal(b0, b1)

    def test_wrong_step_length_rejected(self):
        flow = StiefelFlow.identity_init(2, 1, "tanh")
        with pytest.raises(ValidationError):
            flow.retract(np.zeros(3))

    def test_nonorthogonal_weights_rejected(self):
        with pytest.raises(ValidationError, match="orthogonal"):
            StiefelFlow([np.array([[1.0, 0.5], [0.0, 1.0]])], [np.zeros(2)], "tanh")
