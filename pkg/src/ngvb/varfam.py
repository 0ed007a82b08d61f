"""Variational families: sampling, log-density, score, and retraction.

Two families share one informal protocol (sample / thetas / log_density /
sample_log_density / score / retract):

* GaussianMeanField -- diagonal Gaussian with free parameters (mu, omega),
  sigma = exp(omega).  Everything is closed form.

* StiefelFlow -- a K-layer invertible map
      Z_0 ~ N(0, I),   Z_k = act(W_k Z_{k-1} + b_k),
  with each W_k square and orthogonal (W_k'W_k = I).  Orthogonality makes
  the map invertible, Z_{k-1} = W_k'(act^{-1}(Z_k) - b_k), and the
  log-density Jacobian reduces to the activation derivatives because an
  orthogonal map has unit Jacobian determinant.

The flow score (gradient of log q w.r.t. every W_k and b_k with theta held
fixed) is computed by a hand-rolled reverse-mode sweep through the inverse
pass; see StiefelFlow.score.  The parameter vector layout is
[vec(W_1) column-major, b_1, ..., vec(W_K), b_K].
"""

from dataclasses import dataclass

import numpy as np

from .errors import FlowDomainError, NumericalError, ValidationError

LOG_2PI = float(np.log(2.0 * np.pi))

ACTIVATIONS = ("tanh", "identity")


def _check_m(m):
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise ValidationError(f"sample count must be a positive integer, got {m!r}")


# ---------------------------------------------------------------------------
# Gaussian mean field
# ---------------------------------------------------------------------------


class GaussianMeanField:
    """Diagonal Gaussian q_(mu, omega) with sigma_j = exp(omega_j); N = 2d.

    Score closed forms:
        d/dmu_j    log q = (theta_j - mu_j) / sigma_j^2
        d/domega_j log q = -1 + (theta_j - mu_j)^2 / sigma_j^2
    """

    family_tag = "gaussian"

    def __init__(self, mu, log_sigma):
        mu = np.asarray(mu, dtype=float)
        log_sigma = np.asarray(log_sigma, dtype=float)
        if mu.ndim != 1 or log_sigma.shape != mu.shape:
            raise ValidationError("mu and log_sigma must be 1-d vectors of equal length")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(log_sigma))):
            raise ValidationError("non-finite variational parameters")
        self.mu = mu
        self.log_sigma = log_sigma

    @classmethod
    def standard(cls, d):
        return cls(np.zeros(d), np.zeros(d))

    @property
    def dim(self):
        return self.mu.size

    @property
    def n_params(self):
        return 2 * self.mu.size

    @property
    def sigma(self):
        return np.exp(self.log_sigma)

    def sample(self, rng, m):
        _check_m(m)
        return self.mu + self.sigma * rng.standard_normal((m, self.dim))

    def thetas(self, samples):
        return samples

    def log_density(self, theta):
        th = np.atleast_2d(np.asarray(theta, dtype=float))
        if th.shape[1] != self.dim:
            raise ValidationError(f"theta dimension {th.shape[1]} != {self.dim}")
        z = (th - self.mu) / self.sigma
        out = -0.5 * self.dim * LOG_2PI - self.log_sigma.sum() - 0.5 * (z**2).sum(axis=1)
        return float(out[0]) if np.asarray(theta).ndim == 1 else out

    def sample_log_density(self, samples):
        return self.log_density(samples)

    def score(self, samples):
        th = np.atleast_2d(samples)
        var = self.sigma**2
        diff = th - self.mu
        d_mu = diff / var
        d_omega = -1.0 + diff**2 / var
        return np.concatenate([d_mu, d_omega], axis=1)

    def fisher_diagonal(self):
        """Closed-form Fisher diagonal diag(1/sigma_j^2, 2), used as a test oracle."""
        return np.concatenate([1.0 / self.sigma**2, 2.0 * np.ones(self.dim)])

    def retract(self, step):
        step = np.asarray(step, dtype=float)
        if step.shape != (self.n_params,):
            raise ValidationError(f"step length {step.size} != {self.n_params}")
        d = self.dim
        return GaussianMeanField(self.mu + step[:d], self.log_sigma + step[d:])

    def to_vector(self):
        return np.concatenate([self.mu, self.log_sigma])

    @classmethod
    def from_vector(cls, vec, d):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (2 * d,):
            raise ValidationError(f"parameter vector length {vec.size} != {2 * d}")
        return cls(vec[:d], vec[d:])

    def layout_tag(self):
        return f"gaussian d={self.dim}"


# ---------------------------------------------------------------------------
# Stiefel normalizing flow
# ---------------------------------------------------------------------------


@dataclass
class FlowBatch:
    """A batch of flow draws with the cached forward/inverse path.

    theta: (m, d) final states.
    states: K+1 arrays (m, d), states[k] = Z_k with states[-1] == theta.
    preacts: K arrays (m, d), preacts[k-1] = a_k = W_k Z_{k-1} + b_k.
    """

    theta: np.ndarray
    states: list
    preacts: list

    def __len__(self):
        return self.theta.shape[0]


def _qr_orthogonal_factor(x):
    """Q factor of a QR decomposition with diag(R) > 0; errors on rank deficiency."""
    q, r = np.linalg.qr(x)
    diag = np.diagonal(r)
    tol = x.shape[0] * np.finfo(float).eps * max(1.0, float(np.abs(diag).max(initial=0.0)))
    if np.any(np.abs(diag) <= tol):
        raise NumericalError("QR retraction failed: perturbed matrix is rank deficient")
    s = np.sign(diag)
    return q * s


class StiefelFlow:
    """K-layer orthogonal-weight flow; N = K (d^2 + d)."""

    family_tag = "stiefel-flow"

    def __init__(self, weights, biases, activation="tanh", *, validate=True):
        """``validate=False`` skips the orthogonality gate, for deliberately
        off-manifold evaluations (finite-difference probes, ambient gradients)."""
        if activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {activation!r}; choose from {ACTIVATIONS}")
        weights = [np.asarray(w, dtype=float) for w in weights]
        biases = [np.asarray(b, dtype=float) for b in biases]
        if len(weights) == 0 or len(weights) != len(biases):
            raise ValidationError("need K >= 1 layers with one weight matrix and bias each")
        d = weights[0].shape[0]
        for w, b in zip(weights, biases):
            if w.shape != (d, d) or b.shape != (d,):
                raise ValidationError("every layer must be a d x d weight plus a length-d bias")
        if validate:
            for k, w in enumerate(weights):
                defect = np.linalg.norm(w.T @ w - np.eye(d))
                if not defect <= 1e-8:
                    raise ValidationError(
                        f"layer {k}: weight is not orthogonal (defect {defect:.3e})"
                    )
        self.weights = weights
        self.biases = biases
        self.activation = activation

    @classmethod
    def identity_init(cls, d, n_layers, activation="tanh"):
        """W_k = I, b_k = 0: the flow starts as act applied to a standard normal."""
        return cls(
            [np.eye(d) for _ in range(n_layers)],
            [np.zeros(d) for _ in range(n_layers)],
            activation,
        )

    @property
    def dim(self):
        return self.weights[0].shape[0]

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def n_params(self):
        d = self.dim
        return self.n_layers * (d * d + d)

    def orthogonality_defect(self):
        """max_k ||W_k'W_k - I||_F, the manifold constraint residual."""
        d = self.dim
        return max(float(np.linalg.norm(w.T @ w - np.eye(d))) for w in self.weights)

    # -- activation helpers -------------------------------------------------

    def _act(self, a):
        return np.tanh(a) if self.activation == "tanh" else a

    def _act_inv(self, z, layer):
        if self.activation == "identity":
            return z
        if np.any(np.abs(z) >= 1.0):
            raise FlowDomainError(
                f"point outside flow image: |coordinate| >= 1 entering the inverse of layer {layer + 1}"
            )
        return np.arctanh(z)

    def _log_act_deriv_from_preact(self, a):
        # log |act'(a)|; tanh' = sech^2, computed overflow-free from a
        if self.activation == "identity":
            return np.zeros_like(a)
        return 2.0 * (np.log(2.0) - np.abs(a) - np.log1p(np.exp(-2.0 * np.abs(a))))

    def _log_act_deriv_from_output(self, z):
        if self.activation == "identity":
            return np.zeros_like(z)
        return np.log1p(-z * z)

    # -- forward / inverse ---------------------------------------------------

    def forward(self, z0):
        z0 = np.atleast_2d(np.asarray(z0, dtype=float))
        states = [z0]
        preacts = []
        z = z0
        for w, b in zip(self.weights, self.biases):
            a = z @ w.T + b
            z = self._act(a)
            preacts.append(a)
            states.append(z)
        return FlowBatch(theta=z, states=states, preacts=preacts)

    def inverse(self, theta):
        """Recover the full path from final states; raises FlowDomainError off-image."""
        th = np.atleast_2d(np.asarray(theta, dtype=float))
        if th.shape[1] != self.dim:
            raise ValidationError(f"theta dimension {th.shape[1]} != {self.dim}")
        states = [th]
        preacts = []
        z = th
        for k in reversed(range(self.n_layers)):
            a = self._act_inv(z, k)
            z = (a - self.biases[k]) @ self.weights[k]  # W' (a - b) row-wise
            preacts.append(a)
            states.append(z)
        states.reverse()
        preacts.reverse()
        return FlowBatch(theta=th, states=states, preacts=preacts)

    def sample(self, rng, m):
        _check_m(m)
        return self.forward(rng.standard_normal((m, self.dim)))

    def thetas(self, samples):
        return samples.theta

    def _weight_logdet(self):
        # exactly zero on the manifold; kept so that ambient (off-manifold)
        # evaluations stay consistent with the score's log|det W| gradient
        out = 0.0
        for w in self.weights:
            out += np.linalg.slogdet(w)[1]
        return out

    def _path_log_density(self, batch):
        z0 = batch.states[0]
        out = -0.5 * self.dim * LOG_2PI - 0.5 * (z0**2).sum(axis=1)
        for a in batch.preacts:
            out = out - self._log_act_deriv_from_preact(a).sum(axis=1)
        return out + self._weight_logdet()

    def sample_log_density(self, samples):
        return self._path_log_density(samples)

    def log_density(self, theta):
        batch = self.inverse(theta)
        z0 = batch.states[0]
        out = -0.5 * self.dim * LOG_2PI - 0.5 * (z0**2).sum(axis=1)
        # from the inverse side the activation outputs are the cached states
        for z in batch.states[1:]:
            out = out - self._log_act_deriv_from_output(z).sum(axis=1)
        out = out + self._weight_logdet()
        return float(out[0]) if np.asarray(theta).ndim == 1 else out

    # -- score ----------------------------------------------------------------

    def score(self, samples):
        """Reverse-mode gradient of log q w.r.t. (W_1, b_1, ..., W_K, b_K), theta fixed.

        Differentiates the inverse-pass expression
            log q = log N(Z_0; 0, I) + sum_k log|det W_k| - sum_k sum_j log act'(a_kj),
            Z_{k-1} = W_k'(a_k - b_k),  a_k = act^{-1}(Z_k),
        using the cached path values.  Adjoint recursion, per sample:
            gbar(Z_0)  = -Z_0
            dW_k       = (a_k - b_k) gbar(Z_{k-1})' + W_k^{-T}
            db_k       = -W_k gbar(Z_{k-1})
            gbar(a_k)  = W_k gbar(Z_{k-1}) + dlog-deriv term (2 Z_k for tanh)
            gbar(Z_k)  = gbar(a_k) / act'(a_k)
        The W_k^{-T} piece is the log-determinant gradient (equal to W_k on
        the manifold); without it the score of the normalized density would
        not have zero mean.  Returns an (m, N) matrix in the canonical layout.
        """
        batch = samples
        m = len(batch)
        d = self.dim
        pieces = []
        g = -batch.states[0]  # (m, d) adjoint of Z_0
        for k in range(self.n_layers):
            w, b = self.weights[k], self.biases[k]
            a = batch.preacts[k]
            zk = batch.states[k + 1]
            logdet_grad = np.linalg.inv(w).T  # == w itself when orthogonal
            grad_w = np.einsum("mj,mi->mji", a - b, g) + logdet_grad
            grad_b = -(g @ w.T)
            # column-major vec: position i*d + j for entry (j, i)
            pieces.append(grad_w.transpose(0, 2, 1).reshape(m, d * d))
            pieces.append(grad_b)
            if k + 1 < self.n_layers:
                ga = g @ w.T
                if self.activation == "tanh":
                    ga = ga + 2.0 * zk
                    g = ga / (1.0 - zk * zk)
                else:
                    g = ga
        return np.concatenate(pieces, axis=1)

    # -- retraction -------------------------------------------------------------

    def retract(self, step):
        """Additive bias update; weights move then snap back via the QR factor."""
        step = np.asarray(step, dtype=float)
        if step.shape != (self.n_params,):
            raise ValidationError(f"step length {step.size} != {self.n_params}")
        d = self.dim
        weights, biases = [], []
        off = 0
        for w, b in zip(self.weights, self.biases):
            dw = step[off : off + d * d].reshape((d, d), order="F")
            off += d * d
            db = step[off : off + d]
            off += d
            weights.append(_qr_orthogonal_factor(w + dw))
            biases.append(b + db)
        return StiefelFlow(weights, biases, self.activation, validate=False)

    def to_vector(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel(order="F"))
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vec, d, n_layers, activation="tanh", *, validate=True):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (n_layers * (d * d + d),):
            raise ValidationError(
                f"parameter vector length {vec.size} != {n_layers * (d * d + d)}"
            )
        weights, biases = [], []
        off = 0
        for _ in range(n_layers):
            weights.append(vec[off : off + d * d].reshape((d, d), order="F"))
            off += d * d
            biases.append(vec[off : off + d])
            off += d
        return cls(weights, biases, activation, validate=validate)

    def layout_tag(self):
        return f"stiefel-flow d={self.dim} K={self.n_layers} activation={self.activation}"


def expected_score_check(family, rng, m):
    """Monte Carlo mean of the score over m draws; should vanish (E_q T = 0)."""
    samples = family.sample(rng, m)
    return family.score(samples).mean(axis=0)
