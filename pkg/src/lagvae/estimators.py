"""scikit-learn style wrappers around the dual optimizer.

Both estimators take categorical samples ``X`` (integers in ``[0, n_values)``,
shape ``(n,)`` or ``(n, 1)``), use their empirical frequencies as q(x) and
fit a tabular encoder/decoder pair with ``n_latent`` latent states.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dual import DualConfig, run_infovae_baseline, run_lagvae, select_epsilon

__all__ = ["LagrangianVAE", "InfoVAE"]


def _empirical(X, n_values):
    X = check_array(X, ensure_2d=False, dtype=None)
    X = np.asarray(X).reshape(len(X), -1)
    if X.shape[1] != 1:
        raise ValueError("expected a single categorical column")
    x = X[:, 0]
    if not np.issubdtype(x.dtype, np.integer):
        if not np.all(np.equal(np.mod(x, 1), 0)):
            raise ValueError("categorical values must be integers")
        x = x.astype(int)
    if x.min() < 0:
        raise ValueError("categorical values must be >= 0")
    n = int(x.max()) + 1 if n_values is None else int(n_values)
    if x.max() >= n:
        raise ValueError(f"value {int(x.max())} is outside [0, {n})")
    counts = np.bincount(x, minlength=n).astype(float)
    if np.any(counts == 0):
        # strictly positive marginals keep every log finite
        counts = counts + 1e-3
    return x, counts / counts.sum()


class _TabularEstimator(TransformerMixin, BaseEstimator):
    def _config(self, q_x, kinds, eps, **extra):
        nz = self.n_latent
        p_z = np.full(nz, 1.0 / nz) if self.prior is None else np.asarray(self.prior, float)
        p_z = p_z / p_z.sum()
        return DualConfig(
            nx=len(q_x), nz=nz, q_x=tuple(q_x), p_z=tuple(p_z), alpha1=self.alpha1,
            constraints=tuple(zip(kinds, eps)), seed=self.random_state,
            rho_theta=self.rho_theta, iters=self.max_iter, kernel_sigma=self.kernel_sigma, **extra)

    def _finish(self, trace):
        self.model_ = trace.model
        self.trace_ = trace
        self.n_features_in_ = 1
        self.mutual_information_ = trace.final.I_q
        self.elbo_ = trace.final.elbo
        return self

    def transform(self, X):
        """Encoder rows q(z|x) for each sample."""
        check_is_fitted(self, "model_")
        x, _ = _empirical(X, self.model_.nx)
        return np.asarray(self.model_.theta_q)[x]

    def predict(self, X):
        """Most probable latent state under the encoder."""
        return self.transform(X).argmax(axis=1)

    def decode(self, z):
        """Decoder rows p(x|z)."""
        check_is_fitted(self, "model_")
        return np.asarray(self.model_.theta_p)[np.asarray(z, int)]


class LagrangianVAE(_TabularEstimator):
    """Multipliers learned by projected ascent; constraints are -ELBO and MMD
    on the latent marginal, with epsilon picked by a constraint-only fit plus
    ``slack`` unless ``epsilon`` is given."""

    def __init__(self, n_latent=2, n_values=None, alpha1=-1.0, slack=(0.05, 0.002), epsilon=None,
                 prior=None, rho_theta=0.05, rho_lambda=5.0, max_iter=20000, select_iter=3000,
                 kernel_sigma=1.0, random_state=0):
        self.n_latent = n_latent
        self.n_values = n_values
        self.alpha1 = alpha1
        self.slack = slack
        self.epsilon = epsilon
        self.prior = prior
        self.rho_theta = rho_theta
        self.rho_lambda = rho_lambda
        self.max_iter = max_iter
        self.select_iter = select_iter
        self.kernel_sigma = kernel_sigma
        self.random_state = random_state

    def fit(self, X, y=None):
        x, q_x = _empirical(X, self.n_values)
        kinds = ("neg_elbo", "mmd_z")
        cfg = self._config(q_x, kinds, (None, None), gamma=tuple(self.slack),
                           rho_lambda=self.rho_lambda, select_iters=self.select_iter)
        if self.epsilon is None:
            eps, _ = select_epsilon(cfg)
        else:
            eps = np.asarray(self.epsilon, float)
        cfg = cfg.with_epsilons(eps)
        self.epsilon_ = np.asarray(cfg.epsilons)
        trace = run_lagvae(cfg)
        self.lambdas_ = np.asarray(trace.final.lambdas)
        return self._finish(trace)


class InfoVAE(_TabularEstimator):
    """Same model with fixed multipliers ``lambdas`` on (-ELBO, MMD)."""

    def __init__(self, n_latent=2, n_values=None, alpha1=-1.0, lambdas=(1.0, 100.0), prior=None,
                 rho_theta=0.05, max_iter=20000, kernel_sigma=1.0, random_state=0):
        self.n_latent = n_latent
        self.n_values = n_values
        self.alpha1 = alpha1
        self.lambdas = lambdas
        self.prior = prior
        self.rho_theta = rho_theta
        self.max_iter = max_iter
        self.kernel_sigma = kernel_sigma
        self.random_state = random_state

    def fit(self, X, y=None):
        x, q_x = _empirical(X, self.n_values)
        cfg = self._config(q_x, ("neg_elbo", "mmd_z"), (None, None),
                           baseline_lambdas=tuple(self.lambdas))
        trace = run_infovae_baseline(cfg)
        self.lambdas_ = np.asarray(trace.final.lambdas)
        return self._finish(trace)
