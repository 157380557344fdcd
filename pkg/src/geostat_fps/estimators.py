"""Closed-form Bayesian finite population estimators with fixed variances.

The generic partitioned-Gaussian formulas use the prior covariance of the
group-level coefficients in the singularity-safe push-through form

    V_{beta|y_s} = S_b - S_b X_s' (X_s S_b X_s' + V_s)^{-1} X_s S_b,

with S_b = gamma2 A A' + V_beta, so degenerate priors (V_beta = O,
gamma2 = 0) are handled without inverting S_b.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "FixedVarianceModel",
    "posterior_mean_linear",
    "variance_of_expectation",
    "posterior_variance",
    "srs_estimate",
    "two_stage_estimate",
    "stratified_limit_estimate",
    "spatial_two_stage_estimate",
    "shrinkage_weights",
]


@dataclass
class FixedVarianceModel:
    """Outcome covariance blocks and prior structure, all fixed.

    Blocks are in canonical order: V_s (k x k), V_ns (K x K), V_ns_s
    (K x k).  ``A`` is the prior-mean loading of the coefficient vector on
    the scalar superpopulation mean (prior beta ~ N(A nu, V_beta),
    nu ~ N(0, gamma2)).
    """

    X_s: np.ndarray
    X_ns: np.ndarray
    V_s: np.ndarray
    V_ns: np.ndarray
    V_ns_s: np.ndarray
    V_beta: np.ndarray
    A: np.ndarray
    gamma2: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    def coef_prior_cov(self):
        A = np.atleast_1d(np.asarray(self.A, dtype=float))
        return self.gamma2 * np.outer(A, A) + np.asarray(self.V_beta, dtype=float)

    def _solve_Vs(self, B):
        if "cho_Vs" not in self._cache:
            self._cache["cho_Vs"] = cho_factor(self.V_s)
        return cho_solve(self._cache["cho_Vs"], B)

    def v_beta_given_ys(self):
        """Posterior covariance of beta given y_s (variances fixed)."""
        Sb = self.coef_prior_cov()
        XS = self.X_s @ Sb
        Sig_s = XS @ self.X_s.T + self.V_s
        c = cho_factor(Sig_s)
        return Sb - XS.T @ cho_solve(c, XS)

    def marginal_cov_s(self):
        """Marginal covariance of y_s with beta and nu integrated out."""
        Sb = self.coef_prior_cov()
        return self.X_s @ Sb @ self.X_s.T + self.V_s

    def estimator_pieces(self):
        """B_V and the V_s^{-1} B_V' factor shared by the operations."""
        Vb = self.v_beta_given_ys()
        Q = self.X_ns - self.V_ns_s @ self._solve_Vs(self.X_s)
        B_V = self.V_ns_s + Q @ Vb @ self.X_s.T
        return Q, Vb, B_V


def _split_alpha(alpha, k):
    alpha = np.asarray(alpha, dtype=float)
    return alpha[:k], alpha[k:]


def posterior_mean_linear(alpha, y_s, model: FixedVarianceModel):
    """E[alpha' y | y_s] = alpha_s' y_s + alpha_ns' B_V V_s^{-1} y_s."""
    y_s = np.asarray(y_s, dtype=float)
    a_s, a_ns = _split_alpha(alpha, y_s.size)
    if a_ns.size == 0:
        return float(a_s @ y_s)
    _, _, B_V = model.estimator_pieces()
    return float(a_s @ y_s + a_ns @ B_V @ model._solve_Vs(y_s))


def variance_of_expectation(alpha, model: FixedVarianceModel):
    """Variance of the estimator over the marginal distribution of y_s.

    The estimator is linear, c' y_s with c = alpha_s + V_s^{-1} B_V' a_ns;
    the variance is taken under y_s ~ N(0, X_s S_b X_s' + V_s) so the law of
    total variance holds exactly against :func:`posterior_variance`.
    """
    k = model.V_s.shape[0]
    a_s, a_ns = _split_alpha(alpha, k)
    c = a_s.copy()
    if a_ns.size:
        _, _, B_V = model.estimator_pieces()
        c = c + model._solve_Vs(B_V.T @ a_ns)
    return float(c @ model.marginal_cov_s() @ c)


def posterior_variance(alpha, model: FixedVarianceModel):
    """Var[alpha' y | y_s] = a_ns' (Q V_{b|ys} Q' + V_ns - V_ns,s V_s^{-1} V_s,ns) a_ns."""
    k = model.V_s.shape[0]
    _, a_ns = _split_alpha(alpha, k)
    if a_ns.size == 0:
        return 0.0
    Q, Vb, _ = model.estimator_pieces()
    cond = (Q @ Vb @ Q.T + model.V_ns
            - model.V_ns_s @ model._solve_Vs(model.V_ns_s.T))
    return float(a_ns @ cond @ a_ns)


def srs_estimate(alpha, y_s, sigma2, xi2):
    """Simple-random-sampling posterior mean of alpha' y.

    ``alpha`` has length N (population order, first n entries sampled).
    """
    if sigma2 <= 0 or xi2 <= 0:
        raise ValueError("sigma2 and xi2 must be positive")
    alpha = np.asarray(alpha, dtype=float)
    y_s = np.asarray(y_s, dtype=float)
    n = y_s.size
    if n < 1:
        raise ValueError("need at least one sampled unit")
    shrink = alpha[n:].sum() / (sigma2 / xi2 + n)
    return float(((alpha[:n] + shrink) * y_s).sum())


def shrinkage_weights(m, sigma2, delta2, n):
    """lambda_i = delta2 / (delta2 + sigma_i^2 / m_i); zero for unsampled."""
    m = np.asarray(m, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    lam = np.zeros(m.size)
    lam[:n] = delta2 / (delta2 + sigma2[:n] / m[:n])
    return lam


def two_stage_estimate(alpha, y_s, layout, sigma2, delta2, gamma2):
    """Two-stage posterior mean of alpha' y with fixed variances.

    ``alpha`` is in canonical order (length T), ``sigma2`` per region in
    canonical region order, and ``layout`` a DesignMatrices.
    """
    y_s = np.asarray(y_s, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if (layout.m[: layout.n] == 0).any():
        raise ValueError("sampled group without sampled units")
    n, k = layout.n, layout.k
    lam = shrinkage_weights(layout.m, sigma2, delta2, n)
    gamma2t = gamma2 / delta2
    a_s, a_ns = alpha[:k], alpha[k:]
    # group weight of nonsampled units
    a_grp = np.bincount(layout.region_ns, weights=a_ns, minlength=layout.N) \
        if a_ns.size else np.zeros(layout.N)
    pooled = (a_grp * (1.0 - lam)).sum() / (1.0 / gamma2t + lam[:n].sum())
    coef = a_s + (a_grp[layout.region_s] + pooled) * lam[layout.region_s] / layout.m[layout.region_s]
    return float(coef @ y_s)


def stratified_limit_estimate(ybar, M):
    """Stratified finite population mean: sum_i (M_i / T) ybar_i."""
    ybar = np.asarray(ybar, dtype=float)
    M = np.asarray(M, dtype=float)
    if np.isnan(ybar).any():
        raise ValueError("every stratum must be sampled")
    return float((M * ybar).sum() / M.sum())


def spatial_two_stage_estimate(alpha, y_s, layout, omega, sigma2, delta2, gamma2):
    """Spatial two-stage posterior mean of alpha' y with fixed variances.

    ``omega`` is a PartitionedCovariance (spatial part only); the nugget
    V^(sigma) is assembled from per-region ``sigma2``.  Evaluated through
    the posterior means of nu and mu, which matches the generic formula.
    """
    y_s = np.asarray(y_s, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    k, N, n = layout.k, layout.N, layout.n
    sigma2 = np.asarray(sigma2, dtype=float)
    a_s, a_ns = alpha[:k], alpha[k:]

    Q_s = omega.omega_s + np.diag(sigma2[layout.region_s])
    cq = cho_factor(Q_s)
    Qinv_y = cho_solve(cq, y_s)
    Qinv_Xs = cho_solve(cq, layout.X_s)

    # E[nu | y_s]
    G = delta2 * layout.X_s @ layout.X_s.T + Q_s
    cg = cho_factor(G)
    lam_star = layout.X_s.T @ cho_solve(cg, layout.X_s) @ np.ones(N)
    b_nu = np.ones(N) @ layout.X_s.T @ cho_solve(cg, y_s)
    e_nu = b_nu / (1.0 / gamma2 + lam_star.sum())

    # E[mu | y_s]
    Bmu = np.linalg.inv(np.eye(N) / delta2 + layout.X_s.T @ Qinv_Xs)
    e_mu = Bmu @ (layout.X_s.T @ Qinv_y + np.ones(N) * e_nu / delta2)

    e_yns = layout.X_ns @ e_mu + omega.omega_s_ns.T @ cho_solve(
        cq, y_s - layout.X_s @ e_mu)
    return float(a_s @ y_s + a_ns @ e_yns)
