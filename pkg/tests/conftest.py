"""Shared fixtures and brute-force oracles for the test suite."""

import numpy as np
import pytest

from geostat_fps.population import FinitePopulation, SampleIndex, \
    build_design_matrices


def random_spd(rng, n, scale=1.0):
    """Random symmetric positive definite matrix, well conditioned."""
    A = rng.standard_normal((n, n))
    return scale * (A @ A.T / n + np.eye(n))


def make_two_stage_pop(rng, N=3, M_per=4, n_sampled=2, m_per=2):
    """Small two-stage population with the first n_sampled regions sampled."""
    T = N * M_per
    regions = np.repeat(np.arange(N), M_per)
    values = rng.normal(2.0, 1.0, T)
    mask = np.zeros(T, dtype=bool)
    for i in range(n_sampled):
        units = np.flatnonzero(regions == i)
        mask[rng.choice(units, size=m_per, replace=False)] = True
    vals = values.copy()
    vals[~mask] = np.nan
    pop = FinitePopulation(x=rng.uniform(size=T), y=rng.uniform(size=T),
                           regions=regions, values=vals)
    s = SampleIndex(pop, mask)
    return pop, s, build_design_matrices(pop, s), values


def joint_cov(model):
    """Full marginal covariance of y with beta and nu integrated out."""
    X = np.vstack([model.X_s, model.X_ns])
    Sb = model.coef_prior_cov()
    V = np.block([[model.V_s, model.V_ns_s.T],
                  [model.V_ns_s, model.V_ns]])
    return X @ Sb @ X.T + V


def conditioning_oracle(model, alpha, y_s):
    """Brute-force joint-Gaussian conditioning for the three estimands.

    Returns (posterior mean of alpha'y, posterior variance, variance of the
    estimator over the marginal law of y_s).
    """
    alpha = np.asarray(alpha, dtype=float)
    y_s = np.asarray(y_s, dtype=float)
    k = y_s.size
    S = joint_cov(model)
    Sss, Ssn = S[:k, :k], S[:k, k:]
    H = np.linalg.solve(Sss, Ssn).T
    mean = float(alpha[:k] @ y_s + alpha[k:] @ (H @ y_s))
    cond = S[k:, k:] - H @ Ssn
    post_var = float(alpha[k:] @ cond @ alpha[k:])
    w = alpha[:k] + np.linalg.solve(Sss, Ssn @ alpha[k:])
    var_e = float(w @ Sss @ w)
    return mean, post_var, var_e


@pytest.fixture
def rng():
    return np.random.default_rng(20230817)
