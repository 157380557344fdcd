import numpy as np
import pytest

from conftest import conditioning_oracle, joint_cov, random_spd
from geostat_fps.covariance import MaternSpec, build_omega
from geostat_fps.estimators import (FixedVarianceModel, posterior_mean_linear,
                                    posterior_variance, shrinkage_weights,
                                    spatial_two_stage_estimate, srs_estimate,
                                    stratified_limit_estimate,
                                    two_stage_estimate,
                                    variance_of_expectation)
from geostat_fps.population import FinitePopulation, SampleIndex, \
    build_design_matrices


def random_model(rng, k=4, K=5, N=3, gamma2=None):
    T = k + K
    V = random_spd(rng, T)
    X = np.zeros((T, N))
    X[np.arange(T), rng.integers(0, N, T)] = 1.0
    return FixedVarianceModel(
        X_s=X[:k], X_ns=X[k:],
        V_s=V[:k, :k], V_ns=V[k:, k:], V_ns_s=V[k:, :k],
        V_beta=random_spd(rng, N, 0.5),
        A=np.ones(N),
        gamma2=rng.uniform(0.0, 2.0) if gamma2 is None else gamma2,
    )


def test_matches_conditioning_oracle(rng):
    for _ in range(10):
        model = random_model(rng)
        y_s = rng.normal(size=4)
        alpha = rng.normal(size=9)
        mean, pvar, vexp = conditioning_oracle(model, alpha, y_s)
        assert posterior_mean_linear(alpha, y_s, model) == pytest.approx(
            mean, rel=1e-9)
        assert posterior_variance(alpha, model) == pytest.approx(pvar, rel=1e-9)
        assert variance_of_expectation(alpha, model) == pytest.approx(
            vexp, rel=1e-9)


def test_degenerate_prior_handled(rng):
    # V_beta = O and gamma2 = 0: posterior collapses to the data part
    model = random_model(rng)
    model.V_beta = np.zeros((3, 3))
    model.gamma2 = 0.0
    y_s = rng.normal(size=4)
    alpha = rng.normal(size=9)
    mean, pvar, vexp = conditioning_oracle(model, alpha, y_s)
    assert posterior_mean_linear(alpha, y_s, model) == pytest.approx(mean, rel=1e-9)
    assert variance_of_expectation(alpha, model) == pytest.approx(vexp, rel=1e-9)
    # with zero prior covariance the marginal cov of y_s is V_s itself
    alpha_s_only = np.concatenate([rng.normal(size=4), np.zeros(5)])
    got = variance_of_expectation(alpha_s_only, model)
    assert got == pytest.approx(
        float(alpha_s_only[:4] @ model.V_s @ alpha_s_only[:4]), rel=1e-10)


def test_census_weights_reduce_to_observed(rng):
    model = random_model(rng)
    y_s = rng.normal(size=4)
    alpha = np.concatenate([rng.normal(size=4), np.zeros(5)])
    assert posterior_mean_linear(alpha, y_s, model) == pytest.approx(
        float(alpha[:4] @ y_s))
    assert posterior_variance(alpha, model) == 0.0


def test_law_of_total_variance(rng):
    model = random_model(rng)
    alpha = rng.normal(size=9)
    total = float(alpha @ joint_cov(model) @ alpha)
    parts = variance_of_expectation(alpha, model) + posterior_variance(alpha, model)
    assert parts == pytest.approx(total, rel=1e-9)


def test_srs_matches_generic(rng):
    n, K = 4, 6
    T = n + K
    sigma2, xi2 = 1.7, 3.1
    y_s = rng.normal(2.0, 1.0, n)
    alpha = rng.normal(size=T)
    model = FixedVarianceModel(
        X_s=np.ones((n, 1)), X_ns=np.ones((K, 1)),
        V_s=sigma2 * np.eye(n), V_ns=sigma2 * np.eye(K),
        V_ns_s=np.zeros((K, n)), V_beta=np.array([[xi2]]),
        A=np.array([0.0]), gamma2=0.0)
    assert srs_estimate(alpha, y_s, sigma2, xi2) == pytest.approx(
        posterior_mean_linear(alpha, y_s, model), rel=1e-10)


def test_srs_noninformative_limit_is_sample_mean(rng):
    y_s = rng.normal(size=5)
    T = 12
    alpha = np.full(T, 1.0 / T)
    est = srs_estimate(alpha, y_s, sigma2=2.0, xi2=1e14)
    assert est == pytest.approx(y_s.mean(), rel=1e-6)


def two_stage_setup(rng, N=3, M=5, n=2, m=3):
    regions = np.repeat(np.arange(N), M)
    vals = rng.normal(2, 1, N * M)
    mask = np.zeros(N * M, dtype=bool)
    for i in range(n):
        mask[np.flatnonzero(regions == i)[:m]] = True
    v = vals.copy()
    v[~mask] = np.nan
    pop = FinitePopulation(x=rng.uniform(size=N * M), y=rng.uniform(size=N * M),
                           regions=regions, values=v)
    s = SampleIndex(pop, mask)
    return build_design_matrices(pop, s), v


def test_two_stage_matches_generic(rng):
    lay, vals = two_stage_setup(rng)
    y_s = vals[lay.perm_s]
    sigma2 = np.array([1.3, 0.7, 2.0])
    delta2, gamma2 = 1.9, 0.8
    alpha = rng.normal(size=lay.T)
    V_units = sigma2[np.concatenate([lay.region_s, lay.region_ns])]
    k = lay.k
    model = FixedVarianceModel(
        X_s=lay.X_s, X_ns=lay.X_ns,
        V_s=np.diag(V_units[:k]), V_ns=np.diag(V_units[k:]),
        V_ns_s=np.zeros((lay.K, k)),
        V_beta=delta2 * np.eye(lay.N), A=np.ones(lay.N), gamma2=gamma2)
    want = posterior_mean_linear(alpha, y_s, model)
    got = two_stage_estimate(alpha, y_s, lay, sigma2, delta2, gamma2)
    assert got == pytest.approx(want, rel=1e-9)


def test_shrinkage_weights():
    lam = shrinkage_weights(m=np.array([4, 1, 0]), sigma2=np.array([2.0, 2.0, 2.0]),
                            delta2=1.0, n=2)
    assert lam[0] == pytest.approx(1.0 / (1.0 + 0.5))
    assert lam[1] == pytest.approx(1.0 / 3.0)
    assert lam[2] == 0.0
    # monotone in m: more units -> more weight on the group mean
    m_grid = np.arange(1, 30)
    lams = shrinkage_weights(m_grid, np.full(29, 2.0), 1.0, 29)
    assert (np.diff(lams) > 0).all()


def test_stratified_limit(rng):
    # delta2 -> infinity with gamma2 fixed: weights go fully to group means
    N, M, n = 3, 5, 3   # every region sampled
    lay, vals = two_stage_setup(rng, N=N, M=M, n=n, m=3)
    y_s = vals[lay.perm_s]
    alpha = np.full(lay.T, 1.0 / lay.T)
    sigma2 = np.array([1.0, 2.0, 0.5])
    est = two_stage_estimate(alpha, y_s, lay, sigma2, delta2=1e14, gamma2=1.0)
    ybar = np.array([y_s[lay.region_s == i].mean() for i in range(n)])
    want = stratified_limit_estimate(ybar, lay.M)
    assert est == pytest.approx(want, rel=1e-6)


def test_stratified_limit_estimate_direct():
    ybar = np.array([1.0, 3.0])
    M = np.array([2, 6])
    assert stratified_limit_estimate(ybar, M) == pytest.approx(
        (2 * 1.0 + 6 * 3.0) / 8.0)
    with pytest.raises(ValueError):
        stratified_limit_estimate(np.array([1.0, np.nan]), M)


def test_spatial_two_stage_matches_generic(rng):
    lay, vals = two_stage_setup(rng, N=3, M=4, n=2, m=2)
    y_s = vals[lay.perm_s]
    coords = rng.uniform(size=(lay.T, 2))
    spec = MaternSpec(tau2=1.5, sigma2=0.0, phi=6.0)
    omega = build_omega(coords, spec, k=lay.k)
    sigma2 = np.array([0.8, 1.2, 1.0])
    delta2, gamma2 = 1.4, 0.9
    V_units = sigma2[np.concatenate([lay.region_s, lay.region_ns])]
    k = lay.k
    model = FixedVarianceModel(
        X_s=lay.X_s, X_ns=lay.X_ns,
        V_s=omega.omega_s + np.diag(V_units[:k]),
        V_ns=omega.omega_ns + np.diag(V_units[k:]),
        V_ns_s=omega.omega_s_ns.T,
        V_beta=delta2 * np.eye(lay.N), A=np.ones(lay.N), gamma2=gamma2)
    alpha = rng.normal(size=lay.T)
    want = posterior_mean_linear(alpha, y_s, model)
    got = spatial_two_stage_estimate(alpha, y_s, lay, omega, sigma2,
                                     delta2, gamma2)
    assert got == pytest.approx(want, rel=1e-9)


def test_spatial_reduces_to_two_stage_when_omega_zero(rng):
    lay, vals = two_stage_setup(rng)
    y_s = vals[lay.perm_s]
    coords = rng.uniform(size=(lay.T, 2))
    omega = build_omega(coords, MaternSpec(tau2=0.0, sigma2=0.0, phi=1.0),
                        k=lay.k)
    sigma2 = np.array([1.0, 1.5, 2.0])
    alpha = np.full(lay.T, 1.0 / lay.T)
    a = spatial_two_stage_estimate(alpha, y_s, lay, omega, sigma2, 1.2, 0.7)
    b = two_stage_estimate(alpha, y_s, lay, sigma2, 1.2, 0.7)
    assert a == pytest.approx(b, rel=1e-9)
