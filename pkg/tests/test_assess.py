import numpy as np
import pytest

from geostat_fps.assess import (d_score, gaussian_loglik_matrix,
                                gaussian_replicates, waic)


def test_waic_constant_likelihood():
    ll = np.full((4, 10), np.log(0.3))
    rep = waic(ll)
    assert rep.p_waic == 0.0
    assert rep.waic == pytest.approx(-2.0 * 4 * np.log(0.3))
    assert rep.se == 0.0


def test_waic_worked_example():
    # k = 1, L = 2, log-liks {-1, -3}
    rep = waic(np.array([[-1.0, -3.0]]))
    lpd = np.log((np.exp(-1) + np.exp(-3)) / 2)
    assert rep.lpd_hat == pytest.approx(lpd, abs=1e-12)
    assert rep.p_waic == pytest.approx(2.0)   # sample variance, ddof = 1
    assert rep.waic == pytest.approx(7.1324, abs=1e-3)


def test_waic_reordering_invariance(rng):
    ll = rng.normal(-2, 1, size=(6, 40))
    base = waic(ll)
    perm_obs = waic(ll[rng.permutation(6)])
    perm_draws = waic(ll[:, rng.permutation(40)])
    for other in (perm_obs, perm_draws):
        assert other.waic == pytest.approx(base.waic, rel=1e-12)
        assert other.se == pytest.approx(base.se, rel=1e-12)


def test_waic_draw_duplication_with_matched_divisor(rng):
    ll = rng.normal(-2, 1, size=(5, 30))
    dup = np.hstack([ll, ll])
    lpd = lambda m: (np.logaddexp.reduce(m, axis=1) - np.log(m.shape[1])).sum()
    assert lpd(dup) == pytest.approx(lpd(ll), abs=1e-12)
    # population-variance (ddof=0) penalty is exactly duplication-invariant
    p0 = ll.var(axis=1, ddof=0).sum()
    p0_dup = dup.var(axis=1, ddof=0).sum()
    assert p0_dup == pytest.approx(p0, abs=1e-12)


def test_waic_needs_two_draws():
    with pytest.raises(ValueError):
        waic(np.array([[-1.0]]))


def test_waic_se_formula(rng):
    ll = rng.normal(-2, 0.5, size=(8, 25))
    rep = waic(ll)
    lpd_h = np.logaddexp.reduce(ll, axis=1) - np.log(25)
    elpd_h = lpd_h - ll.var(axis=1, ddof=1)
    assert rep.se == pytest.approx(2.0 * elpd_h.std(ddof=1) * np.sqrt(8))
    assert rep.p_waic >= 0.0


def test_logsumexp_agrees_with_naive(rng):
    ll = rng.uniform(-5, -1, size=(3, 50))
    rep = waic(ll)
    naive = np.log(np.exp(ll).mean(axis=1)).sum()
    assert rep.lpd_hat == pytest.approx(naive, rel=1e-12)


def test_gaussian_loglik_matrix_shapes_and_peak():
    y = np.array([1.0, 2.0])
    means = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])   # L=3 draws
    variances = np.array([[2.0, 2.0]] * 3)
    ll = gaussian_loglik_matrix(y, means, variances)
    assert ll.shape == (2, 3)
    # at the mean, log density is -0.5 log(2 pi sigma2)
    assert ll[0, 0] == pytest.approx(-0.5 * np.log(2 * np.pi * 2.0))
    with pytest.raises(ValueError):
        gaussian_loglik_matrix(y, means, np.zeros_like(variances))


def test_d_score_identities():
    y = np.array([1.0, 2.0, 3.0])
    rep = np.repeat(y[:, None], 5, axis=1)
    d = d_score(rep, y)
    assert d.D == d.G == d.P == 0.0
    d2 = d_score(rep + 1.0, y)
    assert d2.G == pytest.approx(3.0)   # unit shift per obs -> G = k
    assert d2.P == 0.0
    assert d2.D == pytest.approx(d2.G + d2.P, abs=1e-12)


def test_d_score_mc_penalty(rng):
    # iid standard normal replicates centered at y: E[P] = k
    y = rng.normal(size=20)
    rep = y[:, None] + rng.standard_normal((20, 4000))
    d = d_score(rep, y)
    assert d.P == pytest.approx(20.0, rel=0.1)
    assert d.D == pytest.approx(d.G + d.P, rel=1e-12)


def test_gaussian_replicates_moments(rng):
    means = np.full((3000, 2), [1.0, -2.0])
    variances = np.full((3000, 2), 4.0)
    rep = gaussian_replicates(means, variances, seed=3)
    assert rep.shape == (2, 3000)
    assert rep[0].mean() == pytest.approx(1.0, abs=3 * 2 / np.sqrt(3000))
    assert rep[1].std(ddof=1) == pytest.approx(2.0, rel=0.1)
    # zero variance -> replicates equal conditional means
    rep0 = gaussian_replicates(means, np.zeros_like(variances), seed=3)
    np.testing.assert_array_equal(rep0, means.T)
