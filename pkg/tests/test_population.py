import numpy as np
import pytest

from geostat_fps.population import (FinitePopulation, SampleIndex,
                                    build_design_matrices, fp_functional,
                                    group_summaries)


def small_pop(values=None, mask=None):
    # 3 regions x 3 units, regions interleaved to exercise reordering
    regions = np.array([2, 0, 1, 0, 2, 1, 0, 1, 2])
    if values is None:
        values = np.arange(9, dtype=float)
    pop = FinitePopulation(x=np.linspace(0, 1, 9), y=np.linspace(1, 0, 9),
                           regions=regions, values=values)
    if mask is None:
        mask = np.array([0, 1, 1, 0, 0, 0, 1, 0, 0], dtype=bool)
    return pop, SampleIndex(pop, mask)


def test_region_relabeling_dense():
    pop = FinitePopulation(x=[0, 1, 2], y=[0, 0, 0],
                           regions=["b", "a", "b"], values=[1.0, 2.0, 3.0])
    assert pop.n_regions == 2
    assert list(pop.region_index) == [1, 0, 1]
    assert list(pop.region_labels) == ["a", "b"]


def test_sampled_units_must_be_observed():
    vals = np.array([1.0, np.nan, 3.0])
    pop = FinitePopulation(x=[0, 1, 2], y=[0, 0, 0], regions=[0, 0, 1],
                           values=vals)
    with pytest.raises(ValueError):
        SampleIndex(pop, np.array([True, True, False]))


def test_canonical_order_sampled_regions_first():
    pop, s = small_pop()
    lay = build_design_matrices(pop, s)
    # sampled: units 1 (reg 0), 2 (reg 1), 6 (reg 0)
    assert lay.n == 2 and lay.N == 3
    assert lay.k == 3 and lay.K == 6 and lay.T == 9
    # canonical regions: 0, 1 sampled then 2
    assert list(lay.region_s) == [0, 0, 1]
    # sampled units within sampled regions keep stable order
    assert list(lay.perm_s) == [1, 6, 2]
    # X_s rows are one-hot on the unit's canonical region
    assert lay.X_s.shape == (3, 3)
    np.testing.assert_array_equal(lay.X_s.sum(axis=1), np.ones(3))
    np.testing.assert_array_equal(lay.X_s[:, :2], lay.X_s1)
    # m / M bookkeeping
    np.testing.assert_array_equal(lay.m, [2, 1, 0])
    np.testing.assert_array_equal(lay.M, [3, 3, 3])


def test_to_from_canonical_round_trip():
    pop, s = small_pop()
    lay = build_design_matrices(pop, s)
    v = np.arange(9, dtype=float) * 1.5
    np.testing.assert_array_equal(lay.from_canonical(lay.to_canonical(v)), v)
    canon = lay.to_canonical(v)
    np.testing.assert_array_equal(canon[: lay.k], v[lay.perm_s])


def test_empty_sampled_region_rejected():
    pop, _ = small_pop()
    with pytest.raises(ValueError):
        SampleIndex(pop, np.zeros(9, dtype=bool))


def test_group_summaries_nan_for_undefined():
    pop, s = small_pop()
    gs = group_summaries(pop, s)
    # region 0 has units 1 and 6 sampled -> ybar (1+6)/2, ddof=1 variance
    assert gs.ybar[0] == pytest.approx(3.5)
    assert gs.s2[0] == pytest.approx(np.var([1.0, 6.0], ddof=1))
    # region 1 singleton: variance undefined
    assert gs.ybar[1] == pytest.approx(2.0)
    assert np.isnan(gs.s2[1])
    # unsampled region: both undefined
    assert np.isnan(gs.ybar[2]) and np.isnan(gs.s2[2])


def test_fp_functional_census_exact():
    y_s = np.array([1.0, 2.0, 4.0])
    alpha = np.array([0.5, 0.25, 0.25])
    assert fp_functional(alpha, y_s, np.zeros(0)) == pytest.approx(0.5 + 0.5 + 1.0)
    with pytest.raises(ValueError):
        fp_functional(alpha, y_s, np.array([1.0]))


def test_fp_functional_mean_weighting():
    y_s = np.array([2.0, 2.0])
    y_ns = np.array([4.0])
    alpha = np.full(3, 1.0 / 3.0)
    assert fp_functional(alpha, y_s, y_ns) == pytest.approx(8.0 / 3.0)
