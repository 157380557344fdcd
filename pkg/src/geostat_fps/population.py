"""Finite population data model and sampled/nonsampled partitioning.

All downstream modules work in a canonical unit ordering: sampled regions
first (ordered by region id), sampled units within each region first.  The
``DesignMatrices`` object carries the permutations relating the canonical
order back to the order units were supplied in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FinitePopulation",
    "SampleIndex",
    "DesignMatrices",
    "GroupSummaries",
    "build_design_matrices",
    "group_summaries",
    "fp_functional",
]


class FinitePopulation:
    """A finite population of point-referenced units grouped into regions.

    Parameters
    ----------
    x, y : array-like, length T
        Planar coordinates of each unit.
    regions : array-like, length T
        Region label per unit.  Labels may be arbitrary hashables; they are
        remapped internally to dense indices 0..N-1 (sorted label order) and
        the originals kept for output.
    values : array-like, length T
        Outcome per unit; NaN marks an unknown (nonsampled, unobserved)
        value.
    ids : array-like, optional
        Unit identifiers; defaults to 0..T-1.
    """

    def __init__(self, x, y, regions, values, ids=None):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if not (np.isfinite(self.x).all() and np.isfinite(self.y).all()):
            raise ValueError("coordinates must be finite")
        T = self.x.size
        if self.y.size != T:
            raise ValueError("x and y must have equal length")
        self.values = np.asarray(values, dtype=float)
        if self.values.size != T:
            raise ValueError("values must have length T")
        regions = np.asarray(regions)
        if regions.size != T:
            raise ValueError("regions must have length T")
        self.region_labels, self.region_index = np.unique(regions, return_inverse=True)
        self.ids = np.arange(T) if ids is None else np.asarray(ids)
        if self.ids.size != T:
            raise ValueError("ids must have length T")

    @property
    def total(self):
        return self.x.size

    @property
    def n_regions(self):
        return self.region_labels.size

    @property
    def region_sizes(self):
        return np.bincount(self.region_index, minlength=self.n_regions)

    def coords(self):
        return np.column_stack([self.x, self.y])


class SampleIndex:
    """The sampled/nonsampled partition of a population.

    Built from a boolean mask over the population's units.  A region is
    sampled iff at least one of its units is.
    """

    def __init__(self, pop: FinitePopulation, sampled_mask):
        mask = np.asarray(sampled_mask, dtype=bool)
        if mask.size != pop.total:
            raise ValueError("sampled mask must have length T")
        if not mask.any():
            raise ValueError("at least one unit must be sampled")
        if np.isnan(pop.values[mask]).any():
            raise ValueError("sampled units must have observed values")
        self.pop = pop
        self.mask = mask
        self.m = np.bincount(pop.region_index[mask], minlength=pop.n_regions)
        self.sampled_regions = np.flatnonzero(self.m > 0)

    @property
    def n_sampled_regions(self):
        return self.sampled_regions.size

    @property
    def k(self):
        return int(self.mask.sum())

    @property
    def K(self):
        return self.pop.total - self.k


@dataclass
class DesignMatrices:
    """Indicator design matrices plus the canonical-order bookkeeping.

    ``X_s`` is k x N, ``X_ns`` is K x N, ``X_s1`` the compact k x n sampled
    block.  Region columns are in canonical order (sampled regions first).
    ``perm_s``/``perm_ns`` index into the original unit arrays; applying them
    yields the canonical [y_s : y_ns] stacking.
    """

    X_s: np.ndarray
    X_ns: np.ndarray
    X_s1: np.ndarray
    m: np.ndarray          # sampled counts per region, canonical region order
    M: np.ndarray          # region sizes, canonical region order
    n: int
    N: int
    perm_s: np.ndarray
    perm_ns: np.ndarray
    region_s: np.ndarray   # canonical region index per sampled unit
    region_ns: np.ndarray  # canonical region index per nonsampled unit
    region_labels: np.ndarray = field(default=None)

    @property
    def k(self):
        return self.perm_s.size

    @property
    def K(self):
        return self.perm_ns.size

    @property
    def T(self):
        return self.k + self.K

    def to_canonical(self, values):
        """Reorder a length-T per-unit vector into canonical order."""
        values = np.asarray(values)
        return np.concatenate([values[self.perm_s], values[self.perm_ns]])

    def from_canonical(self, values):
        """Invert :meth:`to_canonical`."""
        values = np.asarray(values)
        out = np.empty_like(values)
        out[self.perm_s] = values[: self.k]
        out[self.perm_ns] = values[self.k:]
        return out


def build_design_matrices(pop: FinitePopulation, s: SampleIndex) -> DesignMatrices:
    """Construct the indicator design matrices in canonical order.

    X_s = [oplus 1_{m_i} : O] over sampled regions; X_ns is block diagonal
    with the nonsampled units of sampled regions on top and all units of
    unsampled regions below.
    """
    if s.pop is not pop:
        raise ValueError("sample index was built for a different population")
    N = pop.n_regions
    n = s.n_sampled_regions
    if n == 0:
        raise ValueError("no sampled regions")
    # canonical region order: sampled regions (ascending dense id), then rest
    unsampled = np.setdiff1d(np.arange(N), s.sampled_regions)
    region_order = np.concatenate([s.sampled_regions, unsampled])
    rank = np.empty(N, dtype=int)
    rank[region_order] = np.arange(N)

    canon_region = rank[pop.region_index]
    order_key = np.lexsort((np.arange(pop.total), canon_region))
    sampled_sorted = s.mask[order_key]
    perm_s = order_key[sampled_sorted]
    # within-region: sampled units first is implied by the s/ns split; the
    # nonsampled part keeps region-major order
    perm_ns = order_key[~sampled_sorted]
    # perm_s must itself be region-major; lexsort above is stable so it is
    region_s = canon_region[perm_s]
    region_ns = canon_region[perm_ns]

    m = np.bincount(region_s, minlength=N)
    M_all = m + np.bincount(region_ns, minlength=N)
    if (m[:n] < 1).any():
        raise ValueError("every sampled region needs at least one sampled unit")

    k, K = perm_s.size, perm_ns.size
    X_s = np.zeros((k, N))
    X_s[np.arange(k), region_s] = 1.0
    X_ns = np.zeros((K, N))
    if K:
        X_ns[np.arange(K), region_ns] = 1.0
    X_s1 = X_s[:, :n].copy()
    return DesignMatrices(
        X_s=X_s, X_ns=X_ns, X_s1=X_s1, m=m, M=M_all, n=n, N=N,
        perm_s=perm_s, perm_ns=perm_ns, region_s=region_s,
        region_ns=region_ns, region_labels=pop.region_labels[region_order],
    )


@dataclass
class GroupSummaries:
    """Per-region sample means and variances in canonical region order.

    ``ybar`` and ``s2`` are NaN for regions where they are undefined
    (unsampled regions; ``s2`` also for singleton samples).
    """

    ybar: np.ndarray
    s2: np.ndarray
    m: np.ndarray
    M: np.ndarray
    n: int

    @property
    def N(self):
        return self.m.size


def group_summaries(pop: FinitePopulation, s: SampleIndex) -> GroupSummaries:
    """Sample mean and variance (divisor m_i - 1) per sampled region."""
    layout = build_design_matrices(pop, s)
    y_s = pop.values[layout.perm_s]
    N = layout.N
    ybar = np.full(N, np.nan)
    s2 = np.full(N, np.nan)
    for i in range(layout.n):
        yi = y_s[layout.region_s == i]
        ybar[i] = yi.mean()
        if yi.size > 1:
            s2[i] = yi.var(ddof=1)
    return GroupSummaries(ybar=ybar, s2=s2, m=layout.m, M=layout.M, n=layout.n)


def fp_functional(alpha, y_s, y_ns_draw):
    """Evaluate the linear finite population functional alpha' [y_s : y_ns].

    ``alpha`` is in canonical order with length k + K.  An empty
    ``y_ns_draw`` (census) gives alpha' y_s exactly.
    """
    alpha = np.asarray(alpha, dtype=float)
    y_s = np.asarray(y_s, dtype=float)
    y_ns = np.asarray(y_ns_draw, dtype=float)
    if alpha.size != y_s.size + y_ns.size:
        raise ValueError("weight vector length must equal k + K")
    return float(alpha[: y_s.size] @ y_s + alpha[y_s.size:] @ y_ns)
