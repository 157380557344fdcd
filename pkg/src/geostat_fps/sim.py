"""Synthetic population generation and two-stage cluster sampling.

A unit-square population is partitioned into a square grid of regions
(row-major from the lower-left cell).  Outcomes are y = mu + omega + eps
with omega a mean-zero exponential-covariance Gaussian process and eps
iid noise.  Defaults mirror the reference study scale: T = 2500 units,
10 x 10 regions, mu = 2, phi = 10, tau2 = 9, sigma2 = 4.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .covariance import MaternSpec, chol_with_jitter, matern_correlation, \
    pairwise_distances
from .population import FinitePopulation, SampleIndex

__all__ = [
    "SimConfig",
    "generate_population",
    "two_stage_sample",
    "replicate_study",
    "MAX_POPULATION",
]

MAX_POPULATION = 10_000


@dataclass(frozen=True)
class SimConfig:
    n_side: int = 10
    T: int = 2500
    mu: float = 2.0
    spec: MaternSpec = field(default_factory=lambda: MaternSpec(
        tau2=9.0, sigma2=4.0, phi=10.0))
    n_sampled_regions: int = 25
    frac_min: float = 0.2
    frac_max: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.n_side < 1 or self.T < 1:
            raise ValueError("n_side and T must be positive")
        if self.T > MAX_POPULATION:
            raise ValueError(
                f"T = {self.T} exceeds the dense-simulation cap {MAX_POPULATION}")
        if not (0.0 < self.frac_min <= self.frac_max <= 1.0):
            raise ValueError("need 0 < frac_min <= frac_max <= 1")
        if not (1 <= self.n_sampled_regions <= self.n_side ** 2):
            raise ValueError("n_sampled_regions must be in [1, n_side^2]")


def grid_region(x, y, n_side):
    """Row-major region index from the lower-left cell of the unit square."""
    col = np.clip((np.asarray(x) * n_side).astype(int), 0, n_side - 1)
    row = np.clip((np.asarray(y) * n_side).astype(int), 0, n_side - 1)
    return row * n_side + col


def generate_population(cfg: SimConfig) -> FinitePopulation:
    """Simulate a spatial finite population on the unit square.

    The spatial effect is drawn with a dense Cholesky factorization of the
    full T x T covariance, which is why T is capped.
    """
    rng = np.random.default_rng(cfg.seed)
    x = rng.uniform(size=cfg.T)
    y = rng.uniform(size=cfg.T)
    regions = grid_region(x, y, cfg.n_side)
    if cfg.spec.tau2 > 0:
        D = pairwise_distances(np.column_stack([x, y]))
        L = chol_with_jitter(
            cfg.spec.tau2 * matern_correlation(D, cfg.spec.phi, cfg.spec.eta))
        omega = L @ rng.standard_normal(cfg.T)
    else:
        omega = np.zeros(cfg.T)
    eps = np.sqrt(cfg.spec.sigma2) * rng.standard_normal(cfg.T)
    values = cfg.mu + omega + eps
    return FinitePopulation(x=x, y=y, regions=regions, values=values)


def two_stage_sample(pop: FinitePopulation, n_regions, frac_min, frac_max,
                     rng) -> SampleIndex:
    """Two-stage cluster sample: regions uniformly, then a uniform fraction.

    Each selected region gets its own fraction f ~ U(frac_min, frac_max) and
    m_i = max(1, round(f M_i)) units drawn without replacement.
    """
    sizes = pop.region_sizes
    nonempty = np.flatnonzero(sizes > 0)
    if n_regions > nonempty.size:
        raise ValueError("n_regions exceeds the number of nonempty regions")
    chosen = rng.choice(nonempty, size=n_regions, replace=False)
    mask = np.zeros(pop.total, dtype=bool)
    for r in chosen:
        units = np.flatnonzero(pop.region_index == r)
        f = rng.uniform(frac_min, frac_max)
        m = max(1, int(np.rint(f * units.size)))
        mask[rng.choice(units, size=m, replace=False)] = True
    return SampleIndex(pop, mask)


def replicate_study(cfg: SimConfig, n_replicates, fitters, seed=None):
    """Run the generate / sample / fit loop over replicate datasets.

    ``fitters`` maps a model name to a callable
    ``fit(pop, sample, alpha, seed) -> dict`` returning at least
    ``fp_mean``, ``ci_lo``, ``ci_hi`` and optionally ``waic``, ``waic_se``,
    ``D``, ``G``, ``P``.  ``alpha`` passed to each fitter is the
    population-mean weight vector (1/T) in canonical order.  Fit failures
    are recorded (``error`` key) and the study continues.

    Returns a list of replicate records; each holds the true functional
    value (``truth``) and one sub-record per model, with ``covered`` set
    from the credible interval.
    """
    base_seed = cfg.seed if seed is None else seed
    results = []
    for rep in range(n_replicates):
        rep_cfg = replace(cfg, seed=base_seed + 1000 * rep)
        pop = generate_population(rep_cfg)
        rng = np.random.default_rng(base_seed + 1000 * rep + 1)
        sample = two_stage_sample(pop, cfg.n_sampled_regions,
                                  cfg.frac_min, cfg.frac_max, rng)
        truth = float(pop.values.mean())
        alpha = np.full(pop.total, 1.0 / pop.total)
        record = {"replicate": rep, "truth": truth, "models": {}}
        for name, fit in fitters.items():
            try:
                out = dict(fit(pop, sample, alpha,
                               base_seed + 1000 * rep + 2))
                if "ci_lo" in out and "ci_hi" in out:
                    out["covered"] = bool(out["ci_lo"] <= truth <= out["ci_hi"])
            except Exception as exc:  # keep the study going
                out = {"error": f"{type(exc).__name__}: {exc}"}
            record["models"][name] = out
        results.append(record)
    return results


def study_summary(results, model_names=None):
    """Coverage and WAIC-ordering fractions across replicates."""
    if not results:
        raise ValueError("no replicates")
    if model_names is None:
        model_names = list(results[0]["models"])
    summary = {}
    for name in model_names:
        rows = [r["models"][name] for r in results if "error" not in r["models"][name]]
        summary[name] = {
            "n_ok": len(rows),
            "coverage": (np.mean([r["covered"] for r in rows if "covered" in r])
                         if rows else np.nan),
            "mean_waic": (np.mean([r["waic"] for r in rows if "waic" in r])
                          if any("waic" in r for r in rows) else np.nan),
        }
    return summary
