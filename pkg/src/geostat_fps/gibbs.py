"""Gibbs / Metropolis samplers for the four hierarchical survey models.

Model kinds:

* ``two_stage``          - region means, independent units given the mean.
* ``spatial``            - single intercept plus a Gaussian process.
* ``two_stage_spatial``  - region means plus a shared Gaussian process.
* ``regional_spatial``   - region means plus independent per-region processes
                           (block-diagonal covariance; per-region solves).

The nonsampled outcomes are a data-augmentation block: mean and variance
conditionals include the currently imputed units.  The spatial effects are
redrawn from their exact conditional after imputation, while the decay
update and the imputation itself work on the spatial-effect-marginalized
likelihood (a valid partially collapsed scan).

Scan order per iteration: nu -> mu -> variances -> phi -> y_ns -> omega -> fp.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .covariance import chol_with_jitter, matern_correlation, pairwise_distances
from .population import FinitePopulation, SampleIndex, build_design_matrices

__all__ = [
    "IGPrior",
    "UniformPrior",
    "ModelSpec",
    "SurveyData",
    "ChainState",
    "PosteriorDraws",
    "run_chain",
    "run_parallel_chains",
    "update_variances",
    "update_phi_mh",
    "impute_yns",
    "recover_omega",
    "pointwise_moments",
    "split_rhat",
    "effective_sample_size",
    "ChainDiverged",
]

MODEL_KINDS = ("two_stage", "spatial", "two_stage_spatial", "regional_spatial")


class ChainDiverged(RuntimeError):
    """Raised when a conditional produces a non-finite parameter."""


@dataclass(frozen=True)
class IGPrior:
    shape: float
    scale: float

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise ValueError("IG prior needs positive shape and scale")

    @property
    def mean(self):
        if self.shape <= 1:
            raise ValueError("IG mean undefined for shape <= 1")
        return self.scale / (self.shape - 1.0)


@dataclass(frozen=True)
class UniformPrior:
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 < self.lo < self.hi):
            raise ValueError("uniform phi prior needs 0 < lo < hi")

    @property
    def mid(self):
        return 0.5 * (self.lo + self.hi)


@dataclass
class ModelSpec:
    """Model kind, priors, and optional pinned parameters.

    ``fixed`` keys: ``gamma2``, ``delta2``, ``tau2``, ``sigma2``, ``phi``
    (pin a sampled parameter) and ``sigma2_unsampled`` / ``tau2_unsampled``
    / ``phi_unsampled`` (values for unsampled regions; default to the prior
    mean / prior midpoint as applicable).
    """

    kind: str
    sigma2_prior: IGPrior = IGPrior(2.0, 10.0)
    tau2_prior: IGPrior = IGPrior(2.0, 10.0)
    delta2_prior: IGPrior = IGPrior(2.0, 10.0)
    gamma2_prior: IGPrior = IGPrior(2.0, 10.0)
    phi_prior: UniformPrior = UniformPrior(5.0, 15.0)
    nu_prior: str = "flat"          # "flat" | "normal"
    eta: float = 0.5
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.nu_prior not in ("flat", "normal"):
            raise ValueError("nu prior must be 'flat' or 'normal'")

    @property
    def is_spatial(self):
        return self.kind != "two_stage"

    @property
    def has_regions(self):
        return self.kind != "spatial"


class SurveyData:
    """Canonical-order view of a sampled finite population."""

    def __init__(self, pop: FinitePopulation, sample: SampleIndex):
        self.layout = build_design_matrices(pop, sample)
        lay = self.layout
        self.y_s = pop.values[lay.perm_s].copy()
        self.coords = np.vstack([pop.coords()[lay.perm_s],
                                 pop.coords()[lay.perm_ns]])
        self.region = np.concatenate([lay.region_s, lay.region_ns])
        self.k, self.K = lay.k, lay.K
        self.T, self.N, self.n = lay.T, lay.N, lay.n
        self.m, self.M = lay.m, lay.M
        # full-y indices per region (sampled units first within region)
        self.units_by_region = [
            np.concatenate([np.flatnonzero(lay.region_s == i),
                            self.k + np.flatnonzero(lay.region_ns == i)])
            for i in range(self.N)
        ]
        self.s_by_region = [np.flatnonzero(lay.region_s == i) for i in range(self.N)]
        self.ns_by_region = [np.flatnonzero(lay.region_ns == i) for i in range(self.N)]
        self._dist = None
        self._dist_region = {}

    @property
    def dist(self):
        if self._dist is None:
            self._dist = pairwise_distances(self.coords)
        return self._dist

    def dist_region(self, i):
        if i not in self._dist_region:
            idx = self.units_by_region[i]
            self._dist_region[i] = pairwise_distances(self.coords[idx])
        return self._dist_region[i]

    def design_row_region(self):
        """Canonical region index per full-y unit."""
        return self.region


@dataclass
class ChainState:
    nu: float
    mu: np.ndarray
    delta2: float
    sigma2: np.ndarray          # scalar models store a length-1 array
    gamma2: float = np.nan
    tau2: np.ndarray = None     # scalar or per-region
    phi: np.ndarray = None
    omega: np.ndarray = None
    y_ns: np.ndarray = None

    def copy(self):
        return ChainState(
            nu=self.nu, mu=self.mu.copy(), delta2=self.delta2,
            sigma2=self.sigma2.copy(), gamma2=self.gamma2,
            tau2=None if self.tau2 is None else np.array(self.tau2, copy=True),
            phi=None if self.phi is None else np.array(self.phi, copy=True),
            omega=None if self.omega is None else self.omega.copy(),
            y_ns=None if self.y_ns is None else self.y_ns.copy(),
        )


@dataclass
class PosteriorDraws:
    kind: str
    nu: np.ndarray
    mu: np.ndarray
    delta2: np.ndarray
    sigma2: np.ndarray
    gamma2: np.ndarray
    tau2: Optional[np.ndarray]
    phi: Optional[np.ndarray]
    omega_s: Optional[np.ndarray]
    y_ns: np.ndarray
    fp: np.ndarray
    accept_rates: dict

    def __len__(self):
        return self.fp.size

    def fp_interval(self, level=0.95):
        lo = (1.0 - level) / 2.0
        return (float(np.quantile(self.fp, lo)),
                float(np.quantile(self.fp, 1.0 - lo)))


def _sigma2_of_units(state, data, spec):
    """Per full-y-unit nugget variance."""
    if spec.kind == "spatial":
        return np.full(data.T, state.sigma2[0])
    return state.sigma2[data.region]


def _mu_of_units(state, data, spec):
    if spec.kind == "spatial":
        return np.full(data.T, state.mu[0])
    return state.mu[data.region]


def _check_finite(value, block):
    if not np.all(np.isfinite(value)):
        raise ChainDiverged(f"non-finite value in block {block!r}")
    return value


def _init_state(spec: ModelSpec, data: SurveyData, rng) -> ChainState:
    y_s = data.y_s
    overall = float(y_s.mean())
    mu = np.full(1 if spec.kind == "spatial" else data.N, overall)
    s2 = np.full(1 if spec.kind == "spatial" else data.N,
                 max(float(y_s.var(ddof=1)), 1e-6) if y_s.size > 1 else 1.0)
    if spec.has_regions:
        for i in range(data.n):
            yi = y_s[data.s_by_region[i]]
            mu[i] = yi.mean()
            if yi.size > 1:
                s2[i] = max(yi.var(ddof=1), 1e-6)
        s2[data.n:] = spec.fixed.get("sigma2_unsampled", spec.sigma2_prior.mean)
    if "sigma2" in spec.fixed:
        s2[:] = spec.fixed["sigma2"]
    group_var = float(mu[:data.n].var(ddof=1)) if spec.has_regions and data.n > 1 else 1.0
    state = ChainState(
        nu=overall,
        mu=mu,
        delta2=spec.fixed.get("delta2", max(group_var, 1e-3)),
        sigma2=s2,
        gamma2=spec.fixed.get("gamma2", spec.gamma2_prior.mean),
        y_ns=np.zeros(data.K),
    )
    if spec.is_spatial:
        var0 = float(y_s.var(ddof=1)) if y_s.size > 1 else 1.0
        base_tau = spec.fixed.get("tau2", max(var0 * 0.5, 1e-3))
        base_phi = spec.fixed.get("phi", spec.phi_prior.mid)
        if spec.kind == "regional_spatial":
            state.tau2 = np.full(data.N, base_tau)
            state.phi = np.full(data.N, base_phi)
            state.tau2[data.n:] = spec.fixed.get("tau2_unsampled", spec.tau2_prior.mean)
            state.phi[data.n:] = spec.fixed.get("phi_unsampled", spec.phi_prior.mid)
        else:
            state.tau2 = np.array([base_tau])
            state.phi = np.array([base_phi])
        state.omega = np.zeros(data.T)
    state.y_ns = _mu_of_units(state, data, spec)[data.k:].copy()
    return state


def _update_nu(state, data, spec, rng):
    if spec.kind == "spatial":
        return state
    prec = data.N / state.delta2
    mean_num = state.mu.sum() / state.delta2
    if spec.nu_prior == "normal":
        prec += 1.0 / state.gamma2
    var = 1.0 / prec
    state.nu = _check_finite(mean_num * var + np.sqrt(var) * rng.standard_normal(), "nu")
    return state


def _update_mu(state, data, spec, rng):
    y = np.concatenate([data.y_s, state.y_ns])
    resid = y - (state.omega if spec.is_spatial else 0.0)
    if spec.kind == "spatial":
        prec = 1.0 / state.delta2 + data.T / state.sigma2[0]
        mean = (resid.sum() / state.sigma2[0]) / prec
        state.mu[0] = mean + rng.standard_normal() / np.sqrt(prec)
    else:
        for i in range(data.N):
            idx = data.units_by_region[i]
            prec = 1.0 / state.delta2 + idx.size / state.sigma2[i]
            mean = (state.nu / state.delta2
                    + resid[idx].sum() / state.sigma2[i]) / prec
            state.mu[i] = mean + rng.standard_normal() / np.sqrt(prec)
    _check_finite(state.mu, "mu")
    return state


def _draw_ig(rng, shape, scale):
    if not (np.isfinite(shape) and np.isfinite(scale)) or shape <= 0 or scale <= 0:
        raise ChainDiverged("invalid inverse gamma parameters in variance update")
    return scale / rng.gamma(shape, 1.0)


def update_variances(state, data, spec, rng):
    """Draw every free variance component from its conditional IG."""
    y = np.concatenate([data.y_s, state.y_ns])
    resid = y - _mu_of_units(state, data, spec)
    if spec.is_spatial:
        resid = resid - state.omega

    # nugget variances
    if "sigma2" not in spec.fixed:
        pr = spec.sigma2_prior
        if spec.kind == "spatial":
            state.sigma2[0] = _draw_ig(rng, pr.shape + 0.5 * data.T,
                                       pr.scale + 0.5 * float(resid @ resid))
        else:
            for i in range(data.n):
                idx = data.units_by_region[i]
                r = resid[idx]
                state.sigma2[i] = _draw_ig(rng, pr.shape + 0.5 * idx.size,
                                           pr.scale + 0.5 * float(r @ r))
            # unsampled-region variances stay pinned

    # group-mean variance delta2
    if "delta2" not in spec.fixed:
        pr = spec.delta2_prior
        if spec.kind == "spatial":
            dev2 = float(state.mu[0] ** 2)
            state.delta2 = _draw_ig(rng, pr.shape + 0.5, pr.scale + 0.5 * dev2)
        else:
            dev = state.mu - state.nu
            state.delta2 = _draw_ig(rng, pr.shape + 0.5 * data.N,
                                    pr.scale + 0.5 * float(dev @ dev))

    # superpopulation-mean variance gamma2
    if spec.nu_prior == "normal" and "gamma2" not in spec.fixed \
            and spec.kind != "spatial":
        pr = spec.gamma2_prior
        state.gamma2 = _draw_ig(rng, pr.shape + 0.5,
                                pr.scale + 0.5 * state.nu ** 2)

    # spatial variances
    if spec.is_spatial and "tau2" not in spec.fixed:
        pr = spec.tau2_prior
        if spec.kind == "regional_spatial":
            for i in range(data.n):
                idx = data.units_by_region[i]
                R = matern_correlation(data.dist_region(i), state.phi[i], spec.eta)
                cw = chol_with_jitter(R)
                v = np.linalg.solve(cw, state.omega[idx])
                state.tau2[i] = _draw_ig(rng, pr.shape + 0.5 * idx.size,
                                         pr.scale + 0.5 * float(v @ v))
        else:
            R = matern_correlation(data.dist, state.phi[0], spec.eta)
            cw = chol_with_jitter(R)
            v = np.linalg.solve(cw, state.omega)
            state.tau2[0] = _draw_ig(rng, pr.shape + 0.5 * data.T,
                                     pr.scale + 0.5 * float(v @ v))
    return state


def _marginal_ys_loglik(phi, tau2, state, data, spec, region=None):
    """log N(y_s | X_s mu, tau2 R_s(phi) + V_s^sigma), the decay target.

    With ``region`` given, only that region's sampled units enter
    (regional_spatial).
    """
    if region is None:
        idx = np.arange(data.k)
        D = data.dist[np.ix_(idx, idx)]
        mu = _mu_of_units(state, data, spec)[:data.k]
        nug = _sigma2_of_units(state, data, spec)[:data.k]
        r = data.y_s - mu
    else:
        s_idx = data.s_by_region[region]
        u = data.units_by_region[region]
        local_s = np.arange(s_idx.size)
        D = data.dist_region(region)[np.ix_(local_s, local_s)]
        r = data.y_s[s_idx] - state.mu[region]
        nug = np.full(s_idx.size, state.sigma2[region])
    C = tau2 * matern_correlation(D, phi, spec.eta) + np.diag(nug)
    cw = chol_with_jitter(C)
    v = np.linalg.solve(cw, r)
    return -float(np.log(np.diag(cw)).sum()) - 0.5 * float(v @ v)


def update_phi_mh(state, data, spec, rng, log_step):
    """Log-scale random-walk Metropolis on the decay parameter(s).

    Targets the spatial-effect-marginalized likelihood of the sampled data
    at the current means and variances; proposals outside the uniform prior
    support are rejected outright.  Returns the per-parameter accept flags.
    """
    if not spec.is_spatial or "phi" in spec.fixed:
        return state, np.zeros(0, dtype=bool)
    lo, hi = spec.phi_prior.lo, spec.phi_prior.hi
    if spec.kind == "regional_spatial":
        accepted = np.zeros(data.n, dtype=bool)
        for i in range(data.n):
            prop = state.phi[i] * np.exp(log_step[i] * rng.standard_normal())
            if not (lo < prop < hi):
                continue
            cur = _marginal_ys_loglik(state.phi[i], state.tau2[i], state, data,
                                      spec, region=i)
            new = _marginal_ys_loglik(prop, state.tau2[i], state, data,
                                      spec, region=i)
            # Hastings correction for the multiplicative proposal
            if np.log(rng.uniform()) < new - cur + np.log(prop / state.phi[i]):
                state.phi[i] = prop
                accepted[i] = True
        return state, accepted
    prop = state.phi[0] * np.exp(log_step[0] * rng.standard_normal())
    accepted = np.zeros(1, dtype=bool)
    if lo < prop < hi:
        cur = _marginal_ys_loglik(state.phi[0], state.tau2[0], state, data, spec)
        new = _marginal_ys_loglik(prop, state.tau2[0], state, data, spec)
        if np.log(rng.uniform()) < new - cur + np.log(prop / state.phi[0]):
            state.phi[0] = prop
            accepted[0] = True
    return state, accepted


def _cov_blocks(state, data, spec):
    """Marginal covariance of the full outcome given mu and theta."""
    nug = _sigma2_of_units(state, data, spec)
    if spec.kind == "regional_spatial":
        C = np.zeros((data.T, data.T))
        for i in range(data.N):
            idx = data.units_by_region[i]
            Ri = matern_correlation(data.dist_region(i), state.phi[i], spec.eta)
            C[np.ix_(idx, idx)] = state.tau2[i] * Ri
        C[np.diag_indices(data.T)] += nug
        return C
    C = state.tau2[0] * matern_correlation(data.dist, state.phi[0], spec.eta)
    C[np.diag_indices(data.T)] += nug
    return C


def impute_yns(state, data, spec, rng):
    """Draw y_ns from its Gaussian conditional given y_s and the state."""
    if data.K == 0:
        state.y_ns = np.zeros(0)
        return state
    mu_units = _mu_of_units(state, data, spec)
    if not spec.is_spatial:
        sd = np.sqrt(_sigma2_of_units(state, data, spec)[data.k:])
        state.y_ns = mu_units[data.k:] + sd * rng.standard_normal(data.K)
        return state
    if spec.kind == "regional_spatial":
        y_ns = np.empty(data.K)
        for i in range(data.N):
            ns_loc = data.ns_by_region[i]
            if ns_loc.size == 0:
                continue
            s_loc = data.s_by_region[i]
            u = data.units_by_region[i]
            Ci = state.tau2[i] * matern_correlation(
                data.dist_region(i), state.phi[i], spec.eta)
            Ci[np.diag_indices(u.size)] += state.sigma2[i]
            ks = s_loc.size
            mean = np.full(ns_loc.size, state.mu[i])
            cond = Ci[ks:, ks:]
            if ks:
                cw = cho_factor(Ci[:ks, :ks])
                H = cho_solve(cw, Ci[:ks, ks:]).T
                mean = mean + H @ (data.y_s[s_loc] - state.mu[i])
                cond = cond - H @ Ci[:ks, ks:]
            Lc = chol_with_jitter(cond)
            y_ns[ns_loc] = mean + Lc @ rng.standard_normal(ns_loc.size)
        state.y_ns = _check_finite(y_ns, "y_ns")
        return state
    C = _cov_blocks(state, data, spec)
    k = data.k
    cw = cho_factor(C[:k, :k])
    H = cho_solve(cw, C[:k, k:]).T
    mean = mu_units[k:] + H @ (data.y_s - mu_units[:k])
    cond = C[k:, k:] - H @ C[:k, k:]
    Lc = chol_with_jitter(cond)
    state.y_ns = _check_finite(mean + Lc @ rng.standard_normal(data.K), "y_ns")
    return state


def recover_omega(state, data, spec, rng):
    """Draw the spatial effects from their exact conditional given full y.

    omega | y, mu, theta ~ N(M m, M) with M = (Omega^{-1} + V^{-1})^{-1},
    m = V^{-1}(y - X mu).  Sampled by conditional simulation: a prior pair
    (omega*, eps*) is corrected through Omega (Omega + V)^{-1}, which avoids
    forming M explicitly.  regional_spatial works blockwise.
    """
    if not spec.is_spatial:
        return state
    y = np.concatenate([data.y_s, state.y_ns])
    r = y - _mu_of_units(state, data, spec)
    if spec.kind == "regional_spatial":
        omega = np.empty(data.T)
        for i in range(data.N):
            idx = data.units_by_region[i]
            R = matern_correlation(data.dist_region(i), state.phi[i], spec.eta)
            omega[idx] = _draw_omega_block(
                R, state.tau2[i], np.full(idx.size, state.sigma2[i]),
                r[idx], rng)
        state.omega = _check_finite(omega, "omega")
        return state
    R = matern_correlation(data.dist, state.phi[0], spec.eta)
    nug = _sigma2_of_units(state, data, spec)
    state.omega = _check_finite(
        _draw_omega_block(R, state.tau2[0], nug, r, rng), "omega")
    return state


def _draw_omega_block(R, tau2, nug, r, rng):
    T = r.size
    LR = chol_with_jitter(R)
    omega_star = np.sqrt(tau2) * (LR @ rng.standard_normal(T))
    eps_star = np.sqrt(nug) * rng.standard_normal(T)
    Omega = tau2 * R
    C = Omega + np.diag(nug)
    cw = cho_factor(C)
    return omega_star + Omega @ cho_solve(cw, r - omega_star - eps_star)


def run_chain(spec: ModelSpec, data: SurveyData, alpha, iters=5000,
              burnin=1000, seed=0, init=None) -> PosteriorDraws:
    """Run one systematic-scan chain and return post-burn-in draws.

    The decay proposal scale adapts toward 30-45% acceptance during burn-in
    and is frozen afterwards.
    """
    if iters <= burnin:
        raise ValueError("iters must exceed burnin")
    rng = np.random.default_rng(seed)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size != data.T:
        raise ValueError("alpha must have length T")
    state = init.copy() if init is not None else _init_state(spec, data, rng)

    n_phi = (data.n if spec.kind == "regional_spatial" else 1) if spec.is_spatial else 0
    log_step = np.full(max(n_phi, 1), 0.5)
    acc_window = np.zeros(max(n_phi, 1))
    win = 0
    acc_total = np.zeros(max(n_phi, 1))
    phi_tries = 0

    keep = iters - burnin
    rec = {name: [] for name in
           ("nu", "mu", "delta2", "sigma2", "gamma2", "tau2", "phi",
            "omega_s", "y_ns", "fp")}
    for it in range(iters):
        state = _update_nu(state, data, spec, rng)
        state = _update_mu(state, data, spec, rng)
        state = update_variances(state, data, spec, rng)
        if spec.is_spatial:
            state, accepted = update_phi_mh(state, data, spec, rng, log_step)
            if accepted.size:
                acc_window[: accepted.size] += accepted
                win += 1
                phi_tries += 1
                acc_total[: accepted.size] += accepted
                if it < burnin and win == 50:
                    rate = acc_window[:n_phi] / win
                    log_step[:n_phi] *= np.exp(np.clip(rate - 0.375, -0.5, 0.5))
                    log_step[:n_phi] = np.clip(log_step[:n_phi], 1e-3, 5.0)
                    acc_window[:] = 0.0
                    win = 0
        state = impute_yns(state, data, spec, rng)
        state = recover_omega(state, data, spec, rng)
        if it >= burnin:
            rec["nu"].append(state.nu if spec.kind != "spatial" else state.mu[0])
            rec["mu"].append(state.mu.copy())
            rec["delta2"].append(state.delta2)
            rec["sigma2"].append(state.sigma2.copy())
            rec["gamma2"].append(state.gamma2)
            if spec.is_spatial:
                rec["tau2"].append(np.array(state.tau2, copy=True))
                rec["phi"].append(np.array(state.phi, copy=True))
                rec["omega_s"].append(state.omega[: data.k].copy())
            rec["y_ns"].append(state.y_ns.copy())
            rec["fp"].append(float(alpha[: data.k] @ data.y_s
                                   + alpha[data.k:] @ state.y_ns))
    accept = {}
    if spec.is_spatial and phi_tries:
        accept["phi"] = acc_total[:n_phi] / phi_tries
    return PosteriorDraws(
        kind=spec.kind,
        nu=np.array(rec["nu"]),
        mu=np.array(rec["mu"]),
        delta2=np.array(rec["delta2"]),
        sigma2=np.array(rec["sigma2"]),
        gamma2=np.array(rec["gamma2"]),
        tau2=np.array(rec["tau2"]) if spec.is_spatial else None,
        phi=np.array(rec["phi"]) if spec.is_spatial else None,
        omega_s=np.array(rec["omega_s"]) if spec.is_spatial else None,
        y_ns=np.array(rec["y_ns"]),
        fp=np.array(rec["fp"]),
        accept_rates=accept,
    )


def pointwise_moments(draws: PosteriorDraws, data: SurveyData):
    """Per-draw conditional mean and variance of each sampled observation.

    Spatial models condition on the recovered spatial effects, so the
    pointwise density factorizes over observations.
    """
    L = len(draws)
    if draws.kind == "spatial":
        means = draws.mu[:, [0] * data.k] + draws.omega_s
        variances = np.repeat(draws.sigma2, data.k).reshape(L, data.k)
    elif draws.kind == "two_stage":
        means = draws.mu[:, data.region[: data.k]]
        variances = draws.sigma2[:, data.region[: data.k]]
    else:
        means = draws.mu[:, data.region[: data.k]] + draws.omega_s
        variances = draws.sigma2[:, data.region[: data.k]]
    return means, variances


def pointwise_loglik(draws: PosteriorDraws, data: SurveyData):
    from .assess import gaussian_loglik_matrix
    means, variances = pointwise_moments(draws, data)
    return gaussian_loglik_matrix(data.y_s, means, variances)


def replicate_draws(draws: PosteriorDraws, data: SurveyData, seed=0):
    from .assess import gaussian_replicates
    means, variances = pointwise_moments(draws, data)
    return gaussian_replicates(means, variances, seed=seed)


def split_rhat(chains):
    """Split-R-hat for a (n_chains, L) array of draws of one scalar."""
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2:
        raise ValueError("chains must be (n_chains, L)")
    n_chains, L = x.shape
    half = L // 2
    if half < 2:
        return np.nan
    splits = np.vstack([x[:, :half], x[:, half: 2 * half]])
    m, n = splits.shape
    means = splits.mean(axis=1)
    W = splits.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W <= 0:
        return np.nan
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def effective_sample_size(chains):
    """Crude ESS using Geyer's initial positive sequence per chain."""
    x = np.asarray(chains, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    n_chains, L = x.shape
    ess = 0.0
    for c in range(n_chains):
        v = x[c] - x[c].mean()
        var = float(v @ v) / L
        if var == 0:
            ess += L
            continue
        acf = np.correlate(v, v, mode="full")[L - 1:] / (L * var)
        s = 1.0
        t = 1
        while t + 1 < L:
            pair = acf[t] + acf[t + 1]
            if pair < 0:
                break
            s += 2.0 * pair
            t += 2
        ess += L / s
    return float(ess)


def run_parallel_chains(spec, data, alpha, n_chains, iters, burnin, seeds):
    """Independent chains plus split-R-hat / ESS for the scalar parameters."""
    seeds = list(seeds)
    if len(seeds) != n_chains:
        raise ValueError("need one seed per chain")
    if len(set(seeds)) != n_chains:
        raise ValueError("seeds must be distinct")
    chains = [run_chain(spec, data, alpha, iters=iters, burnin=burnin, seed=s)
              for s in seeds]
    diag = {}
    scalars = {"nu": [c.nu for c in chains],
               "delta2": [c.delta2 for c in chains],
               "fp": [c.fp for c in chains]}
    for name, series in scalars.items():
        arr = np.vstack(series)
        diag[name] = {
            "rhat": split_rhat(arr) if n_chains > 1 else None,
            "ess": effective_sample_size(arr),
        }
    return chains, diag
