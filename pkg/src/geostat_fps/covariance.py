"""Matern covariance construction, distances, and variogram tools."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, least_squares
from scipy.spatial.distance import pdist, squareform
from scipy.special import gamma as gamma_fn
from scipy.special import kv

__all__ = [
    "MaternSpec",
    "PartitionedCovariance",
    "VariogramFit",
    "pairwise_distances",
    "matern",
    "matern_correlation",
    "effective_range",
    "build_omega",
    "chol_with_jitter",
    "empirical_variogram",
    "fit_exponential_variogram",
]


@dataclass(frozen=True)
class MaternSpec:
    """Matern parameters: spatial variance tau2, nugget sigma2, decay phi,
    smoothness eta (eta = 1/2 is the exponential kernel)."""

    tau2: float
    sigma2: float
    phi: float
    eta: float = 0.5

    def __post_init__(self):
        for name in ("tau2", "sigma2", "phi", "eta"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.tau2 < 0 or self.sigma2 < 0:
            raise ValueError("tau2 and sigma2 must be nonnegative")
        if self.phi <= 0 or self.eta <= 0:
            raise ValueError("phi and eta must be positive")


@dataclass
class PartitionedCovariance:
    """Spatial covariance blocks (no nugget), partitioned by sample status."""

    omega_s: np.ndarray
    omega_s_ns: np.ndarray
    omega_ns: np.ndarray
    structure: str = "full"  # "full" | "block"

    def full(self):
        top = np.hstack([self.omega_s, self.omega_s_ns])
        bottom = np.hstack([self.omega_s_ns.T, self.omega_ns])
        return np.vstack([top, bottom])


def pairwise_distances(coords):
    """Symmetric Euclidean distance matrix for an (n, 2) coordinate array."""
    coords = np.asarray(coords, dtype=float)
    if not np.isfinite(coords).all():
        raise ValueError("coordinates must be finite")
    if coords.shape[0] < 2:
        return np.zeros((coords.shape[0], coords.shape[0]))
    return squareform(pdist(coords))


def matern_correlation(d, phi, eta=0.5):
    """Matern correlation at distance d (1 at d = 0)."""
    d = np.asarray(d, dtype=float)
    if (d < 0).any():
        raise ValueError("distances must be nonnegative")
    if eta == 0.5:
        return np.exp(-phi * d)
    u = np.sqrt(2.0 * eta) * d * phi
    out = np.ones_like(u)
    pos = u > 0
    up = u[pos]
    out[pos] = (2.0 ** (1.0 - eta) / gamma_fn(eta)) * up ** eta * kv(eta, up)
    return out


def matern(d, spec: MaternSpec):
    """Matern covariance; C(0) = sigma2 + tau2 (nugget included at zero)."""
    d = np.asarray(d, dtype=float)
    scalar = d.ndim == 0
    d = np.atleast_1d(d)
    out = spec.tau2 * matern_correlation(d, spec.phi, spec.eta)
    out[d == 0] += spec.sigma2
    return float(out[0]) if scalar else out


def effective_range(phi, eta=0.5):
    """Distance at which spatial correlation drops to 0.05 (3/phi for the
    exponential kernel)."""
    if phi <= 0:
        raise ValueError("phi must be positive")
    if eta == 0.5:
        return 3.0 / phi
    # correlation is monotone decreasing; bracket then bisect
    hi = 3.0 / phi
    while matern_correlation(hi, phi, eta) > 0.05:
        hi *= 2.0
    return brentq(lambda d: matern_correlation(d, phi, eta) - 0.05, 1e-12, hi)


def _spatial_cov(D, spec):
    # spatial part only: tau2 * correlation, no nugget anywhere
    return spec.tau2 * matern_correlation(D, spec.phi, spec.eta)


def build_omega(coords, spec, k, structure="full", regions=None):
    """Build the partitioned spatial covariance for canonically ordered units.

    ``coords`` is the (T, 2) coordinate array in canonical order, ``k`` the
    number of sampled units (the first k rows).  With ``structure="block"``,
    entries for units in different regions are exactly zero and ``spec`` may
    be a list with one MaternSpec per region (canonical region order);
    ``regions`` then gives the canonical region index per unit.
    """
    coords = np.asarray(coords, dtype=float)
    T = coords.shape[0]
    if structure == "full":
        D = pairwise_distances(coords)
        omega = _spatial_cov(D, spec)
    elif structure == "block":
        if regions is None:
            raise ValueError("block structure requires per-unit region indices")
        regions = np.asarray(regions)
        specs = spec if isinstance(spec, (list, tuple)) else None
        omega = np.zeros((T, T))
        for r in np.unique(regions):
            idx = np.flatnonzero(regions == r)
            sp = specs[int(r)] if specs is not None else spec
            Dr = pairwise_distances(coords[idx])
            omega[np.ix_(idx, idx)] = _spatial_cov(Dr, sp)
    else:
        raise ValueError(f"unknown structure {structure!r}")
    return PartitionedCovariance(
        omega_s=omega[:k, :k],
        omega_s_ns=omega[:k, k:],
        omega_ns=omega[k:, k:],
        structure=structure,
    )


def chol_with_jitter(A, jitter=None):
    """Lower Cholesky factor, adding diagonal jitter once on failure.

    The default jitter is 1e-8 times the mean diagonal.  Raises
    ``np.linalg.LinAlgError`` if the jittered attempt also fails.
    """
    A = np.asarray(A, dtype=float)
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        if jitter is None:
            jitter = 1e-8 * float(np.mean(np.diag(A)))
            if jitter <= 0:
                jitter = 1e-12
        return np.linalg.cholesky(A + jitter * np.eye(A.shape[0]))


def empirical_variogram(coords, values, n_bins=15, max_dist=None):
    """Classical Matheron semivariogram over equal-width distance bins.

    Returns (bin_centers, gamma, counts); empty bins have gamma = NaN.
    ``max_dist`` defaults to half the maximum pairwise distance.
    """
    coords = np.asarray(coords, dtype=float)
    values = np.asarray(values, dtype=float)
    if coords.shape[0] < 2:
        raise ValueError("need at least two points")
    d = pdist(coords)
    if d.max() == 0:
        raise ValueError("all points coincident")
    if max_dist is None:
        max_dist = 0.5 * d.max()
    if max_dist <= 0:
        raise ValueError("max_dist must be positive")
    dv = 0.5 * pdist(values[:, None], metric="sqeuclidean")
    keep = d <= max_dist
    d, dv = d[keep], dv[keep]
    edges = np.linspace(0.0, max_dist, n_bins + 1)
    which = np.clip(np.digitize(d, edges) - 1, 0, n_bins - 1)
    counts = np.bincount(which, minlength=n_bins)
    sums = np.bincount(which, weights=dv, minlength=n_bins)
    gamma = np.full(n_bins, np.nan)
    nz = counts > 0
    gamma[nz] = sums[nz] / counts[nz]
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, gamma, counts


@dataclass
class VariogramFit:
    """Exponential variogram fit: gamma(h) = nugget + psill (1 - e^{-3h/range})."""

    nugget: float
    partial_sill: float
    range: float
    identified: bool = True

    @property
    def phi(self):
        return 3.0 / self.range

    def __call__(self, h):
        h = np.asarray(h, dtype=float)
        return self.nugget + self.partial_sill * (1.0 - np.exp(-3.0 * h / self.range))


def fit_exponential_variogram(centers, gamma, counts):
    """Weighted least squares fit of the exponential variogram model.

    Weights are the per-bin pair counts; nonnegativity is enforced through
    bound constraints.  A flat empirical variogram yields a nugget-only fit
    flagged ``identified=False``.
    """
    centers = np.asarray(centers, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    counts = np.asarray(counts, dtype=float)
    ok = (counts > 0) & np.isfinite(gamma)
    if ok.sum() < 3:
        raise ValueError("need at least three nonempty bins")
    h, g, w = centers[ok], gamma[ok], np.sqrt(counts[ok])

    sill0 = max(g.max(), 1e-12)
    if g.max() - g.min() < 1e-12 * sill0:
        return VariogramFit(nugget=float(g.mean()), partial_sill=0.0,
                            range=float(h.max()), identified=False)

    def resid(p):
        nugget, psill, rng = p
        return w * (nugget + psill * (1.0 - np.exp(-3.0 * h / rng)) - g)

    p0 = np.array([max(g[0], 1e-6 * sill0), max(sill0 - g[0], 1e-6 * sill0),
                   max(h.mean(), 1e-6)])
    sol = least_squares(resid, p0, bounds=([0.0, 0.0, 1e-10],
                                           [np.inf, np.inf, np.inf]))
    nugget, psill, rng = sol.x
    identified = psill > 1e-10 * sill0
    return VariogramFit(nugget=float(nugget), partial_sill=float(psill),
                        range=float(rng), identified=bool(identified))
