"""Model comparison: WAIC with standard error and the D = G + P score.

WAIC follows the elpd convention: WAIC = -2 (lpd_hat - p_waic) with
p_waic the summed pointwise variances of the log likelihood over draws
and the inner average computed by log-sum-exp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "WaicReport",
    "DScore",
    "gaussian_loglik_matrix",
    "waic",
    "d_score",
    "gaussian_replicates",
]


@dataclass
class WaicReport:
    waic: float
    lpd_hat: float
    p_waic: float
    se: float


@dataclass
class DScore:
    D: float
    G: float
    P: float


def gaussian_loglik_matrix(y, means, variances):
    """Pointwise Gaussian log likelihoods, one row per observation.

    ``means`` and ``variances`` are (L, k) per-draw conditional moments
    (variances may broadcast).  Returns the k x L log-lik matrix.
    """
    y = np.asarray(y, dtype=float)
    means = np.asarray(means, dtype=float)
    variances = np.broadcast_to(np.asarray(variances, dtype=float), means.shape)
    if not (variances > 0).all():
        raise ValueError("variances must be positive")
    ll = -0.5 * (np.log(2.0 * np.pi * variances)
                 + (y[None, :] - means) ** 2 / variances)
    if not np.isfinite(ll).all():
        raise ValueError("non-finite pointwise log likelihood")
    return ll.T


def waic(loglik) -> WaicReport:
    """WAIC, effective parameters, and standard error from a k x L matrix."""
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim != 2:
        raise ValueError("log-lik matrix must be k x L")
    k, L = ll.shape
    if L < 2:
        raise ValueError("need at least two draws")
    lpd_h = logsumexp(ll, axis=1) - np.log(L)
    p_h = ll.var(axis=1, ddof=1)
    elpd_h = lpd_h - p_h
    se = 2.0 * elpd_h.std(ddof=1) * np.sqrt(k) if k > 1 else 0.0
    lpd = float(lpd_h.sum())
    p = float(p_h.sum())
    return WaicReport(waic=-2.0 * (lpd - p), lpd_hat=lpd, p_waic=p, se=float(se))


def d_score(replicates, y_reference) -> DScore:
    """D = G + P from a k x L replicate matrix and reference outcomes."""
    rep = np.asarray(replicates, dtype=float)
    y = np.asarray(y_reference, dtype=float)
    if rep.ndim != 2 or rep.shape[0] != y.size:
        raise ValueError("replicates must be k x L matching y_reference")
    if rep.shape[1] < 2:
        raise ValueError("need at least two draws")
    G = float(((y - rep.mean(axis=1)) ** 2).sum())
    P = float(rep.var(axis=1, ddof=1).sum())
    return DScore(D=G + P, G=G, P=P)


def gaussian_replicates(means, variances, seed=0):
    """Posterior predictive replicates from per-draw Gaussian moments.

    Shapes follow :func:`gaussian_loglik_matrix`; returns k x L.
    """
    rng = np.random.default_rng(seed)
    means = np.asarray(means, dtype=float)
    variances = np.broadcast_to(np.asarray(variances, dtype=float), means.shape)
    rep = means + np.sqrt(variances) * rng.standard_normal(means.shape)
    return rep.T
