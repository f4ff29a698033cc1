"""Sample statistics used to compare simulated fluctuations with predictions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaincinv, ndtr

__all__ = [
    "empirical_moments",
    "chi2_cdf",
    "chi2_quantile",
    "pseudo_inverse",
    "MahalanobisResult",
    "mahalanobis_check",
    "ks_statistic",
]


def empirical_moments(samples):
    """Sample mean and unbiased covariance (two-pass)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    N = x.shape[0]
    if N < 2:
        raise ValueError("need at least two samples")
    mean = x.sum(axis=0) / N
    dev = x - mean
    cov = dev.T @ dev / (N - 1)
    return mean, cov


def chi2_cdf(x, dof):
    """Chi-square CDF as the regularized lower incomplete gamma P(dof/2, x/2)."""
    return gammainc(dof / 2.0, np.asarray(x, dtype=float) / 2.0)


def chi2_quantile(p, dof):
    return 2.0 * gammaincinv(dof / 2.0, p)


def pseudo_inverse(S, rel_tol=1e-8):
    """Spectral pseudo-inverse of a symmetric PSD matrix and its rank.

    Eigenvalues below ``rel_tol`` times the largest are treated as zero;
    conserved quantities make some limit covariances singular.
    """
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    top = max(w.max(initial=0.0), 0.0)
    keep = w > rel_tol * top if top > 0 else np.zeros_like(w, dtype=bool)
    inv = (V[:, keep] / w[keep]) @ V[:, keep].T
    return inv, int(keep.sum())


@dataclass
class MahalanobisResult:
    mean: float
    rank: int
    window: float
    passed: bool
    d2: np.ndarray
    threshold: float
    exceed_fraction: float


def mahalanobis_check(W, Sigma_pred, width: float = 5.0) -> MahalanobisResult:
    """Squared Mahalanobis distances ``W' Sigma^+ W`` of every sample.

    Under ``N(0, Sigma)`` these are chi-square with ``rank`` degrees of
    freedom; the check passes when their mean lies within
    ``rank +- width * sqrt(2 rank / N)``.  Also reports the fraction above
    the 0.99 chi-square quantile.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    inv, r = pseudo_inverse(Sigma_pred)
    d2 = np.einsum("ni,ij,nj->n", W, inv, W)
    N = W.shape[0]
    mean = float(d2.mean())
    if r == 0:
        return MahalanobisResult(mean, 0, 0.0, False, d2, float("nan"), float("nan"))
    window = width * np.sqrt(2.0 * r / N)
    thr = float(chi2_quantile(0.99, r))
    return MahalanobisResult(mean, r, float(window), abs(mean - r) <= window, d2, thr,
                             float(np.mean(d2 > thr)))


def ks_statistic(x, lattice: float = 0.0) -> float:
    """Kolmogorov-Smirnov distance between the sample and ``N(0, 1)``.

    For data on a lattice of spacing ``lattice`` the reference CDF is the
    continuity-corrected ``Phi(x +- lattice / 2)``, so the jumps of the
    empirical CDF at lattice points are not counted as misfit.  With
    ``lattice=0`` this is the usual statistic.
    """
    x = np.sort(np.asarray(x, dtype=float))
    N = x.shape[0]
    u, counts = np.unique(x, return_counts=True)
    right = np.cumsum(counts) / N
    left = right - counts / N
    h = 0.5 * lattice
    return float(max(np.abs(right - ndtr(u + h)).max(), np.abs(left - ndtr(u - h)).max()))
