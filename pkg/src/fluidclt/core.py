"""Process abstraction shared by the analytic and simulation sides.

A process is described twice: analytically by a :class:`ProcessModel`
(drift, second-moment function, Jacobian, domain) and exactly by its
one-step law, a :class:`StepDistribution`.  :func:`exact_one_step_moments`
turns the latter into conditional moments so the analytic formulas can be
audited against brute-force enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "StateVector",
    "DomainBox",
    "ProcessModel",
    "StepDistribution",
    "in_domain",
    "exact_one_step_moments",
    "standardize",
    "MAX_OUTCOMES",
]

#: enumerators refuse to build step laws with more outcomes than this
MAX_OUTCOMES = 10**6


class DomainError(ValueError):
    """Raised when a function is evaluated outside its domain of validity."""


def _vec(x, name="vector") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class StateVector:
    """Integer count vector of a process after ``m`` steps at scale ``n``."""

    counts: tuple
    m: int
    n: int

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.n <= 0:
            raise ValueError("n must be positive")
        if self.m < 0:
            raise ValueError("m must be non-negative")

    @property
    def q(self) -> int:
        return len(self.counts)

    @property
    def t(self) -> float:
        return self.m / self.n

    def scaled(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n


@dataclass(frozen=True)
class DomainBox:
    """Open box ``lo_k < z_k < hi_k`` in scaled coordinates."""

    lo: tuple
    hi: tuple
    epsilon: float = 0.1

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi):
            raise ValueError("lo and hi must have the same length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("every interval must satisfy lo < hi")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def q(self) -> int:
        return len(self.lo)

    @classmethod
    def uniform(cls, q: int, lo: float, hi: float, epsilon: float = 0.1) -> "DomainBox":
        return cls((lo,) * q, (hi,) * q, epsilon)


def in_domain(z, D: DomainBox) -> bool:
    """True iff every coordinate lies strictly inside its interval."""
    z = _vec(z, "z")
    if z.shape[0] != D.q:
        raise ValueError(f"dimension mismatch: z has {z.shape[0]} entries, domain has {D.q}")
    lo = np.asarray(D.lo)
    hi = np.asarray(D.hi)
    return bool(np.all(lo < z) and np.all(z < hi))


@dataclass(frozen=True)
class ProcessModel:
    """Analytic description of a count process.

    ``diffusion`` returns the conditional *second moment* matrix of one
    step (not the covariance); the covariance is ``G - F F'``.  When
    ``jacobian`` is None the numerics fall back to central differences.
    """

    q: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    domain: DomainBox
    z0: tuple
    label: str
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "z0", tuple(float(v) for v in self.z0))
        if len(self.z0) != self.q or self.domain.q != self.q:
            raise ValueError("z0, domain and q disagree on the dimension")
        if not in_domain(self.z0, self.domain):
            raise DomainError(f"initial state {self.z0} lies outside the domain")


@dataclass(frozen=True)
class StepDistribution:
    """Finite one-step law: outcome ``i`` has probability ``probs[i]`` and
    increment ``deltas[i]``."""

    probs: np.ndarray
    deltas: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        dx = np.asarray(self.deltas, dtype=float)
        if dx.ndim != 2 or p.ndim != 1 or dx.shape[0] != p.shape[0]:
            raise ValueError("need one increment row per probability")
        if np.any(p < 0):
            raise ValueError("probabilities must be non-negative")
        p.setflags(write=False)
        dx.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "deltas", dx)

    @property
    def q(self) -> int:
        return self.deltas.shape[1]

    @classmethod
    def from_outcomes(cls, outcomes: Sequence[tuple], q: int) -> "StepDistribution":
        """Aggregate ``(weight, delta)`` pairs; weights are normalized."""
        if len(outcomes) > MAX_OUTCOMES:
            raise ValueError(f"refusing to enumerate {len(outcomes)} outcomes")
        merged: dict = {}
        for w, dx in outcomes:
            key = tuple(int(v) for v in dx)
            if len(key) != q:
                raise ValueError("increment has the wrong dimension")
            merged[key] = merged.get(key, 0.0) + float(w)
        total = sum(merged.values())
        if total <= 0:
            raise ValueError("no outcomes with positive weight")
        keys = sorted(merged)
        probs = np.array([merged[k] / total for k in keys])
        return cls(probs, np.array(keys, dtype=float).reshape(len(keys), q))


def exact_one_step_moments(dist: StepDistribution):
    """Exact conditional mean and second-moment matrix of one step.

    Returns
    -------
    mean : ndarray, shape (q,)
        ``sum_i p_i dx_i``
    second : ndarray, shape (q, q)
        ``sum_i p_i dx_i dx_i'``
    """
    p, dx = dist.probs, dist.deltas
    if abs(p.sum() - 1.0) > 1e-12:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    mean = p @ dx
    second = (dx * p[:, None]).T @ dx
    return mean, second


def standardize(X: StateVector, z_t) -> np.ndarray:
    """Standardized fluctuation ``(X - n z) / sqrt(n)``."""
    z_t = _vec(z_t, "z_t")
    if z_t.shape[0] != X.q:
        raise ValueError(f"dimension mismatch: {X.q} counts vs {z_t.shape[0]} means")
    counts = np.asarray(X.counts, dtype=float)
    return (counts - X.n * z_t) / np.sqrt(X.n)
