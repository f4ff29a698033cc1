"""Random d-process: edges between uniform nonadjacent pairs of vertices
of degree below d.

Coordinates are ``V_0..V_d`` (vertices of each degree).  Each added edge
shifts both endpoints up one degree, so a step is the sum of two
single-endpoint jumps ``e_{k+1} - e_k``.
"""

from __future__ import annotations

import numpy as np

from ..core import DomainBox, DomainError, ProcessModel, StateVector
from . import _kernels as K

__all__ = [
    "dprocess_endpoint_law",
    "dprocess_drift",
    "dprocess_diffusion",
    "dprocess_diffusion_pair_law",
    "dprocess_model",
    "DProcessState",
    "dprocess_step",
    "run_path",
]


def _check(z, d, epsilon):
    z = np.asarray(z, dtype=float)
    if z.shape[0] != d + 1:
        raise ValueError(f"expected {d + 1} coordinates, got {z.shape[0]}")
    denom = 1.0 - z[d]
    if denom <= epsilon:
        raise DomainError(f"1 - z_d = {denom:.4g} is not above epsilon = {epsilon}")
    return z, denom


def dprocess_endpoint_law(z, d: int, epsilon: float = 0.1) -> np.ndarray:
    """Degree law of one endpoint, ``p_k = z_k / (1 - z_d)`` for k < d."""
    z, denom = _check(z, d, epsilon)
    return z[:d] / denom


def _jumps(d: int) -> np.ndarray:
    c = np.zeros((d, d + 1))
    for k in range(d):
        c[k, k] = -1.0
        c[k, k + 1] = 1.0
    return c


def dprocess_drift(z, d: int, epsilon: float = 0.1) -> np.ndarray:
    p = dprocess_endpoint_law(z, d, epsilon)
    return 2.0 * (p @ _jumps(d))


def dprocess_diffusion_pair_law(p, pi, d: int) -> np.ndarray:
    """Second moment of a step given the endpoint-degree laws.

    ``p`` is the degree law of one endpoint and ``pi[k, l]`` the joint law
    of the (randomly ordered) pair.  Writing the step as the sum of both
    endpoint jumps gives ``2 sum_k p_k c_k c_k' + 2 sum_kl pi_kl c_k c_l'``.
    """
    c = _jumps(d)
    p = np.asarray(p, dtype=float)
    pi = np.asarray(pi, dtype=float)
    return 2.0 * (c * p[:, None]).T @ c + 2.0 * c.T @ pi @ c


def dprocess_diffusion(z, d: int, corrected: bool = True, epsilon: float = 0.1) -> np.ndarray:
    """Second-moment function.

    ``corrected`` (the default) treats the endpoints as independent draws
    from :func:`dprocess_endpoint_law`.  ``corrected=False`` returns the
    single double sum ``sum_kl p_k p_l c_k c_l'``, which equals ``F F' / 4``
    and understates the true second moment.
    """
    p = dprocess_endpoint_law(z, d, epsilon)
    if corrected:
        return dprocess_diffusion_pair_law(p, np.outer(p, p), d)
    u = p @ _jumps(d)
    return np.outer(u, u)


def dprocess_model(d: int = 2, epsilon: float = 0.1, corrected: bool = True) -> ProcessModel:
    """Analytic model; the Jacobian comes from finite differences."""
    if d < 1:
        raise ValueError("d must be at least 1")
    lo = (-epsilon,) * (d + 1)
    hi = (1 + epsilon,) * d + (1 - epsilon,)
    z0 = np.zeros(d + 1)
    z0[0] = 1.0
    return ProcessModel(
        q=d + 1,
        drift=lambda z: dprocess_drift(z, d, epsilon),
        diffusion=lambda z: dprocess_diffusion(z, d, corrected, epsilon),
        domain=DomainBox(lo, hi, epsilon),
        z0=z0,
        label="dproc",
        params={"d": d, "epsilon": epsilon, "corrected": corrected},
    )


class DProcessState:
    """Simple graph with degrees capped at d, stored as a padded adjacency
    array plus the list of vertices that can still take an edge."""

    def __init__(self, n: int, d: int = 2):
        if n < 1 or d < 1:
            raise ValueError("need n >= 1 and d >= 1")
        self.n = n
        self.d = d
        self.adj = np.full((n, d), -1, dtype=np.int64)
        self.deg = np.zeros(n, dtype=np.int64)
        self.avail = np.arange(n, dtype=np.int64)
        self.avail_pos = np.arange(n, dtype=np.int64)
        self.counts_arr = np.zeros(d + 1, dtype=np.int64)
        self.counts_arr[0] = n
        self.meta = np.array([n, d, n, 0, 0], dtype=np.int64)

    @classmethod
    def from_edges(cls, n: int, d: int, edges) -> "DProcessState":
        st = cls(n, d)
        for u, v in edges:
            if u == v or st.has_edge(u, v) or st.deg[u] >= d or st.deg[v] >= d:
                raise ValueError(f"edge {(u, v)} is not allowed")
            for a, b in ((u, v), (v, u)):
                st.adj[a, st.deg[a]] = b
                st.counts_arr[st.deg[a]] -= 1
                st.deg[a] += 1
                st.counts_arr[st.deg[a]] += 1
            st.meta[K.DP_M] += 1
        avail = [x for x in range(n) if st.deg[x] < d]
        full = [x for x in range(n) if st.deg[x] >= d]
        st.avail[:] = avail + full
        st.avail_pos[st.avail] = np.arange(n)
        st.meta[K.DP_NAVAIL] = len(avail)
        return st

    @property
    def m(self) -> int:
        return int(self.meta[K.DP_M])

    @property
    def terminal(self) -> bool:
        return bool(self.meta[K.DP_TERMINAL])

    @property
    def counts(self) -> tuple:
        return tuple(int(c) for c in self.counts_arr)

    def has_edge(self, u: int, v: int) -> bool:
        return bool(np.any(self.adj[u, : self.deg[u]] == v))

    def edges(self) -> list:
        return sorted((u, int(v)) for u in range(self.n) for v in self.adj[u, : self.deg[u]] if u < v)

    def buckets(self) -> list:
        return [set(np.flatnonzero(self.deg == k).tolist()) for k in range(self.d + 1)]

    def state_vector(self) -> StateVector:
        return StateVector(self.counts, self.m, self.n)

    def copy(self) -> "DProcessState":
        new = object.__new__(DProcessState)
        new.n, new.d = self.n, self.d
        for name in ("adj", "deg", "avail", "avail_pos", "counts_arr", "meta"):
            setattr(new, name, getattr(self, name).copy())
        return new

    def advance(self, rng, m_target: int) -> "DProcessState":
        K.dproc_advance(rng, self.adj, self.deg, self.avail, self.avail_pos,
                        self.counts_arr, self.meta, m_target)
        return self


def dprocess_step(state: DProcessState, rng) -> DProcessState:
    """Add one uniformly chosen valid edge, or set ``state.terminal``."""
    return state.advance(rng, state.m + 1)


def run_path(n: int, params: dict, ms, rng, stop_at_H: bool = False):
    if stop_at_H:
        raise ValueError("the d-process has no stopping time H")
    state = DProcessState(n, params.get("d", 2))
    records = []
    for m in ms:
        state.advance(rng, m)
        records.append(state.counts_arr.copy() if state.m == m else None)
    return records, None, None
