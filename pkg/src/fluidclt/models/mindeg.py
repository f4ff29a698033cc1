"""Minimum-degree graph process, tracked through component-order counts.

Coordinates are ``C_1..C_q`` (components of order 1..q).  Up to the
stopping time H (no isolated vertices left) every step joins an isolated
vertex to a uniformly random other vertex, so the graph is a forest and
only the order ``V`` of the second endpoint's component matters:
``dC_k = -[k=1] - [k=V] + [k=V+1]``.  Components of order above q are
lumped: their vertex mass is ``n - sum_k k C_k``.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import DomainBox, ProcessModel, StateVector
from . import _kernels as K

__all__ = [
    "LN2",
    "mindeg_beta",
    "mindeg_mu",
    "mindeg_drift",
    "mindeg_diffusion",
    "mindeg_jacobian",
    "mindeg_T_closed",
    "mindeg_final_sigma",
    "mindeg_model",
    "mindeg_exact_law",
    "MinDegState",
    "mindeg_step",
    "ExtendedChainState",
    "mindeg_extended_step",
    "run_path",
]

LN2 = math.log(2.0)


def mindeg_beta(t: float, k: int) -> float:
    """Limit of ``C_k / n`` at time ``t = m / n``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    e = math.exp(-t)
    return (1.0 - e) ** (k - 1) * ((k + 1) * e - 1.0) / k


def mindeg_mu(k: int) -> float:
    """Limit of ``C_k / n`` at the stopping time."""
    return (k - 1) / (k * 2.0**k)


def mindeg_drift(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    k = np.arange(1, z.shape[0] + 1)
    f = -k * z
    f[0] -= 1.0
    f[1:] += (k[:-1]) * z[:-1]
    return f


def _jump_matrix(q: int) -> np.ndarray:
    # row V-1 is the count change when the second endpoint lies in a
    # component of order V; row q stands for every order above q
    D = np.zeros((q + 1, q))
    D[:, 0] = -1.0
    for V in range(1, q + 1):
        D[V - 1, V - 1] -= 1.0
        if V < q:
            D[V - 1, V] += 1.0
    return D


_JUMPS: dict = {}


def mindeg_diffusion(z, tail: bool = True) -> np.ndarray:
    """Second moment of one step as a function of the scaled counts.

    The ``k``-th term carries weight ``k z_k`` (chance that the second
    endpoint lies in a component of order k).  With ``tail`` the orders
    above q contribute their mass ``1 - sum_k k z_k``; they only move
    ``C_1``, so this adds to the (1, 1) entry alone.
    """
    z = np.asarray(z, dtype=float)
    q = z.shape[0]
    D = _JUMPS.get(q)
    if D is None:
        D = _JUMPS[q] = _jump_matrix(q)
    w = np.empty(q + 1)
    w[:q] = np.arange(1, q + 1) * z
    w[q] = 1.0 - w[:q].sum() if tail else 0.0
    return (D * w[:, None]).T @ D


def mindeg_jacobian(q: int) -> np.ndarray:
    J = np.zeros((q, q))
    for j in range(1, q + 1):
        J[j - 1, j - 1] = -j
        if j < q:
            J[j, j - 1] = j
    return J


def mindeg_T_closed(t: float, q: int, binomial: bool = True) -> np.ndarray:
    """Closed-form fundamental matrix ``exp(-t J)`` (lower triangular).

    Entry (i, j) is ``(-1)^(i+j) C(i-1, j-1) e^(jt) (e^t - 1)^(i-j)``.
    ``binomial=False`` drops the binomial factor; that variant agrees only
    for q <= 2 and is kept for reporting.
    """
    T = np.zeros((q, q))
    et = math.exp(t)
    for i in range(1, q + 1):
        for j in range(1, i + 1):
            c = math.comb(i - 1, j - 1) if binomial else 1
            T[i - 1, j - 1] = (-1) ** (i + j) * c * math.exp(j * t) * (et - 1.0) ** (i - j)
    return T


def mindeg_final_sigma(Sigma_h, q: int, form: str = "drift") -> np.ndarray:
    """Covariance of ``(C_H - n mu) / sqrt(n)`` from ``Sigma(ln 2)``.

    The stopped counts are ``W = L W°`` with ``L`` the identity plus a
    first column.  ``form="drift"`` uses the linearized stopping
    correction: H - hn is the time for the leftover ``C_1`` to drain at
    rate ``-f_1(mu)``, during which component counts move at ``f_k(mu)``,
    so ``L[k, 0] += f_k(mu) / -f_1(mu)`` (this makes row 1 vanish, as it
    must since ``C_{H,1} = 0``).  ``form="power2"`` instead adds the
    coefficients ``(k-1) / 2^(k-1)``; it is kept for side-by-side
    reporting and does not match simulation.
    """
    S = np.asarray(Sigma_h, dtype=float)
    if S.shape != (q, q):
        raise ValueError(f"Sigma_h must be {q}x{q}")
    L = np.eye(q)
    if form == "drift":
        fmu = mindeg_drift([mindeg_mu(k) for k in range(1, q + 1)])
        L[:, 0] += fmu / -fmu[0]
    elif form == "power2":
        for k in range(1, q + 1):
            L[k - 1, 0] += (k - 1) / 2.0 ** (k - 1)
    else:
        raise ValueError(f"unknown form {form!r}")
    return L @ S @ L.T


def mindeg_model(q: int = 6, epsilon: float = 0.1, tail: bool = True) -> ProcessModel:
    """Analytic model on the box ``(-eps, 1 + eps)^q``."""
    if q < 1:
        raise ValueError("q must be at least 1")
    J = mindeg_jacobian(q)
    J.setflags(write=False)
    z0 = np.zeros(q)
    z0[0] = 1.0
    return ProcessModel(
        q=q,
        drift=mindeg_drift,
        diffusion=lambda z: mindeg_diffusion(z, tail=tail),
        jacobian=lambda z: J,
        domain=DomainBox.uniform(q, -epsilon, 1 + epsilon, epsilon),
        z0=z0,
        label="mindeg",
        params={"q": q, "epsilon": epsilon},
    )


def mindeg_exact_law(counts, n: int, graph: bool = True) -> np.ndarray:
    """Probabilities of ``V = 1..q`` and of ``V > q`` (last entry).

    With ``graph`` the second endpoint avoids the (isolated) first one,
    giving ``(k C_k - [k=1]) / (n - 1)``; otherwise the post-H extended
    chain weights ``max(0, k C_k) / n`` over ``k >= 2``.
    """
    c = np.asarray(counts, dtype=float)
    q = c.shape[0]
    k = np.arange(1, q + 1)
    p = np.empty(q + 1)
    if graph:
        p[:q] = k * c
        p[0] -= 1.0
        p[:q] /= n - 1
    else:
        p[:q] = np.maximum(0.0, k * c) / n
        p[0] = 0.0
    tail = 1.0 - p[:q].sum()
    if tail < -1e-12:
        raise ValueError("order weights exceed 1: outside the window where the chain is defined")
    p[q] = max(tail, 0.0)
    return p


class MinDegState:
    """Graph-backed state: union-find over vertices plus the isolated set."""

    def __init__(self, n: int, q: int = 6):
        if n < 2:
            raise ValueError("need at least two vertices")
        self.n = n
        self.q = q
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)
        self.iso = np.arange(n, dtype=np.int64)
        self.iso_pos = np.arange(n, dtype=np.int64)
        self.counts_arr = np.zeros(q, dtype=np.int64)
        self.counts_arr[0] = n
        self.meta = np.array([n, n, 0, 0], dtype=np.int64)

    @property
    def m(self) -> int:
        return int(self.meta[K.MD_M])

    @property
    def counts(self) -> tuple:
        return tuple(int(c) for c in self.counts_arr)

    @property
    def isolated(self) -> int:
        return int(self.meta[K.MD_NISO])

    @property
    def stopped_at_H(self):
        return self.m if self.isolated == 0 else None

    @property
    def last_order(self) -> int:
        return int(self.meta[K.MD_LAST])

    def tail_mass(self) -> int:
        """Vertices in components of order above q."""
        return self.n - int(np.dot(np.arange(1, self.q + 1), self.counts_arr))

    def component_sizes(self) -> list:
        roots = [K.find_root(self.parent, x) for x in range(self.n)]
        return sorted(int(self.size[r]) for r in set(roots))

    def state_vector(self) -> StateVector:
        return StateVector(self.counts, self.m, self.n)

    def copy(self) -> "MinDegState":
        new = object.__new__(MinDegState)
        new.n, new.q = self.n, self.q
        for name in ("parent", "size", "iso", "iso_pos", "counts_arr", "meta"):
            setattr(new, name, getattr(self, name).copy())
        return new

    def advance(self, rng, m_target: int) -> "MinDegState":
        K.mindeg_advance(rng, self.parent, self.size, self.iso, self.iso_pos,
                         self.counts_arr, self.meta, m_target)
        return self


def mindeg_step(state: MinDegState, rng) -> MinDegState:
    """Add one edge; the order of the joined component is ``state.last_order``."""
    if state.isolated == 0:
        raise RuntimeError(f"no isolated vertex left: the process stopped at H={state.m}")
    return state.advance(rng, state.m + 1)


class ExtendedChainState:
    """Count-only chain that follows the graph counts up to H and keeps
    going afterwards (``C_1`` may then turn negative)."""

    def __init__(self, n: int, q: int = 6, counts=None, m: int = 0):
        self.n = n
        self.q = q
        if counts is None:
            counts = np.zeros(q, dtype=np.int64)
            counts[0] = n
        self.counts_arr = np.array(counts, dtype=np.int64)
        self.m = m

    @property
    def counts(self) -> tuple:
        return tuple(int(c) for c in self.counts_arr)


def mindeg_extended_step(state: ExtendedChainState, rng, order=None) -> ExtendedChainState:
    """One step of the extended chain.

    ``order`` couples the chain to a graph step: while ``C_1 > 0`` the
    supplied component order is used instead of a fresh draw.
    """
    q = state.q
    graph = state.counts_arr[0] > 0
    if order is None or not graph:
        p = mindeg_exact_law(state.counts_arr, state.n, graph=graph)
        order = int(rng.choice(q + 1, p=p / p.sum())) + 1
    c = state.counts_arr
    c[0] -= 1
    if order <= q:
        c[order - 1] -= 1
    if order + 1 <= q:
        c[order] += 1
    state.m += 1
    return state


def run_path(n: int, params: dict, ms, rng, stop_at_H: bool = False):
    """Counts at each step count in ``ms`` (None once H has passed), and H.

    Returns ``(records, H, final_counts)``; H and the final counts are
    None unless ``stop_at_H``.
    """
    state = MinDegState(n, params.get("q", 6))
    records = []
    for m in ms:
        state.advance(rng, m)
        records.append(state.counts_arr.copy() if state.m == m else None)
    if not stop_at_H:
        return records, None, None
    state.advance(rng, np.iinfo(np.int64).max)
    return records, state.m, state.counts_arr.copy()
