"""Exact one-step laws by brute-force enumeration on small graphs.

Nothing here uses the simulators or the analytic formulas: every
candidate step is applied to an explicit graph and the count vector is
recomputed from scratch.  Reachable-state enumeration walks the step
relation breadth-first, merging isomorphic graphs.
"""

from __future__ import annotations

from itertools import combinations

import networkx as nx
import numpy as np

from ..core import MAX_OUTCOMES, StepDistribution

__all__ = [
    "degree_counts",
    "order_counts",
    "dprocess_step_distribution",
    "dprocess_pair_law",
    "dprocess_reachable",
    "mindeg_forest",
    "mindeg_step_distribution",
    "mindeg_reachable",
    "sizes_of",
]


def degree_counts(G: nx.Graph, d: int) -> np.ndarray:
    c = np.zeros(d + 1, dtype=np.int64)
    for _, k in G.degree():
        c[k] += 1
    return c


def order_counts(G: nx.Graph, q: int) -> np.ndarray:
    c = np.zeros(q, dtype=np.int64)
    for comp in nx.connected_components(G):
        if len(comp) <= q:
            c[len(comp) - 1] += 1
    return c


def _valid_pairs(G: nx.Graph, d: int):
    low = [v for v in G if G.degree(v) < d]
    return [(u, v) for u, v in combinations(low, 2) if not G.has_edge(u, v)]


def dprocess_step_distribution(G: nx.Graph, d: int) -> StepDistribution:
    """Uniform law over valid pairs, increments by recounting degrees."""
    pairs = _valid_pairs(G, d)
    if not pairs:
        raise ValueError("terminal graph: no valid pair")
    if len(pairs) > MAX_OUTCOMES:
        raise ValueError("too many outcomes to enumerate")
    before = degree_counts(G, d)
    outcomes = []
    for u, v in pairs:
        H = G.copy()
        H.add_edge(u, v)
        outcomes.append((1.0, degree_counts(H, d) - before))
    return StepDistribution.from_outcomes(outcomes, d + 1)


def dprocess_pair_law(G: nx.Graph, d: int):
    """Exact endpoint-degree law ``p`` and ordered-pair law ``pi``."""
    pairs = _valid_pairs(G, d)
    pi = np.zeros((d, d))
    for u, v in pairs:
        a, b = G.degree(u), G.degree(v)
        pi[a, b] += 0.5
        pi[b, a] += 0.5
    pi /= len(pairs)
    return pi.sum(axis=1), pi


def _canonical_bucket(G: nx.Graph):
    return nx.weisfeiler_lehman_graph_hash(G, iterations=3)


def _reachable(start: nx.Graph, successors):
    seen: dict = {}
    frontier = [start]
    out = []

    def novel(G):
        bucket = seen.setdefault(_canonical_bucket(G), [])
        if any(nx.is_isomorphic(G, H) for H in bucket):
            return False
        bucket.append(G)
        return True

    novel(start)
    while frontier:
        nxt = []
        for G in frontier:
            succ = successors(G)
            if succ:
                out.append(G)
            for H in succ:
                if novel(H):
                    nxt.append(H)
        frontier = nxt
    return out


def dprocess_reachable(n: int, d: int) -> list:
    """Non-terminal graphs reachable by the d-process on n vertices."""

    def successors(G):
        res = []
        for u, v in _valid_pairs(G, d):
            H = G.copy()
            H.add_edge(u, v)
            res.append(H)
        return res

    return _reachable(nx.empty_graph(n), successors)


def mindeg_forest(sizes) -> nx.Graph:
    """A forest (of stars) with the given component orders."""
    G = nx.Graph()
    base = 0
    for s in sizes:
        G.add_node(base)
        for x in range(1, s):
            G.add_edge(base, base + x)
        base += s
    return G


def mindeg_step_distribution(G: nx.Graph, q: int) -> StepDistribution:
    """First endpoint uniform over isolated vertices, second uniform over
    the remaining n - 1 vertices."""
    isolated = [v for v in G if G.degree(v) == 0]
    if not isolated:
        raise ValueError("no isolated vertex: the process has stopped")
    before = order_counts(G, q)
    outcomes = []
    for v in isolated:
        for w in G:
            if w == v:
                continue
            H = G.copy()
            H.add_edge(v, w)
            outcomes.append((1.0, order_counts(H, q) - before))
    return StepDistribution.from_outcomes(outcomes, q)


def mindeg_reachable(n: int) -> list:
    """Component-order multisets (sorted tuples) reachable before H.

    The one-step law depends on the forest only through its component
    orders, so multisets are exact state labels here.
    """
    start = (1,) * n
    seen = {start}
    frontier = [start]
    out = []
    while frontier:
        nxt = []
        for s in frontier:
            if 1 not in s:
                continue
            out.append(s)
            rest = list(s)
            rest.remove(1)
            for i, V in enumerate(rest):
                merged = tuple(sorted(rest[:i] + rest[i + 1 :] + [V + 1]))
                if merged not in seen:
                    seen.add(merged)
                    nxt.append(merged)
        frontier = nxt
    return out


def sizes_of(G: nx.Graph) -> tuple:
    return tuple(sorted(len(c) for c in nx.connected_components(G)))
