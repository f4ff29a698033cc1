"""Compiled inner loops for the graph simulators.

Every kernel advances a state held in plain arrays until a target step
count is reached or the process cannot continue.  The Python step
functions call the same kernels with ``m_target = m + 1``.
"""

from numba import njit

# mindeg meta layout
MD_N, MD_NISO, MD_M, MD_LAST = 0, 1, 2, 3
# dproc meta layout
DP_N, DP_D, DP_NAVAIL, DP_M, DP_TERMINAL = 0, 1, 2, 3, 4


@njit(cache=True, nogil=True)
def find_root(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, nogil=True)
def _swap_remove(items, pos, count, x):
    i = pos[x]
    last = items[count - 1]
    items[i] = last
    pos[last] = i
    items[count - 1] = x
    pos[x] = count - 1


@njit(cache=True, nogil=True)
def mindeg_advance(rng, parent, size, iso, iso_pos, counts, meta, m_target):
    """Join a uniform isolated vertex to a uniform other vertex until
    ``m_target`` edges exist or no isolated vertex remains."""
    n = meta[MD_N]
    q = counts.shape[0]
    while meta[MD_M] < m_target and meta[MD_NISO] > 0:
        v = iso[rng.integers(0, meta[MD_NISO])]
        w = rng.integers(0, n - 1)
        if w >= v:
            w += 1
        rw = find_root(parent, w)
        order = size[rw]
        _swap_remove(iso, iso_pos, meta[MD_NISO], v)
        meta[MD_NISO] -= 1
        if order == 1:
            _swap_remove(iso, iso_pos, meta[MD_NISO], w)
            meta[MD_NISO] -= 1
        # v is a singleton root, hang it below w's root
        parent[v] = rw
        size[rw] += 1
        counts[0] -= 1
        if order <= q:
            counts[order - 1] -= 1
        if order + 1 <= q:
            counts[order] += 1
        meta[MD_M] += 1
        meta[MD_LAST] = order


@njit(cache=True, nogil=True)
def _adjacent(adj, deg, u, v):
    for k in range(deg[u]):
        if adj[u, k] == v:
            return True
    return False


@njit(cache=True, nogil=True)
def _has_valid_pair(adj, deg, avail, n_avail):
    for a in range(n_avail):
        for b in range(a + 1, n_avail):
            if not _adjacent(adj, deg, avail[a], avail[b]):
                return True
    return False


@njit(cache=True, nogil=True)
def dproc_advance(rng, adj, deg, avail, avail_pos, counts, meta, m_target):
    """Add uniformly random valid edges (rejection over pairs of vertices
    of degree < d) until ``m_target`` edges exist or none can be added."""
    d = meta[DP_D]
    while meta[DP_M] < m_target and meta[DP_TERMINAL] == 0:
        na = meta[DP_NAVAIL]
        # with more than d candidates some pair is always nonadjacent
        if na < 2 or (na <= d and not _has_valid_pair(adj, deg, avail, na)):
            meta[DP_TERMINAL] = 1
            break
        while True:
            i = rng.integers(0, na)
            j = rng.integers(0, na - 1)
            if j >= i:
                j += 1
            u = avail[i]
            v = avail[j]
            if not _adjacent(adj, deg, u, v):
                break
        adj[u, deg[u]] = v
        adj[v, deg[v]] = u
        counts[deg[u]] -= 1
        counts[deg[v]] -= 1
        deg[u] += 1
        deg[v] += 1
        counts[deg[u]] += 1
        counts[deg[v]] += 1
        if deg[u] == d:
            _swap_remove(avail, avail_pos, meta[DP_NAVAIL], u)
            meta[DP_NAVAIL] -= 1
        if deg[v] == d:
            _swap_remove(avail, avail_pos, meta[DP_NAVAIL], v)
            meta[DP_NAVAIL] -= 1
        meta[DP_M] += 1
