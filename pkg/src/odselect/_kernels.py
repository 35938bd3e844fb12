"""Numba kernels for the tree-ensemble and chaining-distance hot paths.

Trees use implicit full-binary-tree numbering (children of node i are 2i+1
and 2i+2) so a whole tree is three flat arrays.  Randomness is consumed from
a pre-drawn uniform array in node-id order, which makes tree construction a
pure function of the subsample's values.
"""

import numpy as np
from numba import njit

EULER_GAMMA = 0.5772156649015329


@njit(cache=True)
def average_path_length(m):
    """Expected unsuccessful-search path length in a BST of m points."""
    if m <= 1:
        return 0.0
    if m == 2:
        return 1.0
    return 2.0 * (np.log(m - 1.0) + EULER_GAMMA) - 2.0 * (m - 1.0) / m


@njit(cache=True)
def build_isolation_tree(X, feat_pool, height_limit, uniforms, node_feat, node_thresh, node_size):
    """Grow one isolation tree over X (the subsample restricted to all columns).

    node_feat[i] >= 0 marks a split node; leaves keep -1.  node_size[i] is the
    number of subsample points resident at i after growth stops.  Returns the
    number of uniforms consumed.
    """
    n = X.shape[0]
    n_nodes = node_feat.shape[0]
    node_of = np.zeros(n, np.int64)
    for i in range(n_nodes):
        node_feat[i] = -1
        node_thresh[i] = 0.0
        node_size[i] = 0
    node_size[0] = n
    used = 0
    for depth in range(height_limit):
        first = (1 << depth) - 1
        last = min((1 << (depth + 1)) - 1, n_nodes)
        for nd in range(first, last):
            if node_size[nd] <= 1:
                continue
            f = feat_pool[int(uniforms[used] * feat_pool.shape[0])]
            used += 1
            lo = np.inf
            hi = -np.inf
            for i in range(n):
                if node_of[i] == nd:
                    v = X[i, f]
                    if v < lo:
                        lo = v
                    if v > hi:
                        hi = v
            if hi <= lo:
                continue  # constant along f: node becomes a leaf
            t = lo + (hi - lo) * uniforms[used]
            used += 1
            node_feat[nd] = f
            node_thresh[nd] = t
            left = 2 * nd + 1
            right = 2 * nd + 2
            node_size[nd] = 0
            for i in range(n):
                if node_of[i] == nd:
                    if X[i, f] < t:
                        node_of[i] = left
                        node_size[left] += 1
                    else:
                        node_of[i] = right
                        node_size[right] += 1
    return used


@njit(cache=True)
def accumulate_forest_depths(X, node_feat, node_thresh, node_size, height_limit, out):
    """Add every tree's adjusted path length for each row of X into out."""
    n_trees = node_feat.shape[0]
    n = X.shape[0]
    for t in range(n_trees):
        for i in range(n):
            nd = 0
            depth = 0
            while depth < height_limit and node_feat[t, nd] >= 0:
                if X[i, node_feat[t, nd]] < node_thresh[t, nd]:
                    nd = 2 * nd + 1
                else:
                    nd = 2 * nd + 2
                depth += 1
            out[i] += depth + average_path_length(node_size[t, nd])


@njit(cache=True)
def chaining_distances(X, nbr_idx):
    """Average chaining distance of every point over {self} + its neighbors.

    The chain grows greedily: each step connects the nearest remaining member
    to the already-connected set, and earlier edges receive linearly larger
    weights (weights sum to 1).
    """
    n, k = nbr_idx.shape
    r = k + 1
    p = X.shape[1]
    ac = np.empty(n)
    members = np.empty((r, p))
    connected = np.zeros(r, np.bool_)
    best_cost = np.empty(r)
    for i in range(n):
        for j in range(p):
            members[0, j] = X[i, j]
        for a in range(k):
            src = nbr_idx[i, a]
            for j in range(p):
                members[a + 1, j] = X[src, j]
        for a in range(r):
            connected[a] = False
            best_cost[a] = np.inf
        connected[0] = True
        for a in range(1, r):
            d = 0.0
            for j in range(p):
                diff = members[a, j] - members[0, j]
                d += diff * diff
            best_cost[a] = np.sqrt(d)
        total = 0.0
        for step in range(1, r):
            pick = -1
            pick_cost = np.inf
            for a in range(1, r):
                if not connected[a] and best_cost[a] < pick_cost:
                    pick_cost = best_cost[a]
                    pick = a
            connected[pick] = True
            weight = 2.0 * (r - step) / (r * (r - 1.0))
            total += weight * pick_cost
            for a in range(1, r):
                if not connected[a]:
                    d = 0.0
                    for j in range(p):
                        diff = members[a, j] - members[pick, j]
                        d += diff * diff
                    d = np.sqrt(d)
                    if d < best_cost[a]:
                        best_cost[a] = d
        ac[i] = total
    return ac
