"""Density-based hierarchical clustering (HDBSCAN), implemented from the
ground up.

Pipeline: core distances -> mutual reachability -> minimum spanning tree
(dense Prim scan, or Boruvka over a k-NN candidate graph for large inputs)
-> single-linkage dendrogram -> condensed tree at min_cluster_size ->
excess-of-mass cluster extraction.  Points never absorbed into a selected
cluster are labeled -1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

NOISE = -1

# Above this size the dense O(K^2) Prim scan gives way to Boruvka over a
# k-NN candidate graph.
DENSE_MST_MAX_POINTS = 20_000
DEFAULT_KNN_K = 32


def core_distances(points: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance from each point to its min_samples-th nearest other point."""
    points = np.asarray(points, dtype=np.float64)
    k = len(points)
    if min_samples < 1:
        raise ValueError("min_samples must be >= 1")
    if min_samples >= k:
        raise ValueError(f"min_samples={min_samples} needs at least {min_samples + 1} points")
    dist, _ = cKDTree(points).query(points, k=min_samples + 1, workers=-1)
    return dist[:, -1]


def mutual_reachability(distances: np.ndarray, core: np.ndarray) -> np.ndarray:
    """max(core_a, core_b, d(a, b)) as a dense matrix."""
    return np.maximum(np.maximum.outer(core, core), distances)


def mst_prim(points: np.ndarray, core: np.ndarray) -> np.ndarray:
    """Exact MST of the complete mutual-reachability graph.

    O(K^2) time, O(K) memory: one distance row per step instead of a full
    pairwise matrix.  Returns (K-1, 3) rows (u, v, weight); ties broken by
    lowest point index.
    """
    points = np.asarray(points, dtype=np.float64)
    k = len(points)
    edges = np.empty((k - 1, 3))
    in_tree = np.zeros(k, dtype=bool)
    best = np.full(k, np.inf)
    best_from = np.zeros(k, dtype=np.int64)
    current = 0
    in_tree[0] = True
    for i in range(k - 1):
        d = np.linalg.norm(points - points[current], axis=1)
        reach = np.maximum(d, np.maximum(core, core[current]))
        closer = (reach < best) & ~in_tree
        best[closer] = reach[closer]
        best_from[closer] = current
        best[current] = np.inf
        nxt = int(np.argmin(best))
        edges[i] = (best_from[nxt], nxt, best[nxt])
        in_tree[nxt] = True
        best[nxt] = np.inf
        current = nxt
    return edges


def _knn_candidate_edges(points: np.ndarray, core: np.ndarray, knn_k: int):
    """Deduplicated candidate edges (u < v) from a symmetrized k-NN graph,
    weighted by mutual reachability."""
    k = len(points)
    n_query = min(knn_k + 1, k)
    dist, nbr = cKDTree(points).query(points, k=n_query, workers=-1)
    src = np.repeat(np.arange(k), n_query)
    dst = nbr.ravel()
    d = dist.ravel()
    keep = src != dst
    src, dst, d = src[keep], dst[keep], d[keep]
    u = np.minimum(src, dst)
    v = np.maximum(src, dst)
    _, first = np.unique(u * k + v, return_index=True)
    u, v, d = u[first], v[first], d[first]
    w = np.maximum(d, np.maximum(core[u], core[v]))
    return u, v, w


def _compress(parent: np.ndarray) -> np.ndarray:
    """Root label for every node of a union-find parent array."""
    labels = parent.copy()
    while True:
        nxt = labels[labels]
        if np.array_equal(nxt, labels):
            return labels
        labels = nxt


def _min_edge_per_component(comp_u, comp_v, weights, edge_ids):
    """Row index of the cheapest outgoing edge for every component.

    Ties break on a persistent global edge id, which makes every round's
    choices consistent with one weight perturbation; Boruvka with distinct
    weights is exact, so the result is a true MST of the candidate graph.
    """
    comp = np.concatenate([comp_u, comp_v])
    rows = np.tile(np.arange(len(weights)), 2)
    order = np.lexsort((np.concatenate([edge_ids, edge_ids]), np.tile(weights, 2)))
    _, heads = np.unique(comp[order], return_index=True)
    return np.unique(rows[order][heads])


def _cross_component_edges(points, core, labels):
    """Brute-force cheapest edges between every pair of remaining
    components; only used when the k-NN graph is disconnected."""
    comps = np.unique(labels)
    reps = {c: np.flatnonzero(labels == c) for c in comps}
    u_out, v_out, w_out = [], [], []
    for a_i in range(len(comps)):
        for b_i in range(a_i + 1, len(comps)):
            ia, ib = reps[comps[a_i]], reps[comps[b_i]]
            d = np.linalg.norm(points[ia][:, None, :] - points[ib][None, :, :], axis=2)
            reach = np.maximum(d, np.maximum.outer(core[ia], core[ib]))
            flat = int(np.argmin(reach))
            ra, rb = divmod(flat, len(ib))
            u_out.append(min(ia[ra], ib[rb]))
            v_out.append(max(ia[ra], ib[rb]))
            w_out.append(reach[ra, rb])
    return np.array(u_out), np.array(v_out), np.array(w_out)


def mst_boruvka(points: np.ndarray, core: np.ndarray, knn_k: int = DEFAULT_KNN_K) -> np.ndarray:
    """Spanning tree of the mutual-reachability graph via Boruvka rounds
    over k-NN candidate edges, falling back to dense cross-component scans
    if the candidate graph is disconnected.

    Exact MST whenever the k-NN graph contains all MST edges (the usual
    case); otherwise a connected spanning tree built from the same rule.
    """
    points = np.asarray(points, dtype=np.float64)
    k = len(points)
    eu, ev, ew = _knn_candidate_edges(points, core, knn_k)
    eid = np.arange(len(ew))  # persistent tie-break order
    next_id = len(ew)
    parent = np.arange(k)
    out = []
    while len(out) < k - 1:
        labels = _compress(parent)
        cu, cv = labels[eu], labels[ev]
        alive = cu != cv
        if not alive.any():
            nu, nv, nw = _cross_component_edges(points, core, labels)
            eu, ev, ew = nu, nv, nw
            eid = np.arange(next_id, next_id + len(nw))
            next_id += len(nw)
            continue
        eu, ev, ew, eid = eu[alive], ev[alive], ew[alive], eid[alive]
        cu, cv = cu[alive], cv[alive]
        chosen = _min_edge_per_component(cu, cv, ew, eid)
        for e in chosen:
            ru = labels[eu[e]]
            rv = labels[ev[e]]
            # re-resolve through this round's unions
            while parent[ru] != ru:
                ru = parent[ru]
            while parent[rv] != rv:
                rv = parent[rv]
            if ru != rv:
                parent[max(ru, rv)] = min(ru, rv)
                out.append((eu[e], ev[e], ew[e]))
    return np.array(out, dtype=np.float64).reshape(-1, 3)


def minimum_spanning_tree(
    points: np.ndarray,
    core: np.ndarray,
    *,
    algorithm: str = "auto",
    knn_k: int = DEFAULT_KNN_K,
) -> np.ndarray:
    if algorithm == "auto":
        algorithm = "prim" if len(points) <= DENSE_MST_MAX_POINTS else "boruvka"
    if algorithm == "prim":
        return mst_prim(points, core)
    if algorithm == "boruvka":
        return mst_boruvka(points, core, knn_k=knn_k)
    raise ValueError(f"unknown MST algorithm {algorithm!r}")


def single_linkage(edges: np.ndarray, n_points: int) -> np.ndarray:
    """Dendrogram in scipy linkage format from MST edges.

    Rows are (left, right, distance, size); merged nodes get ids
    n_points, n_points+1, ... in merge order.  Edge ties are broken by
    (weight, u, v) so the result is independent of input edge order.
    """
    order = np.lexsort((edges[:, 1], edges[:, 0], edges[:, 2]))
    edges = edges[order]
    parent = np.arange(2 * n_points - 1)
    size = np.ones(2 * n_points - 1, dtype=np.int64)
    linkage = np.empty((n_points - 1, 4))

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for i in range(n_points - 1):
        u, v, w = edges[i]
        ru, rv = find(int(u)), find(int(v))
        new = n_points + i
        linkage[i] = (ru, rv, w, size[ru] + size[rv])
        size[new] = size[ru] + size[rv]
        parent[ru] = parent[rv] = new
    return linkage


def _bfs_hierarchy(linkage: np.ndarray, node: int, n_points: int) -> list[int]:
    out = []
    stack = [node]
    while stack:
        n = stack.pop()
        out.append(n)
        if n >= n_points:
            row = linkage[n - n_points]
            stack.append(int(row[0]))
            stack.append(int(row[1]))
    return out


@dataclass(frozen=True)
class CondensedTree:
    """Cluster tree after collapsing splits below min_cluster_size.

    Parallel arrays of (parent, child, lam, child_size) rows.  Cluster ids
    start at n_points (the root); children with child_size == 1 are points.
    lam is 1/distance of the split where the child departed its parent.
    """

    parent: np.ndarray
    child: np.ndarray
    lam: np.ndarray
    child_size: np.ndarray
    n_points: int

    def cluster_ids(self) -> np.ndarray:
        return np.unique(self.parent)

    def root(self) -> int:
        return self.n_points


def condense_tree(linkage: np.ndarray, min_cluster_size: int) -> CondensedTree:
    """Walk the dendrogram top-down; sides of a split smaller than
    min_cluster_size shed their points into the surviving cluster, equal
    or larger sides start child clusters."""
    n_points = len(linkage) + 1
    root = 2 * n_points - 2
    next_label = n_points + 1
    relabel = {root: n_points}
    ignore = set()
    rows = []

    def node_size(node: int) -> int:
        return 1 if node < n_points else int(linkage[node - n_points, 3])

    def shed_points(node: int, under: int, lam: float):
        for sub in _bfs_hierarchy(linkage, node, n_points):
            if sub < n_points:
                rows.append((under, sub, lam, 1))
            else:
                ignore.add(sub)

    for node in _bfs_order(linkage, root, n_points):
        if node < n_points or node in ignore:
            continue
        left, right, dist, _ = linkage[node - n_points]
        left, right = int(left), int(right)
        lam = 1.0 / dist if dist > 0.0 else np.inf
        label = relabel[node]
        big_left = node_size(left) >= min_cluster_size
        big_right = node_size(right) >= min_cluster_size
        if big_left and big_right:
            for child in (left, right):
                relabel[child] = next_label
                next_label += 1
                rows.append((label, relabel[child], lam, node_size(child)))
        elif not big_left and not big_right:
            shed_points(left, label, lam)
            shed_points(right, label, lam)
        elif big_left:
            relabel[left] = label
            shed_points(right, label, lam)
        else:
            relabel[right] = label
            shed_points(left, label, lam)

    rows_arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return CondensedTree(
        parent=rows_arr[:, 0].astype(np.int64),
        child=rows_arr[:, 1].astype(np.int64),
        lam=rows_arr[:, 2],
        child_size=rows_arr[:, 3].astype(np.int64),
        n_points=n_points,
    )


def _bfs_order(linkage: np.ndarray, root: int, n_points: int) -> list[int]:
    order = []
    frontier = [root]
    while frontier:
        order.extend(frontier)
        nxt = []
        for n in frontier:
            if n >= n_points:
                row = linkage[n - n_points]
                nxt.append(int(row[0]))
                nxt.append(int(row[1]))
        frontier = nxt
    return order


def cluster_stability(tree: CondensedTree) -> dict[int, float]:
    """Sum over members of (lambda_departure - lambda_birth), the
    excess-of-mass score of each cluster."""
    births: dict[int, float] = {tree.root(): 0.0}
    for parent, child, lam, size in zip(tree.parent, tree.child, tree.lam, tree.child_size):
        if size > 1:
            births[int(child)] = lam
    stability: dict[int, float] = {}
    for parent, lam, size in zip(tree.parent, tree.lam, tree.child_size):
        parent = int(parent)
        birth = births[parent]
        gain = 0.0 if lam == birth else (lam - birth) * size
        stability[parent] = stability.get(parent, 0.0) + gain
    for cluster in births:
        stability.setdefault(cluster, 0.0)
    return stability


def extract_eom(
    tree: CondensedTree,
    stability: dict[int, float],
    *,
    allow_single_cluster: bool = False,
) -> list[int]:
    """Excess-of-mass selection: a cluster is kept when at least as stable
    as its child clusters combined.  The root is only eligible when it is
    the sole cluster or allow_single_cluster is set."""
    stability = dict(stability)
    root = tree.root()
    clusters = sorted(stability)
    children: dict[int, list[int]] = {c: [] for c in clusters}
    for parent, child, size in zip(tree.parent, tree.child, tree.child_size):
        if size > 1:
            children[int(parent)].append(int(child))

    candidates = clusters if allow_single_cluster else [c for c in clusters if c != root]
    if not candidates:
        # Root is the only cluster; selecting nothing would label the whole
        # input noise, so fall back to the root.
        return [root]
    selected = {c: True for c in candidates}
    for node in sorted(candidates, reverse=True):
        subtree = sum(stability[c] for c in children[node])
        if children[node] and subtree > stability[node]:
            selected[node] = False
            stability[node] = subtree
        else:
            for sub in _descendant_clusters(children, node):
                selected[sub] = False
    return sorted(c for c, keep in selected.items() if keep)


def _descendant_clusters(children: dict[int, list[int]], node: int) -> list[int]:
    out = []
    stack = list(children[node])
    while stack:
        n = stack.pop()
        out.append(n)
        stack.extend(children[n])
    return out


def label_points(tree: CondensedTree, selected: list[int]) -> np.ndarray:
    """Noise/cluster labels: each point joins the nearest selected ancestor
    of the cluster it fell out of; reaching the root unselected means
    noise.  Selected clusters are numbered 0..M-1 in id order."""
    root = tree.root()
    selected_set = set(selected)
    label_of = {c: i for i, c in enumerate(sorted(selected_set))}

    parent_of: dict[int, int] = {}
    for parent, child, size in zip(tree.parent, tree.child, tree.child_size):
        if size > 1:
            parent_of[int(child)] = int(parent)

    def resolve(cluster: int) -> int:
        while cluster not in selected_set and cluster in parent_of:
            cluster = parent_of[cluster]
        return cluster

    root_selected = root in selected_set
    if root_selected:
        root_rows = tree.parent == root
        point_rows = root_rows & (tree.child_size == 1)
        root_lambda_max = tree.lam[root_rows].max() if root_rows.any() else np.inf

    labels = np.full(tree.n_points, NOISE, dtype=np.int64)
    for parent, child, lam, size in zip(tree.parent, tree.child, tree.lam, tree.child_size):
        if size != 1:
            continue
        cluster = resolve(int(parent))
        if cluster not in selected_set:
            continue
        if cluster == root and root_selected:
            # Root membership needs full persistence, otherwise stragglers
            # that only ever attached to the root would join it.
            if lam >= root_lambda_max:
                labels[int(child)] = label_of[root]
        else:
            labels[int(child)] = label_of[cluster]
    return labels


def hdbscan_labels(
    points: np.ndarray,
    min_cluster_size: int,
    min_samples: int,
    *,
    mst_algorithm: str = "auto",
    knn_k: int = DEFAULT_KNN_K,
    allow_single_cluster: bool = False,
) -> np.ndarray:
    """Full pipeline on raw feature vectors; returns per-point labels with
    -1 for noise."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a (K, D) matrix")
    if min_cluster_size < 2:
        raise ValueError("min_cluster_size must be >= 2")
    core = core_distances(points, min_samples)
    edges = minimum_spanning_tree(points, core, algorithm=mst_algorithm, knn_k=knn_k)
    linkage = single_linkage(edges, len(points))
    tree = condense_tree(linkage, min_cluster_size)
    stability = cluster_stability(tree)
    selected = extract_eom(tree, stability, allow_single_cluster=allow_single_cluster)
    return label_points(tree, selected)
