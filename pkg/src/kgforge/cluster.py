"""Density-based clustering of reduced points: an exact O(n^2) HDBSCAN.

Pipeline: core distances -> mutual-reachability minimum spanning tree ->
single-linkage hierarchy -> condensed tree (min_cluster_size) -> stability
based cluster selection. Labels are canonicalized (decreasing size, ties by
smallest member id) so equal inputs give byte-equal outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embed import pairwise_euclidean
from .errors import TooFewPoints

# Lambda values are 1/edge-weight; zero-weight merges (duplicate points) are
# clamped instead of producing infinities.
_MIN_WEIGHT = 1e-12


@dataclass
class ClusterParams:
    min_cluster_size: int
    min_samples: int | None = None
    allow_single_cluster: bool = False

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be >= 2")
        if self.min_samples is None:
            self.min_samples = self.min_cluster_size
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")


@dataclass
class ClusterAssignment:
    labels: np.ndarray  # -1 noise, else 0..C-1 by decreasing cluster size
    probabilities: np.ndarray  # in [0, 1], 0 for noise
    condensed_tree: list[tuple[int, int, float, int]] = field(default_factory=list)
    # rows (parent, child, lambda, size); child < n is a point, else a cluster

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size and self.labels.max() >= 0 else 0


def core_distances(points: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance from each point to its min_samples-th nearest other point."""
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if min_samples >= n:
        raise TooFewPoints(f"min_samples={min_samples} with only {n} points")
    core = np.empty(n, dtype=np.float64)
    block = max(1, (1 << 22) // max(1, n))
    for start in range(0, n, block):
        stop = min(start + block, n)
        dmat = pairwise_euclidean(x[start:stop], x)
        for r in range(stop - start):
            i = start + r
            row = np.delete(dmat[r], i)
            core[i] = np.partition(row, min_samples - 1)[min_samples - 1]
    return core


def mutual_reachability_mst(
    points: np.ndarray, core: np.ndarray
) -> list[tuple[int, int, float]]:
    """Minimum spanning tree under d_mreach(i,j) = max(core_i, core_j, d(i,j)).

    Prim's algorithm, O(n^2) time, O(n) memory (distance rows on demand).
    Tied candidate edges are resolved toward the lexicographically smaller
    (i, j) pair. Edges are returned sorted by (weight, i, j).
    """
    x = np.asarray(points, dtype=np.float64)
    core = np.asarray(core, dtype=np.float64)
    n = x.shape[0]
    if n <= 1:
        return []
    in_tree = np.zeros(n, dtype=bool)
    best_w = np.full(n, np.inf)
    best_src = np.full(n, -1, dtype=np.int64)
    edges: list[tuple[int, int, float]] = []

    current = 0
    in_tree[0] = True
    for _ in range(n - 1):
        drow = pairwise_euclidean(x[current : current + 1], x)[0]
        mreach = np.maximum(np.maximum(core[current], core), drow)
        for j in np.flatnonzero(~in_tree):
            j = int(j)
            w = mreach[j]
            if w < best_w[j]:
                best_w[j] = w
                best_src[j] = current
            elif w == best_w[j] and best_src[j] >= 0:
                if tuple(sorted((current, j))) < tuple(sorted((int(best_src[j]), j))):
                    best_src[j] = current
        nxt = -1
        nxt_key = None
        for j in np.flatnonzero(~in_tree):
            j = int(j)
            a, b = sorted((int(best_src[j]), j))
            key = (float(best_w[j]), a, b)
            if nxt_key is None or key < nxt_key:
                nxt_key = key
                nxt = j
        a, b = sorted((int(best_src[nxt]), nxt))
        edges.append((a, b, float(best_w[nxt])))
        in_tree[nxt] = True
        current = nxt
    edges.sort(key=lambda e: (e[2], e[0], e[1]))
    return edges


def _single_linkage(mst: list[tuple[int, int, float]], n: int):
    """Merge MST edges in ascending (weight, i, j) order into a dendrogram.

    Returns a list of (left_node, right_node, weight, size); leaves are
    0..n-1, internal node t is n+t.
    """
    parent = list(range(n))

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    node_of = list(range(n))
    sizes = {i: 1 for i in range(n)}
    merges: list[tuple[int, int, float, int]] = []
    for t, (i, j, w) in enumerate(sorted(mst, key=lambda e: (e[2], e[0], e[1]))):
        ri, rj = find(i), find(j)
        new = n + t
        size = sizes[node_of[ri]] + sizes[node_of[rj]]
        merges.append((node_of[ri], node_of[rj], w, size))
        parent[rj] = ri
        node_of[ri] = new
        sizes[new] = size
    return merges


def _condense(merges, n: int, min_cluster_size: int):
    """Condensed-tree rows (parent, child, lambda, size).

    Walking the dendrogram top-down, a split is real only when at least two
    sides have min_cluster_size points; smaller sides fall out of the
    current cluster at lambda = 1/weight of the split. Mutual-reachability
    weights tie frequently (core distances dominate many pairs), so chains
    of equal-weight merges are expanded into one simultaneous multi-way
    split; the result is then independent of merge order among ties.
    """
    if not merges:
        return [], n

    def node_size(v: int) -> int:
        return 1 if v < n else merges[v - n][3]

    def leaves(v: int) -> list[int]:
        out, stack = [], [v]
        while stack:
            u = stack.pop()
            if u < n:
                out.append(u)
            else:
                left, right, _, _ = merges[u - n]
                stack.extend((left, right))
        return out

    def level_children(node: int) -> list[int]:
        w = merges[node - n][2]
        out, stack = [], [merges[node - n][0], merges[node - n][1]]
        while stack:
            u = stack.pop()
            if u >= n and merges[u - n][2] == w:
                stack.extend((merges[u - n][0], merges[u - n][1]))
            else:
                out.append(u)
        return out

    root = n + len(merges) - 1
    rows: list[tuple[int, int, float, int]] = []
    relabel = {root: n}
    next_label = n + 1
    stack = [root]
    while stack:
        node = stack.pop()
        w = merges[node - n][2]
        lam = 1.0 / max(w, _MIN_WEIGHT)
        cid = relabel[node]
        children = level_children(node)
        real = [c for c in children if node_size(c) >= min_cluster_size]
        small = [c for c in children if node_size(c) < min_cluster_size]
        if len(real) >= 2:
            for child in sorted(real, key=lambda c: min(leaves(c))):
                relabel[child] = next_label
                rows.append((cid, next_label, lam, node_size(child)))
                next_label += 1
                stack.append(child)  # size >= min_cluster_size >= 2: internal
            for comp in small:
                for p in sorted(leaves(comp)):
                    rows.append((cid, p, lam, 1))
        elif len(real) == 1:
            for comp in small:
                for p in sorted(leaves(comp)):
                    rows.append((cid, p, lam, 1))
            big = real[0]
            relabel[big] = cid
            stack.append(big)
        else:
            for p in sorted(leaves(node)):
                rows.append((cid, p, lam, 1))
    return rows, next_label


def _stability(rows, n: int) -> dict[int, float]:
    births = {n: 0.0}
    for _, child, lam, _ in rows:
        if child >= n:
            births[child] = lam
    stab = {c: 0.0 for c in births}
    for parent, _, lam, size in rows:
        stab[parent] += (lam - births[parent]) * size
    return stab


def _select(rows, stability: dict[int, float], n: int, allow_single_cluster: bool) -> set[int]:
    children: dict[int, list[int]] = {}
    for parent, child, _, _ in rows:
        if child >= n:
            children.setdefault(parent, []).append(child)
    scores = dict(stability)
    is_cluster = {c: True for c in scores}
    candidates = [c for c in sorted(scores, reverse=True) if allow_single_cluster or c != n]
    for node in candidates:
        subtree = sum(scores[ch] for ch in children.get(node, []))
        if subtree > scores[node]:
            is_cluster[node] = False
            scores[node] = subtree
        else:
            stack = list(children.get(node, []))
            while stack:
                d = stack.pop()
                is_cluster[d] = False
                stack.extend(children.get(d, []))
    return {c for c, keep in is_cluster.items() if keep and (allow_single_cluster or c != n)}


def extract_clusters(
    mst: list[tuple[int, int, float]],
    params: ClusterParams,
    n: int | None = None,
) -> ClusterAssignment:
    """Condense the single-linkage hierarchy and pick stable clusters."""
    if n is None:
        n = len(mst) + 1 if mst else 1
    labels = np.full(n, -1, dtype=np.int64)
    probs = np.zeros(n, dtype=np.float64)

    merges = _single_linkage(mst, n)
    rows, _ = _condense(merges, n, params.min_cluster_size)
    if not rows:
        return ClusterAssignment(labels, probs, rows)

    stab = _stability(rows, n)
    allow_single = params.allow_single_cluster and n >= params.min_cluster_size
    selected = _select(rows, stab, n, allow_single)
    if not selected:
        return ClusterAssignment(labels, probs, rows)

    cluster_parent = {child: parent for parent, child, _, _ in rows if child >= n}
    point_rows = [(child, parent, lam) for parent, child, lam, _ in rows if child < n]

    members: dict[int, list[tuple[int, float]]] = {c: [] for c in selected}
    for point, parent, lam in point_rows:
        node = parent
        while node is not None and node not in selected:
            node = cluster_parent.get(node)
        if node is not None:
            members[node].append((point, lam))

    ordered = sorted(
        selected, key=lambda c: (-len(members[c]), min(p for p, _ in members[c]))
    )
    for new_id, c in enumerate(ordered):
        lam_max = max(lam for _, lam in members[c])
        for point, lam in members[c]:
            labels[point] = new_id
            probs[point] = lam / lam_max if lam_max > 0 else 1.0
    return ClusterAssignment(labels, probs, rows)


def hdbscan(points: np.ndarray, params: ClusterParams) -> ClusterAssignment:
    """core distances -> mutual-reachability MST -> condensed-tree extraction."""
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        return ClusterAssignment(np.empty(0, dtype=np.int64), np.empty(0))
    core = core_distances(x, params.min_samples)
    mst = mutual_reachability_mst(x, core)
    return extract_clusters(mst, params, n=n)
