"""Density-based clustering for per-group window aggregates.

Core points have at least min_pts points (themselves included) within
Euclidean distance eps; clusters are the connected components of core
points plus the border points they reach; everything else is an outlier.

Border points reachable from several clusters join the cluster of their
nearest core neighbor (distance ties broken by the core's coordinate
vector), so the resulting partition depends only on the point multiset,
never on input order.
"""

from __future__ import annotations

from dataclasses import dataclass

OUTLIER = -1


@dataclass(frozen=True)
class ClusterResult:
    labels: dict  # point key -> cluster id (>= 0) or OUTLIER
    eps: float
    min_pts: int

    @property
    def outliers(self) -> set:
        return {k for k, label in self.labels.items() if label == OUTLIER}

    def partition(self) -> set:
        """Clusters as frozensets of keys (id-free, for comparisons)."""
        clusters: dict = {}
        for key, label in self.labels.items():
            if label != OUTLIER:
                clusters.setdefault(label, set()).add(key)
        return {frozenset(members) for members in clusters.values()}


def _dist2(a, b) -> float:
    return sum((x - y) ** 2 for x, y in zip(a, b))


def dbscan(points, eps: float, min_pts: int) -> ClusterResult:
    """Cluster (key, vector) pairs; empty input yields an empty result."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    keys = [k for k, _ in points]
    vectors = [tuple(float(x) for x in vec) for _, vec in points]
    n = len(vectors)
    if n == 0:
        return ClusterResult({}, eps, min_pts)
    dim = len(vectors[0])
    if any(len(v) != dim for v in vectors):
        raise ValueError("points must share one dimension")

    eps2 = eps * eps
    neighbors = [[] for _ in range(n)]
    for i in range(n):
        vi = vectors[i]
        for j in range(i + 1, n):
            if _dist2(vi, vectors[j]) <= eps2:
                neighbors[i].append(j)
                neighbors[j].append(i)

    core = [len(neighbors[i]) + 1 >= min_pts for i in range(n)]
    labels = [None] * n
    next_id = 0
    for i in range(n):
        if not core[i] or labels[i] is not None:
            continue
        labels[i] = next_id
        stack = [i]
        while stack:
            u = stack.pop()
            for v in neighbors[u]:
                if core[v] and labels[v] is None:
                    labels[v] = next_id
                    stack.append(v)
        next_id += 1

    for i in range(n):
        if labels[i] is not None:
            continue
        best = None
        for j in neighbors[i]:
            if core[j]:
                rank = (_dist2(vectors[i], vectors[j]), vectors[j])
                if best is None or rank < best[0]:
                    best = (rank, labels[j])
        labels[i] = best[1] if best is not None else OUTLIER

    return ClusterResult(dict(zip(keys, labels)), eps, min_pts)
