"""Downstream clustering of the fused embedding.

Two methods: seeded k-means++ with Lloyd iterations and exact empty-cluster
repair, and Leiden community detection (local moving, refinement,
aggregation) over a shared-nearest-neighbour graph. Both are deterministic
given their seed; tests compare partitions via ARI, never raw label values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .neighbors import knn_indices

_GAIN_EPS = 1e-12  # strict-improvement threshold against float noise


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-spot integer labels plus the method and parameters that made them."""

    labels: np.ndarray
    method: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValidationError("labels must be a non-empty 1-D sequence")
        used = np.unique(labels)
        if used[0] != 0 or used[-1] != used.size - 1:
            raise ValidationError("labels must be contiguous from 0 with no gaps")

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1


def kmeans(
    x: np.ndarray, n_clusters: int, seed: int = 0, max_iter: int = 100
) -> ClusterAssignment:
    """Seeded k-means++ with Lloyd iterations to an assignment fixpoint.

    Distance ties resolve to the lower center index. An emptied cluster is
    repaired by stealing the farthest point from the largest cluster, so
    exactly ``n_clusters`` labels are always used.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"points must be 2-D, got shape {x.shape}")
    n = x.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValidationError(f"n_clusters must be in [1, {n}], got {n_clusters}")
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    chosen = [int(rng.integers(n))]
    d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    while len(chosen) < n_clusters:
        total = float(d2.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:  # all remaining points sit on chosen centers
            taken = set(chosen)
            idx = next(i for i in range(n) if i not in taken)
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    centers = x[chosen].copy()

    labels = np.full(n, -1, dtype=np.int64)
    inertia_trace: list[float] = []
    for _ in range(max_iter):
        dists = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dists, axis=1)  # ties -> lower center index

        counts = np.bincount(new_labels, minlength=n_clusters)
        for empty in np.flatnonzero(counts == 0):
            eligible = np.flatnonzero(counts >= 2)
            big = int(eligible[np.argmax(counts[eligible])])
            members = np.flatnonzero(new_labels == big)
            far = int(members[np.argmax(dists[members, big])])
            new_labels[far] = empty
            counts[big] -= 1
            counts[empty] += 1

        for c in range(n_clusters):
            centers[c] = x[new_labels == c].mean(axis=0)
        inertia_trace.append(float(np.sum((x - centers[new_labels]) ** 2)))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    return ClusterAssignment(
        labels=labels,
        method="kmeans",
        params={
            "n_clusters": n_clusters,
            "max_iter": max_iter,
            "inertia": inertia_trace[-1],
            "inertia_trace": inertia_trace,
        },
        seed=seed,
    )


@dataclass(frozen=True)
class SNNGraph:
    """Weighted shared-nearest-neighbour graph: edges (i, j) with i < j."""

    n_vertices: int
    edges: np.ndarray  # (E, 2) int64
    weights: np.ndarray  # (E,) float64 in (0, 1]

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)
        if weights.shape != (edges.shape[0],):
            raise ValidationError("one weight per edge required")
        if edges.size:
            if (edges[:, 0] == edges[:, 1]).any():
                raise ValidationError("self-loops are not allowed")
            if edges.min() < 0 or edges.max() >= self.n_vertices:
                raise ValidationError("edge endpoint outside vertex range")
            if (weights <= 0).any() or (weights > 1).any():
                raise ValidationError("weights must lie in (0, 1]")


def build_snn_graph(x: np.ndarray, k_snn: int) -> SNNGraph:
    """Connect points that share neighbours among their k_snn nearest.

    The shared count for a pair is the number of common members of their
    neighbour lists, plus one when the two points are mutual nearest
    neighbours; the edge weight is that count divided by k_snn. Pairs with
    nothing shared stay unconnected.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k_snn < n:
        raise ValidationError(f"k_snn must be in [1, {n - 1}], got {k_snn}")
    nbrs = knn_indices(x, k_snn)
    member = np.zeros((n, n), dtype=np.int64)
    member[np.arange(n)[:, None], nbrs] = 1
    shared = member @ member.T + (member & member.T)
    iu, ju = np.triu_indices(n, k=1)
    hit = shared[iu, ju] > 0
    edges = np.column_stack([iu[hit], ju[hit]])
    weights = shared[iu[hit], ju[hit]] / float(k_snn)
    return SNNGraph(n, edges, weights)


class _AdjGraph:
    """Internal weighted adjacency with per-node aggregated self weight."""

    def __init__(self, n: int, edges: np.ndarray, weights: np.ndarray,
                 self_weight: np.ndarray | None = None):
        self.n = n
        nbrs: list[list[int]] = [[] for _ in range(n)]
        wts: list[list[float]] = [[] for _ in range(n)]
        for (i, j), w in zip(edges, weights):
            nbrs[i].append(int(j))
            wts[i].append(float(w))
            nbrs[j].append(int(i))
            wts[j].append(float(w))
        self.nbrs = [np.asarray(a, dtype=np.int64) for a in nbrs]
        self.wts = [np.asarray(a, dtype=np.float64) for a in wts]
        self.self_weight = (
            np.zeros(n) if self_weight is None else np.asarray(self_weight, float)
        )
        self.strength = np.array(
            [self.wts[v].sum() + 2.0 * self.self_weight[v] for v in range(n)]
        )
        self.m = float(self.strength.sum()) / 2.0


def _canonicalize(labels: np.ndarray) -> np.ndarray:
    """Relabel to 0..C-1 in order of first occurrence (deterministic)."""
    mapping: dict[int, int] = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        out[i] = mapping.setdefault(int(lab), len(mapping))
    return out


def _local_move(g: _AdjGraph, labels: np.ndarray, order: np.ndarray,
                resolution: float) -> bool:
    """Greedy modularity moves until a full pass changes nothing."""
    two_m = 2.0 * g.m
    counts = np.bincount(labels, minlength=g.n)
    comm_strength = np.zeros(g.n)
    np.add.at(comm_strength, labels, g.strength)
    free = {int(c) for c in np.flatnonzero(counts == 0)}
    improved = False
    moved = True
    while moved:
        moved = False
        for v in order:
            v = int(v)
            a = int(labels[v])
            k_v = g.strength[v]
            w_to: dict[int, float] = {}
            for u, w in zip(g.nbrs[v], g.wts[v]):
                c = int(labels[u])
                w_to[c] = w_to.get(c, 0.0) + w
            comm_strength[a] -= k_v
            counts[a] -= 1
            best_c = a
            best_score = w_to.get(a, 0.0) - resolution * k_v * comm_strength[a] / two_m
            # leaving for a fresh singleton community scores exactly 0
            if counts[a] == 0:
                fresh = a
            else:
                fresh = min(free) if free else None
            if fresh is not None and fresh != a and 0.0 > best_score + _GAIN_EPS:
                best_c, best_score = fresh, 0.0
            for c in sorted(w_to):
                if c == a:
                    continue
                score = w_to[c] - resolution * k_v * comm_strength[c] / two_m
                if score > best_score + _GAIN_EPS:
                    best_c, best_score = c, score
            labels[v] = best_c
            comm_strength[best_c] += k_v
            counts[best_c] += 1
            if counts[best_c] == 1:
                free.discard(best_c)
            if counts[a] == 0:
                free.add(a)
            if best_c != a:
                moved = True
                improved = True
    return improved


def _refine(g: _AdjGraph, labels: np.ndarray, order: np.ndarray,
            resolution: float) -> np.ndarray:
    """Split each community into well-connected parts: singletons merge
    greedily, but only inside their community and only while isolated."""
    two_m = 2.0 * g.m
    refined = np.arange(g.n, dtype=np.int64)
    ref_strength = g.strength.copy()
    ref_count = np.ones(g.n, dtype=np.int64)
    for v in order:
        v = int(v)
        if ref_count[refined[v]] > 1:
            continue
        k_v = g.strength[v]
        w_to: dict[int, float] = {}
        for u, w in zip(g.nbrs[v], g.wts[v]):
            if labels[u] != labels[v]:
                continue
            c = int(refined[u])
            w_to[c] = w_to.get(c, 0.0) + w
        own = int(refined[v])
        best_c, best_score = own, 0.0
        for c in sorted(w_to):
            score = w_to[c] - resolution * k_v * ref_strength[c] / two_m
            if score > best_score + _GAIN_EPS:
                best_c, best_score = c, score
        if best_c != own:
            refined[v] = best_c
            ref_strength[own] -= k_v
            ref_strength[best_c] += k_v
            ref_count[own] -= 1
            ref_count[best_c] += 1
    return refined


def _aggregate(
    g: _AdjGraph, refined: np.ndarray, labels: np.ndarray
) -> tuple[_AdjGraph, np.ndarray]:
    """Collapse refined communities to nodes; keep the phase-1 partition."""
    n_new = int(refined.max()) + 1
    self_w = np.zeros(n_new)
    acc: dict[tuple[int, int], float] = {}
    for v in range(g.n):
        cv = int(refined[v])
        self_w[cv] += g.self_weight[v]
        for u, w in zip(g.nbrs[v], g.wts[v]):
            if u < v:
                continue  # each undirected edge once
            cu = int(refined[u])
            if cu == cv:
                self_w[cv] += w
            else:
                key = (min(cv, cu), max(cv, cu))
                acc[key] = acc.get(key, 0.0) + w
    if acc:
        keys = sorted(acc)
        edges = np.asarray(keys, dtype=np.int64)
        weights = np.asarray([acc[k] for k in keys])
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
        weights = np.zeros(0)
    agg = _AdjGraph(n_new, edges, weights, self_w)
    new_labels = np.zeros(n_new, dtype=np.int64)
    for v in range(g.n):
        new_labels[refined[v]] = labels[v]
    return agg, _canonicalize(new_labels)


def modularity(graph: SNNGraph, labels: np.ndarray, resolution: float = 1.0) -> float:
    """Configurable-resolution modularity of a partition of an SNN graph."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (graph.n_vertices,):
        raise ValidationError("one label per vertex required")
    m = float(graph.weights.sum())
    if m == 0.0:
        return 0.0
    strength = np.zeros(graph.n_vertices)
    for (i, j), w in zip(graph.edges, graph.weights):
        strength[i] += w
        strength[j] += w
    internal: dict[int, float] = {}
    for (i, j), w in zip(graph.edges, graph.weights):
        if labels[i] == labels[j]:
            c = int(labels[i])
            internal[c] = internal.get(c, 0.0) + w
    q = 0.0
    for c in np.unique(labels):
        d_c = float(strength[labels == c].sum())
        q += internal.get(int(c), 0.0) / m - resolution * (d_c / (2.0 * m)) ** 2
    return q


def leiden_communities(
    graph: SNNGraph, resolution: float = 1.0, seed: int = 0
) -> ClusterAssignment:
    """Leiden community detection: local moving, refinement, aggregation.

    The vertex visit order is seeded-shuffled once; every other tie breaks
    to the lowest index, so results are deterministic. The returned
    partition never scores below the all-singletons partition.
    """
    if resolution <= 0:
        raise ValidationError("resolution must be positive")
    n = graph.n_vertices
    g = _AdjGraph(n, graph.edges, graph.weights)
    order0 = np.random.default_rng(seed).permutation(n)
    node_map = np.arange(n, dtype=np.int64)
    labels = np.arange(g.n, dtype=np.int64)
    level = 0
    while True:
        order = order0 if level == 0 else np.arange(g.n)
        if g.m > 0.0:
            _local_move(g, labels, order, resolution)
        labels = _canonicalize(labels)
        n_comms = int(labels.max()) + 1
        if n_comms == g.n:
            break
        refined = _canonicalize(_refine(g, labels, order, resolution))
        if int(refined.max()) + 1 == g.n:
            refined = labels  # no refinement splits; aggregate by communities
        g, labels = _aggregate(g, refined, labels)
        node_map = refined[node_map]
        level += 1
    final = _canonicalize(labels[node_map])
    return ClusterAssignment(
        labels=final,
        method="leiden",
        params={"resolution": resolution},
        seed=seed,
    )
