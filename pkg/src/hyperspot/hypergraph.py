"""Spatial KNN hypergraph: incidence matrix, degree normalizations,
propagation operator, and the derived pairwise adjacency.

One hyperedge per spot (the spot plus its k nearest spatial neighbours),
so |E| = |V| and every hyperedge has exactly k + 1 members. All distance
ties break to the lower vertex index, making construction deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dataio import SpatialCoords
from .errors import ValidationError
from .features import CovarianceModel, TileFeatures, mahalanobis_distance
from .neighbors import knn_indices


@dataclass(frozen=True)
class Hypergraph:
    """Vertex count, hyperedges as sorted vertex-index tuples, edge weights."""

    n_vertices: int
    hyperedges: tuple[tuple[int, ...], ...]
    edge_weights: np.ndarray

    def __post_init__(self):
        edges = tuple(tuple(sorted(int(v) for v in e)) for e in self.hyperedges)
        object.__setattr__(self, "hyperedges", edges)
        weights = np.asarray(self.edge_weights, dtype=np.float64)
        object.__setattr__(self, "edge_weights", weights)
        if self.n_vertices < 1:
            raise ValidationError("hypergraph needs at least one vertex")
        if weights.shape != (len(edges),):
            raise ValidationError(
                f"{len(edges)} hyperedges but {weights.shape} weights"
            )
        if (weights <= 0).any():
            raise ValidationError("edge weights must be strictly positive")
        # An uncovered vertex is legal here (degenerate toy graphs); the
        # operations that need positive degrees reject it themselves.
        for j, edge in enumerate(edges):
            if not edge:
                raise ValidationError(f"hyperedge {j} is empty")
            if len(set(edge)) != len(edge):
                raise ValidationError(f"hyperedge {j} repeats a vertex")
            if edge[0] < 0 or edge[-1] >= self.n_vertices:
                raise ValidationError(
                    f"hyperedge {j} references vertex outside [0, {self.n_vertices})"
                )

    @property
    def n_edges(self) -> int:
        return len(self.hyperedges)


def unit_weights(n_edges: int) -> np.ndarray:
    return np.ones(n_edges, dtype=np.float64)


def build_knn_hypergraph(coords: SpatialCoords, k: int) -> Hypergraph:
    """One hyperedge per spot: the spot plus its k nearest neighbours.

    Euclidean distances on the spot coordinates; ties break to the lower
    vertex index. Hyperedge j is centred on spot j.
    """
    n = coords.n_spots
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if k >= n:
        raise ValidationError(f"k = {k} needs more than {n} spots")
    nbrs = knn_indices(coords.positions, k)
    edges = tuple(
        tuple(sorted([i, *map(int, nbrs[i])])) for i in range(n)
    )
    return Hypergraph(n, edges, unit_weights(n))


def incidence_matrix(hg: Hypergraph) -> sp.csr_matrix:
    """Sparse |V| x |E| 0/1 matrix with a 1 where vertex v belongs to edge e."""
    rows, cols = [], []
    for j, edge in enumerate(hg.hyperedges):
        rows.extend(edge)
        cols.extend([j] * len(edge))
    data = np.ones(len(rows), dtype=np.float64)
    return sp.csr_matrix(
        (data, (rows, cols)), shape=(hg.n_vertices, hg.n_edges)
    )


@dataclass(frozen=True)
class DegreeNormalization:
    """Vertex/edge degrees and the symmetric propagation operator.

    ``propagation`` is Dv^(-1/2) H W De^(-1) H^T Dv^(-1/2): symmetric,
    positive semidefinite, spectral radius <= 1, and it fixes the vector
    Dv^(1/2) 1.
    """

    vertex_degrees: np.ndarray
    edge_degrees: np.ndarray
    propagation: sp.csr_matrix


def degree_normalization(
    H: sp.spmatrix, weights: np.ndarray | None = None
) -> DegreeNormalization:
    """Compute Dv, De, and the propagation operator from an incidence matrix.

    Vertex degree d(v) = sum_e w(e) h(v, e); edge degree is the member
    count. A zero row or column (isolated vertex, empty edge) is an error.
    """
    H = sp.csr_matrix(H, dtype=np.float64)
    n_vertices, n_edges = H.shape
    if weights is None:
        weights = unit_weights(n_edges)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (n_edges,):
        raise ValidationError(f"expected {n_edges} edge weights, got {weights.shape}")
    edge_degrees = np.asarray(H.sum(axis=0)).ravel()
    vertex_degrees = np.asarray(H @ weights).ravel()
    if (edge_degrees <= 0).any():
        j = int(np.flatnonzero(edge_degrees <= 0)[0])
        raise ValidationError(f"hyperedge {j} has zero degree")
    if (vertex_degrees <= 0).any():
        v = int(np.flatnonzero(vertex_degrees <= 0)[0])
        raise ValidationError(f"vertex {v} has zero degree")
    dv_inv_sqrt = sp.diags(1.0 / np.sqrt(vertex_degrees))
    w_over_de = sp.diags(weights / edge_degrees)
    half = dv_inv_sqrt @ H @ w_over_de  # Dv^-1/2 H W De^-1
    propagation = (half @ H.T @ dv_inv_sqrt).tocsr()
    return DegreeNormalization(vertex_degrees, edge_degrees, propagation)


def adjacency_from_incidence(H: sp.spmatrix) -> np.ndarray:
    """Dense binary co-membership adjacency: 1 iff two distinct vertices
    share at least one hyperedge; symmetric with a zero diagonal."""
    H = sp.csr_matrix(H)
    co = (H @ H.T).toarray()
    adjacency = (co > 0).astype(np.float64)
    np.fill_diagonal(adjacency, 0.0)
    return adjacency


def mahalanobis_gate(
    hg: Hypergraph,
    features: TileFeatures,
    cov: CovarianceModel,
    quantile: float,
) -> Hypergraph:
    """Drop hyperedge members whose tile is Mahalanobis-far from the centroid.

    Hyperedge j is centred on spot j; a member is removed when its distance
    to the centroid tile exceeds the given quantile of all centroid-member
    distances. Centroids always stay, so no hyperedge empties. Optional:
    the pipeline leaves this disabled by default.
    """
    if not 0.0 < quantile <= 1.0:
        raise ValidationError(f"quantile must lie in (0, 1], got {quantile}")
    if features.vectors.shape[0] != hg.n_vertices:
        raise ValidationError(
            f"{features.vectors.shape[0]} feature rows for {hg.n_vertices} vertices"
        )
    if hg.n_edges != hg.n_vertices:
        raise ValidationError("gating expects the per-spot KNN hypergraph layout")
    vecs = features.vectors
    dists: list[list[float]] = []
    for j, edge in enumerate(hg.hyperedges):
        dists.append(
            [mahalanobis_distance(vecs[j], vecs[v], cov) for v in edge if v != j]
        )
    flat = np.concatenate([np.asarray(d) for d in dists if d])
    threshold = float(np.quantile(flat, quantile)) if flat.size else np.inf
    new_edges = []
    for j, edge in enumerate(hg.hyperedges):
        members = [v for v in edge if v != j]
        kept = [v for v, d in zip(members, dists[j]) if d <= threshold]
        new_edges.append(tuple(sorted([j, *kept])))
    return Hypergraph(hg.n_vertices, tuple(new_edges), hg.edge_weights)


def save_hyperedges(hg: Hypergraph, path: str) -> None:
    """Write one line per hyperedge: space-separated vertex indices."""
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        for edge in hg.hyperedges:
            fh.write(" ".join(str(v) for v in edge) + "\n")


def load_hyperedges(path: str, n_vertices: int | None = None) -> Hypergraph:
    """Read an edge-list file written by :func:`save_hyperedges`."""
    import os

    if not os.path.exists(path):
        raise ValidationError(f"file not found: {path}")
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                raise ValidationError(f"{path}: line {lineno} is empty")
            try:
                edges.append(tuple(int(p) for p in parts))
            except ValueError:
                raise ValidationError(
                    f"{path}: non-integer vertex index on line {lineno}"
                ) from None
    if not edges:
        raise ValidationError(f"{path}: no hyperedges")
    if n_vertices is None:
        n_vertices = max(max(e) for e in edges) + 1
    return Hypergraph(n_vertices, tuple(edges), unit_weights(len(edges)))
