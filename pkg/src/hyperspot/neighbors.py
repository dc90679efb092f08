"""Exact k-nearest-neighbour search for desk-scale point sets.

Brute force on purpose: deterministic, exact, and the tie-break contract
(equal distances resolve to the lower index) is explicit. Shared by the
hypergraph builder, the SNN graph, and the iLISI metric.
"""

import numpy as np

from .errors import ValidationError


def pairwise_sq_distances(points: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances, (N, N), exact for desk scale."""
    pts = np.asarray(points, dtype=np.float64)
    sq = np.sum(pts * pts, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    np.maximum(d2, 0.0, out=d2)  # clip tiny negatives from cancellation
    return d2


def knn_indices(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest neighbours of every point, self excluded.

    Rows are ordered by ascending distance; exact distance ties resolve to
    the lower index (stable sort over an ascending index baseline).

    Parameters
    ----------
    points : (N, d) array
    k : number of neighbours, 1 <= k <= N - 1

    Returns
    -------
    (N, k) integer array of neighbour indices.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValidationError(f"points must be 2-D, got shape {pts.shape}")
    n = pts.shape[0]
    if not 1 <= k <= n - 1:
        raise ValidationError(f"k must be in [1, {n - 1}], got {k}")
    d2 = pairwise_sq_distances(pts)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]
