"""Clustering evaluation: adjusted Rand index and the integrated local
inverse Simpson's index (iLISI).

ARI uses exact integer pair counting over the contingency table, so hand
cases come out as exact rationals. iLISI uses fixed-size uniform-weight
neighbourhoods: for each spot, the inverse Simpson index of the label
fractions among its k nearest embedding neighbours.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .neighbors import knn_indices


@dataclass(frozen=True)
class MetricReport:
    """Evaluation summary: ARI (when ground truth exists) and iLISI."""

    ari: float | None
    ilisi_mean: float
    ilisi_per_spot: np.ndarray
    k_lisi: int


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected agreement between two labelings of the same spots.

    Computed from the contingency table with exact integer arithmetic;
    returns 1.0 for identical partitions including the degenerate
    all-singletons / all-one-cluster cases (0/0 -> 1 by convention).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValidationError(f"label shapes differ: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n < 2:
        raise ValidationError("need at least two spots")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    r, c = int(ai.max()) + 1, int(bi.max()) + 1
    table = np.zeros((r, c), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def comb2(x: np.ndarray) -> int:
        x = x.astype(object)  # exact integer arithmetic
        return int((x * (x - 1) // 2).sum())

    sum_cells = comb2(table.ravel())
    sum_rows = comb2(table.sum(axis=1))
    sum_cols = comb2(table.sum(axis=0))
    pairs = n * (n - 1) // 2
    # Exact rational, reduced to one correctly rounded float division.
    numerator = 2 * (sum_cells * pairs - sum_rows * sum_cols)
    denominator = (sum_rows + sum_cols) * pairs - 2 * sum_rows * sum_cols
    if denominator == 0:
        return 1.0
    return numerator / denominator


def ilisi(
    embedding: np.ndarray, labels, k_lisi: int
) -> tuple[float, np.ndarray]:
    """Mean and per-spot inverse Simpson's index of neighbourhood labels.

    For spot i with neighbour label fractions p_l over its k_lisi nearest
    embedding neighbours (self excluded, uniform weights), the per-spot
    value is 1 / sum_l p_l^2: the effective number of labels around i,
    between 1 and the number of distinct labels.
    """
    x = np.asarray(embedding, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2:
        raise ValidationError(f"embedding must be 2-D, got shape {x.shape}")
    n = x.shape[0]
    if labels.shape != (n,):
        raise ValidationError(f"{labels.shape} labels for {n} spots")
    if not 2 <= k_lisi < n:
        raise ValidationError(f"k_lisi must be in [2, {n - 1}], got {k_lisi}")
    _, lab = np.unique(labels, return_inverse=True)
    n_labels = int(lab.max()) + 1
    nbrs = knn_indices(x, k_lisi)
    per_spot = np.empty(n)
    for i in range(n):
        counts = np.bincount(lab[nbrs[i]], minlength=n_labels)
        p = counts / float(k_lisi)
        per_spot[i] = 1.0 / float(np.sum(p * p))
    return float(per_spot.mean()), per_spot


def evaluate(
    embedding: np.ndarray,
    labels,
    truth=None,
    k_lisi: int = 30,
) -> MetricReport:
    """Bundle ARI (against truth, when given) and iLISI of the clustering."""
    k_eff = min(k_lisi, np.asarray(embedding).shape[0] - 1)
    mean, per_spot = ilisi(embedding, labels, k_eff)
    ari = None if truth is None else adjusted_rand_index(truth, labels)
    return MetricReport(ari=ari, ilisi_mean=mean, ilisi_per_spot=per_spot, k_lisi=k_eff)


def write_metric_report(report: MetricReport, path: str) -> None:
    """Serialize a report as a flat, deterministically ordered JSON file."""
    payload: dict = {}
    if report.ari is not None:
        payload["ari"] = report.ari
    payload["ilisi_mean"] = report.ilisi_mean
    payload["ilisi_per_spot"] = [float(v) for v in report.ilisi_per_spot]
    payload["k_lisi"] = report.k_lisi
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True))
        fh.write("\n")
