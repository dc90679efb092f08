"""Loading, validation, synthesis, and masking of spatial expression datasets.

File interchange is plain UTF-8 CSV with a header row, "." decimal
separator, LF line endings. The first column always carries the spot id;
alignment between files is by id, never by row order.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError


def _float_repr(x: float) -> str:
    # repr of a Python float is the shortest string that parses back exactly,
    # which makes every CSV round-trip bit-identical.
    return repr(float(x))


def _check_unique(ids: Sequence[str], kind: str) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise ValidationError(f"duplicate {kind} id '{i}'")
        seen.add(i)


@dataclass(frozen=True)
class ExpressionMatrix:
    """Dense spots x genes matrix with aligned spot and gene identifiers."""

    values: np.ndarray
    spot_ids: tuple[str, ...]
    gene_ids: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spot_ids", tuple(self.spot_ids))
        object.__setattr__(self, "gene_ids", tuple(self.gene_ids))
        if values.ndim != 2:
            raise ValidationError(f"expression values must be 2-D, got shape {values.shape}")
        n, m = values.shape
        if n != len(self.spot_ids):
            raise ValidationError(f"{n} rows but {len(self.spot_ids)} spot ids")
        if m != len(self.gene_ids):
            raise ValidationError(f"{m} columns but {len(self.gene_ids)} gene ids")
        _check_unique(self.spot_ids, "spot")
        _check_unique(self.gene_ids, "gene")
        bad = ~np.isfinite(values)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValidationError(
                f"non-finite expression value at row {i} (spot '{self.spot_ids[i]}'), "
                f"column {j} (gene '{self.gene_ids[j]}')"
            )
        neg = values < 0
        if neg.any():
            i, j = np.argwhere(neg)[0]
            raise ValidationError(
                f"negative expression value at row {i} (spot '{self.spot_ids[i]}'), "
                f"column {j} (gene '{self.gene_ids[j]}')"
            )

    @property
    def n_spots(self) -> int:
        return self.values.shape[0]

    @property
    def n_genes(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SpatialCoords:
    """Planar coordinates for each spot, aligned with an ExpressionMatrix by id."""

    positions: np.ndarray
    spot_ids: tuple[str, ...]

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "spot_ids", tuple(self.spot_ids))
        if positions.ndim != 2 or positions.shape[1] != 2:
            raise ValidationError(f"positions must be (N, 2), got shape {positions.shape}")
        if positions.shape[0] != len(self.spot_ids):
            raise ValidationError(
                f"{positions.shape[0]} positions but {len(self.spot_ids)} spot ids"
            )
        _check_unique(self.spot_ids, "spot")
        bad = ~np.isfinite(positions)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValidationError(
                f"non-finite coordinate at row {i} (spot '{self.spot_ids[i]}', axis {j})"
            )

    @property
    def n_spots(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class TissueMask:
    """Per-spot boolean indicator of in-tissue spots."""

    in_tissue: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.in_tissue, dtype=bool)
        object.__setattr__(self, "in_tissue", mask)
        if mask.ndim != 1:
            raise ValidationError("tissue mask must be 1-D")
        if not mask.any():
            raise ValidationError("tissue mask keeps no spots")


@dataclass(frozen=True)
class GroundTruthLabels:
    """Known per-spot domain labels, for synthetic or annotated data."""

    labels: np.ndarray
    n_domains: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1:
            raise ValidationError("labels must be 1-D")
        if self.n_domains < 1:
            raise ValidationError("n_domains must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_domains):
            raise ValidationError(
                f"labels must lie in [0, {self.n_domains}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )


def _read_rows(path: str) -> list[list[str]]:
    if not os.path.exists(path):
        raise ValidationError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        return [row for row in csv.reader(fh)]


def load_expression(path: str) -> ExpressionMatrix:
    """Parse an expression CSV: header of gene ids, first column of spot ids.

    Every malformed cell is reported with its row/column location; ids must
    be unique and values finite and non-negative.
    """
    rows = _read_rows(path)
    if not rows:
        raise ValidationError(f"empty expression file: {path}")
    header = rows[0]
    if len(header) < 2:
        raise ValidationError(f"{path}: header must list at least one gene")
    gene_ids = [g.strip() for g in header[1:]]
    n_genes = len(gene_ids)
    spot_ids: list[str] = []
    values = np.empty((len(rows) - 1, n_genes), dtype=np.float64)
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != n_genes + 1:
            raise ValidationError(
                f"{path}: row {r} has {len(row)} fields, expected {n_genes + 1}"
            )
        spot_ids.append(row[0].strip())
        for c, cell in enumerate(row[1:]):
            try:
                v = float(cell)
            except ValueError:
                raise ValidationError(
                    f"{path}: non-numeric value '{cell}' at row {r}, column {c + 1} "
                    f"(gene '{gene_ids[c]}')"
                ) from None
            if not math.isfinite(v):
                raise ValidationError(
                    f"{path}: non-finite value '{cell}' at row {r}, column {c + 1} "
                    f"(gene '{gene_ids[c]}')"
                )
            values[r - 1, c] = v
    return ExpressionMatrix(values, tuple(spot_ids), tuple(gene_ids))


def write_expression(expr: ExpressionMatrix, path: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("spot," + ",".join(expr.gene_ids) + "\n")
        for sid, row in zip(expr.spot_ids, expr.values):
            fh.write(sid + "," + ",".join(_float_repr(v) for v in row) + "\n")


def load_coords(path: str) -> SpatialCoords:
    """Parse a coordinates CSV with columns spot_id, x, y."""
    rows = _read_rows(path)
    if not rows:
        raise ValidationError(f"empty coordinates file: {path}")
    spot_ids: list[str] = []
    positions = np.empty((len(rows) - 1, 2), dtype=np.float64)
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != 3:
            raise ValidationError(f"{path}: row {r} has {len(row)} fields, expected 3")
        spot_ids.append(row[0].strip())
        for c in (1, 2):
            try:
                v = float(row[c])
            except ValueError:
                raise ValidationError(
                    f"{path}: non-numeric coordinate '{row[c]}' at row {r}"
                ) from None
            if not math.isfinite(v):
                raise ValidationError(
                    f"{path}: non-finite coordinate '{row[c]}' at row {r} "
                    f"(spot '{row[0]}')"
                )
            positions[r - 1, c - 1] = v
    return SpatialCoords(positions, tuple(spot_ids))


def write_coords(coords: SpatialCoords, path: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("spot_id,x,y\n")
        for sid, (x, y) in zip(coords.spot_ids, coords.positions):
            fh.write(f"{sid},{_float_repr(x)},{_float_repr(y)}\n")


def align_coords(
    coords: SpatialCoords, spot_ids: Sequence[str], allow_extra: bool = False
) -> SpatialCoords:
    """Reorder coordinates to match the given spot-id order.

    Mismatches are hard errors naming the offending spot. With
    ``allow_extra`` the coordinate set may be a superset (used when
    plotting a masked subset against the original coordinates file).
    """
    index = {sid: i for i, sid in enumerate(coords.spot_ids)}
    rows = []
    for sid in spot_ids:
        if sid not in index:
            raise ValidationError(f"spot '{sid}' has no coordinates")
        rows.append(index[sid])
    if not allow_extra and len(spot_ids) != coords.n_spots:
        extra = sorted(set(coords.spot_ids) - set(spot_ids))
        raise ValidationError(f"coordinates contain unknown spot '{extra[0]}'")
    return SpatialCoords(coords.positions[rows], tuple(spot_ids))


def load_labels(path: str) -> tuple[tuple[str, ...], np.ndarray]:
    """Parse a labels CSV with columns spot_id, label (non-negative integers)."""
    rows = _read_rows(path)
    if not rows:
        raise ValidationError(f"empty labels file: {path}")
    spot_ids: list[str] = []
    labels: list[int] = []
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != 2:
            raise ValidationError(f"{path}: row {r} has {len(row)} fields, expected 2")
        spot_ids.append(row[0].strip())
        try:
            lab = int(row[1])
        except ValueError:
            raise ValidationError(
                f"{path}: non-integer label '{row[1]}' at row {r}"
            ) from None
        if lab < 0:
            raise ValidationError(f"{path}: negative label at row {r}")
        labels.append(lab)
    _check_unique(spot_ids, "spot")
    return tuple(spot_ids), np.asarray(labels, dtype=np.int64)


def write_labels(spot_ids: Sequence[str], labels: np.ndarray, path: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("spot_id,label\n")
        for sid, lab in zip(spot_ids, labels):
            fh.write(f"{sid},{int(lab)}\n")


def load_mask(path: str) -> tuple[tuple[str, ...], TissueMask]:
    """Parse a mask CSV with columns spot_id, in_tissue (0/1/true/false)."""
    rows = _read_rows(path)
    truthy = {"1": True, "true": True, "0": False, "false": False}
    spot_ids: list[str] = []
    flags: list[bool] = []
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != 2:
            raise ValidationError(f"{path}: row {r} has {len(row)} fields, expected 2")
        key = row[1].strip().lower()
        if key not in truthy:
            raise ValidationError(f"{path}: bad in_tissue value '{row[1]}' at row {r}")
        spot_ids.append(row[0].strip())
        flags.append(truthy[key])
    _check_unique(spot_ids, "spot")
    return tuple(spot_ids), TissueMask(np.asarray(flags, dtype=bool))


def write_mask(spot_ids: Sequence[str], mask: TissueMask, path: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("spot_id,in_tissue\n")
        for sid, flag in zip(spot_ids, mask.in_tissue):
            fh.write(f"{sid},{1 if flag else 0}\n")


def load_embedding(path: str) -> tuple[tuple[str, ...], np.ndarray]:
    """Parse an embedding CSV: spot_id column followed by numeric dimensions."""
    rows = _read_rows(path)
    if not rows or len(rows[0]) < 2:
        raise ValidationError(f"{path}: embedding file needs spot_id plus >=1 dimension")
    width = len(rows[0]) - 1
    spot_ids: list[str] = []
    values = np.empty((len(rows) - 1, width), dtype=np.float64)
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != width + 1:
            raise ValidationError(
                f"{path}: row {r} has {len(row)} fields, expected {width + 1}"
            )
        spot_ids.append(row[0].strip())
        try:
            values[r - 1] = [float(c) for c in row[1:]]
        except ValueError:
            raise ValidationError(f"{path}: non-numeric value at row {r}") from None
    if not np.isfinite(values).all():
        raise ValidationError(f"{path}: non-finite embedding value")
    _check_unique(spot_ids, "spot")
    return tuple(spot_ids), values


def write_embedding(
    spot_ids: Sequence[str], values: np.ndarray, path: str, prefix: str = "e"
) -> None:
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("spot_id," + ",".join(f"{prefix}{j}" for j in range(values.shape[1])) + "\n")
        for sid, row in zip(spot_ids, values):
            fh.write(sid + "," + ",".join(_float_repr(v) for v in row) + "\n")


def generate_synthetic(
    n_domains: int,
    spots_per_domain: int,
    n_genes: int,
    noise_sd: float,
    mix: float,
    seed: int,
) -> tuple[ExpressionMatrix, SpatialCoords, GroundTruthLabels]:
    """Synthesize a planar dataset of spatially contiguous expression domains.

    Domains are Gaussian point clouds around grid centers. Each domain owns
    a distinct block-contrast expression signature; per-gene Gaussian noise
    has sd ``noise_sd``, and a fraction ``mix`` of spots swap their
    signature for a random other domain's (ground-truth labels keep the
    spatial domain). Bit-deterministic for a given seed.

    Parameters
    ----------
    n_domains, spots_per_domain, n_genes : positive counts
    noise_sd : per-gene Gaussian noise level, >= 0
    mix : fraction in [0, 1) of spots with swapped expression signatures
    seed : RNG seed
    """
    if n_domains < 1 or spots_per_domain < 1 or n_genes < 1:
        raise ValidationError("all counts must be positive")
    if noise_sd < 0:
        raise ValidationError("noise_sd must be non-negative")
    if not 0.0 <= mix < 1.0:
        raise ValidationError("mix must lie in [0, 1)")
    if n_genes < n_domains:
        raise ValidationError(
            "n_genes must be >= n_domains so every domain gets a distinct signature"
        )
    rng = np.random.default_rng(seed)
    n = n_domains * spots_per_domain

    # Spatial blobs: grid centers spaced 10 units apart, cloud sd 1.
    grid = math.ceil(math.sqrt(n_domains))
    centers = np.array(
        [(10.0 * (d % grid), 10.0 * (d // grid)) for d in range(n_domains)]
    )
    labels = np.repeat(np.arange(n_domains), spots_per_domain)
    positions = centers[labels] + rng.normal(0.0, 1.0, size=(n, 2))

    # Block-contrast signatures: gene g is elevated in domain g % n_domains.
    signatures = np.ones((n_domains, n_genes))
    gene_domain = np.arange(n_genes) % n_domains
    for d in range(n_domains):
        signatures[d, gene_domain == d] = 5.0

    expr_domain = labels.copy()
    n_mixed = int(round(mix * n))
    if n_mixed:
        mixed = rng.choice(n, size=n_mixed, replace=False)
        shift = rng.integers(1, n_domains, size=n_mixed)
        expr_domain[mixed] = (expr_domain[mixed] + shift) % n_domains

    values = signatures[expr_domain] + rng.normal(0.0, noise_sd, size=(n, n_genes))
    np.clip(values, 0.0, None, out=values)  # expression stays non-negative

    spot_ids = tuple(f"s{i}" for i in range(n))
    expr = ExpressionMatrix(values, spot_ids, tuple(f"g{j}" for j in range(n_genes)))
    coords = SpatialCoords(positions, spot_ids)
    truth = GroundTruthLabels(labels, n_domains)
    return expr, coords, truth


def apply_tissue_mask(
    expr: ExpressionMatrix, coords: SpatialCoords, mask: TissueMask
) -> tuple[ExpressionMatrix, SpatialCoords]:
    """Drop spots outside the tissue region from both inputs, order preserved."""
    n = expr.n_spots
    if coords.n_spots != n:
        raise ValidationError(f"coords have {coords.n_spots} spots, expression has {n}")
    if mask.in_tissue.shape[0] != n:
        raise ValidationError(
            f"mask length {mask.in_tissue.shape[0]} does not match {n} spots"
        )
    keep = mask.in_tissue
    kept_ids = tuple(sid for sid, k in zip(expr.spot_ids, keep) if k)
    expr2 = ExpressionMatrix(expr.values[keep], kept_ids, expr.gene_ids)
    coords2 = SpatialCoords(coords.positions[keep], kept_ids)
    return expr2, coords2


def log1p_normalize(expr: ExpressionMatrix) -> ExpressionMatrix:
    """Elementwise log(1 + x); the single built-in normalization."""
    return ExpressionMatrix(np.log1p(expr.values), expr.spot_ids, expr.gene_ids)
