"""Histology tile features, Mahalanobis similarity, and PCA reduction.

The tile featurizer is a deterministic statistical summary (means, sds,
intensity histograms) behind a pluggable ``tile -> vector`` interface;
any callable with that shape can stand in for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataio import SpatialCoords
from .errors import NumericError, ValidationError

HIST_BINS = 8


@dataclass(frozen=True)
class TileSet:
    """One square 8-bit pixel patch per spot, all of identical shape."""

    tiles: np.ndarray  # (N, tile_size, tile_size, channels) uint8
    tile_size: int

    def __post_init__(self):
        tiles = np.asarray(self.tiles, dtype=np.uint8)
        object.__setattr__(self, "tiles", tiles)
        if tiles.ndim != 4:
            raise ValidationError(f"tiles must be 4-D, got shape {tiles.shape}")
        if tiles.shape[1] != self.tile_size or tiles.shape[2] != self.tile_size:
            raise ValidationError(
                f"tiles of shape {tiles.shape[1:3]} do not match tile_size {self.tile_size}"
            )


@dataclass(frozen=True)
class TileFeatures:
    """N x F feature vectors summarizing each spot tile."""

    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        object.__setattr__(self, "vectors", vectors)
        if vectors.ndim != 2 or vectors.shape[1] < 2:
            raise ValidationError(
                f"feature vectors must be (N, F>=2), got shape {vectors.shape}"
            )
        if not np.isfinite(vectors).all():
            raise ValidationError("non-finite tile feature")


@dataclass(frozen=True)
class CovarianceModel:
    """Ridge-regularized feature covariance with its cached inverse."""

    sigma: np.ndarray
    sigma_inv: np.ndarray
    ridge: float


def load_image(path: str) -> np.ndarray:
    """Read an 8-bit PNG (grayscale or RGB) as an (H, W, C) uint8 array."""
    from PIL import Image

    try:
        with Image.open(path) as img:
            if img.mode == "L":
                arr = np.asarray(img, dtype=np.uint8)[:, :, None]
            else:
                arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError:
        raise ValidationError(f"image file not found: {path}") from None
    return arr


def extract_tiles(image: np.ndarray, coords: SpatialCoords, tile_size: int) -> TileSet:
    """Cut one tile_size square per spot, centered at its pixel position.

    Coordinates are interpreted as (x = column, y = row) pixel positions.
    Regions falling outside the image are zero-padded; a window that misses
    the image entirely is an error.
    """
    if tile_size < 1:
        raise ValidationError(f"tile_size must be >= 1, got {tile_size}")
    img = np.asarray(image)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValidationError(f"image must be 2-D or 3-D, got shape {img.shape}")
    img = img.astype(np.uint8, copy=False)
    h, w, c = img.shape
    half = tile_size // 2
    tiles = np.zeros((coords.n_spots, tile_size, tile_size, c), dtype=np.uint8)
    for i, (x, y) in enumerate(coords.positions):
        r0 = int(round(y)) - half
        c0 = int(round(x)) - half
        r1, c1 = r0 + tile_size, c0 + tile_size
        if r1 <= 0 or c1 <= 0 or r0 >= h or c0 >= w:
            raise ValidationError(
                f"spot '{coords.spot_ids[i]}' at ({x}, {y}) lies outside the image"
            )
        rs, cs = max(r0, 0), max(c0, 0)
        re, ce = min(r1, h), min(c1, w)
        tiles[i, rs - r0 : re - r0, cs - c0 : ce - c0] = img[rs:re, cs:ce]
    return TileSet(tiles, tile_size)


def tile_feature_vector(tile: np.ndarray) -> np.ndarray:
    """Statistical summary of one tile: per-channel mean, sd, 8-bin histogram.

    Histograms are normalized to fractions so the vector is independent of
    tile size. Deterministic; the default featurizer for the pipeline.
    """
    arr = np.asarray(tile, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.size == 0:
        raise ValidationError("empty tile")
    channels = arr.shape[2]
    means = arr.mean(axis=(0, 1))
    sds = arr.std(axis=(0, 1))
    hists = []
    for ch in range(channels):
        counts, _ = np.histogram(arr[:, :, ch], bins=HIST_BINS, range=(0.0, 256.0))
        hists.append(counts / counts.sum())
    return np.concatenate([means, sds] + hists)


def compute_tile_features(tiles: TileSet, featurizer=tile_feature_vector) -> TileFeatures:
    """Apply a featurizer to every tile; results are order-independent."""
    return TileFeatures(np.stack([featurizer(t) for t in tiles.tiles]))


def covariance_matrix(features: TileFeatures, ridge: float | None = None) -> CovarianceModel:
    """Unbiased sample covariance plus ridge * I, with a cached inverse.

    ``ridge=None`` picks 1e-6 times the mean diagonal of the raw covariance,
    enough to keep typically collinear tile features invertible. A matrix
    still singular after the ridge raises NumericError.
    """
    x = features.vectors
    n = x.shape[0]
    if n < 2:
        raise ValidationError("covariance needs at least two feature vectors")
    centered = x - x.mean(axis=0)
    raw = centered.T @ centered / (n - 1)
    raw = (raw + raw.T) / 2.0  # kill float asymmetry
    if ridge is None:
        ridge = 1e-6 * float(np.trace(raw)) / raw.shape[0]
    if ridge < 0:
        raise ValidationError("ridge must be non-negative")
    sigma = raw + ridge * np.eye(raw.shape[0])
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise NumericError(
            f"covariance is singular even with ridge {ridge:g}; increase the ridge"
        ) from None
    ident = np.eye(sigma.shape[0])
    inv = np.linalg.solve(chol.T, np.linalg.solve(chol, ident))
    return CovarianceModel(sigma=sigma, sigma_inv=inv, ridge=float(ridge))


def mahalanobis_distance(t_i: np.ndarray, t_j: np.ndarray, cov: CovarianceModel) -> float:
    """Covariance-normalized distance sqrt((a-b)^T Sigma^-1 (a-b))."""
    a = np.asarray(t_i, dtype=np.float64).ravel()
    b = np.asarray(t_j, dtype=np.float64).ravel()
    f = cov.sigma.shape[0]
    if a.shape[0] != f or b.shape[0] != f:
        raise ValidationError(
            f"feature dimensions {a.shape[0]}/{b.shape[0]} do not match covariance ({f})"
        )
    d = a - b
    q = float(d @ cov.sigma_inv @ d)
    return math.sqrt(q) if q > 0.0 else 0.0


@dataclass(frozen=True)
class PCAModel:
    """Mean vector, orthonormal components (rows), and explained variances."""

    mean: np.ndarray
    components: np.ndarray  # (n_components, D)
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, scores: np.ndarray) -> np.ndarray:
        return np.asarray(scores, dtype=np.float64) @ self.components + self.mean


def pca_fit_transform(matrix: np.ndarray, n_components: int) -> tuple[np.ndarray, PCAModel]:
    """Project onto the top-variance orthonormal directions of centered data.

    Components are ordered by descending explained variance with a
    deterministic sign convention: the largest-magnitude loading of each
    component is positive.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"matrix must be 2-D, got shape {x.shape}")
    n, d = x.shape
    if not 1 <= n_components <= min(n, d):
        raise ValidationError(
            f"n_components must be in [1, {min(n, d)}], got {n_components}"
        )
    mean = x.mean(axis=0)
    centered = x - mean
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    # Sign convention: flip each component so its largest |loading| is positive.
    for k in range(vt.shape[0]):
        j = int(np.argmax(np.abs(vt[k])))
        if vt[k, j] < 0:
            vt[k] = -vt[k]
            u[:, k] = -u[:, k]
    variances = s**2 / max(n - 1, 1)
    total = float(centered.var(axis=0, ddof=1).sum()) if n > 1 else 1.0
    scores = u[:, :n_components] * s[:n_components]
    model = PCAModel(
        mean=mean,
        components=vt[:n_components],
        explained_variance=variances[:n_components],
        explained_variance_ratio=variances[:n_components] / total if total > 0 else
        np.zeros(n_components),
    )
    return scores, model


def write_tile_features(spot_ids, features: TileFeatures, path: str) -> None:
    from .dataio import write_embedding

    write_embedding(spot_ids, features.vectors, path, prefix="f")
