#!/usr/bin/env python3
"""Tile features, Mahalanobis similarity, and the optional hyperedge gate.

Histology input is optional pipeline-wide. When an image is present, each
spot gets a tile centered at its pixel position, the tile is summarized by
a statistical feature vector, and Mahalanobis distances between tiles can
prune dissimilar neighbours out of the spatial hyperedges.
"""

import numpy as np

from hyperspot import (
    SpatialCoords,
    build_knn_hypergraph,
    covariance_matrix,
    extract_tiles,
    mahalanobis_distance,
    mahalanobis_gate,
    tile_feature_vector,
)
from hyperspot.features import compute_tile_features

# A toy image: bright tissue on the left half, dark background on the right.
rng = np.random.default_rng(0)
image = np.zeros((64, 64), dtype=np.uint8)
image[:, :32] = rng.integers(150, 255, size=(64, 32), dtype=np.uint8)
image[:, 32:] = rng.integers(0, 40, size=(64, 32), dtype=np.uint8)

xs = np.concatenate([rng.uniform(8, 24, 8), rng.uniform(40, 56, 8)])
ys = rng.uniform(8, 56, 16)
coords = SpatialCoords(np.column_stack([xs, ys]),
                       tuple(f"s{i}" for i in range(16)))

tiles = extract_tiles(image, coords, tile_size=8)
print(f"tiles: {tiles.tiles.shape} (spot, row, col, channel)")

vec = tile_feature_vector(tiles.tiles[0])
print(f"feature vector per tile: {vec.shape[0]} dims "
      f"(mean {vec[0]:.1f}, sd {vec[1]:.1f}, 8 histogram bins)")

feats = compute_tile_features(tiles)
cov = covariance_matrix(feats)
same_side = mahalanobis_distance(feats.vectors[0], feats.vectors[1], cov)
cross_side = mahalanobis_distance(feats.vectors[0], feats.vectors[8], cov)
print(f"Mahalanobis distance, same side {same_side:.2f} vs across {cross_side:.2f}")

hg = build_knn_hypergraph(coords, k=5)
gated = mahalanobis_gate(hg, feats, cov, quantile=0.5)
before = sum(len(e) for e in hg.hyperedges)
after = sum(len(e) for e in gated.hyperedges)
print(f"gate at the median distance: {before} memberships -> {after}")
