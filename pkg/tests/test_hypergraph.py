import numpy as np
import pytest
import scipy.sparse as sp

from _oracles import brute_comembership, brute_knn
from hyperspot.dataio import SpatialCoords
from hyperspot.errors import ValidationError
from hyperspot.features import CovarianceModel, TileFeatures
from hyperspot.hypergraph import (
    Hypergraph,
    adjacency_from_incidence,
    build_knn_hypergraph,
    degree_normalization,
    incidence_matrix,
    load_hyperedges,
    mahalanobis_gate,
    save_hyperedges,
    unit_weights,
)


def coords_of(points):
    pts = np.asarray(points, dtype=float)
    return SpatialCoords(pts, tuple(f"s{i}" for i in range(len(pts))))


class TestBuildKnn:
    def test_collinear_ties_break_low(self):
        # x = 0, 1, 2, 3; k = 1: spot 1 ties between 0 and 2 -> picks 0
        hg = build_knn_hypergraph(coords_of([(0, 0), (1, 0), (2, 0), (3, 0)]), 1)
        assert hg.hyperedges == ((0, 1), (0, 1), (1, 2), (2, 3))

    def test_saturation(self):
        hg = build_knn_hypergraph(coords_of([(0, 0), (1, 1), (3, 0), (0, 3)]), 3)
        assert all(edge == (0, 1, 2, 3) for edge in hg.hyperedges)

    def test_duplicate_coordinates_still_k_plus_one_members(self):
        hg = build_knn_hypergraph(coords_of([(0, 0), (0, 0), (0, 0), (5, 5)]), 2)
        assert all(len(edge) == 3 for edge in hg.hyperedges)
        assert hg.hyperedges[0] == (0, 1, 2)  # ties to lowest indices

    def test_matches_brute_force_oracle(self, rng):
        pts = rng.normal(size=(23, 2))
        k = 4
        hg = build_knn_hypergraph(coords_of(pts), k)
        expected = brute_knn(pts, k)
        for i, edge in enumerate(hg.hyperedges):
            assert edge == tuple(sorted([i, *expected[i]]))

    def test_k_too_large(self):
        with pytest.raises(ValidationError):
            build_knn_hypergraph(coords_of([(0, 0), (1, 1)]), 2)


class TestIncidence:
    def test_single_edge_column(self):
        hg = Hypergraph(3, ((0, 1),), unit_weights(1))
        column = incidence_matrix(hg).toarray()[:, 0]
        assert np.array_equal(column, [1.0, 1.0, 0.0])

    def test_identity(self):
        hg = Hypergraph(3, ((0,), (1,), (2,)), unit_weights(3))
        assert np.array_equal(incidence_matrix(hg).toarray(), np.eye(3))

    def test_knn_column_sums(self, grid_coords):
        k = 3
        hg = build_knn_hypergraph(grid_coords, k)
        H = incidence_matrix(hg)
        assert np.array_equal(np.asarray(H.sum(axis=0)).ravel(),
                              np.full(hg.n_edges, k + 1.0))


class TestDegreeNormalization:
    def test_single_full_hyperedge_gives_uniform_matrix(self):
        n = 5
        hg = Hypergraph(n, (tuple(range(n)),), unit_weights(1))
        norm = degree_normalization(incidence_matrix(hg))
        assert np.allclose(norm.propagation.toarray(), np.full((n, n), 1.0 / n),
                           atol=1e-12)

    def test_identity_incidence_gives_identity(self):
        H = sp.identity(4, format="csr")
        norm = degree_normalization(H)
        assert np.allclose(norm.propagation.toarray(), np.eye(4), atol=1e-12)

    def test_fixed_vector_identity(self, grid_coords):
        hg = build_knn_hypergraph(grid_coords, 3)
        norm = degree_normalization(incidence_matrix(hg), hg.edge_weights)
        fixed = np.sqrt(norm.vertex_degrees)
        assert np.allclose(norm.propagation @ fixed, fixed, atol=1e-10)

    def test_symmetric_and_bounded_spectrum(self, rng):
        pts = rng.normal(size=(30, 2))
        hg = build_knn_hypergraph(coords_of(pts), 5)
        norm = degree_normalization(incidence_matrix(hg), hg.edge_weights)
        dense = norm.propagation.toarray()
        assert np.abs(dense - dense.T).max() < 1e-10
        eigvals = np.linalg.eigvalsh(dense)
        assert eigvals.min() > -1e-10  # positive semidefinite
        assert eigvals.max() <= 1.0 + 1e-8

    def test_zero_column_rejected(self):
        H = sp.csr_matrix(np.array([[1.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(ValidationError, match="zero degree"):
            degree_normalization(H)


class TestAdjacency:
    def test_full_triangle(self):
        hg = Hypergraph(3, ((0, 1, 2),), unit_weights(1))
        adjacency = adjacency_from_incidence(incidence_matrix(hg))
        assert np.array_equal(adjacency, np.ones((3, 3)) - np.eye(3))

    def test_singletons_give_zero(self):
        hg = Hypergraph(2, ((0,), (1,)), unit_weights(2))
        assert adjacency_from_incidence(incidence_matrix(hg)).sum() == 0

    def test_chain(self):
        hg = Hypergraph(3, ((0, 1), (1, 2)), unit_weights(2))
        adjacency = adjacency_from_incidence(incidence_matrix(hg))
        expected = np.zeros((3, 3))
        expected[0, 1] = expected[1, 0] = expected[1, 2] = expected[2, 1] = 1.0
        assert np.array_equal(adjacency, expected)

    def test_matches_brute_force_comembership(self, rng):
        for trial in range(5):
            pts = rng.normal(size=(rng.integers(8, 20), 2))
            hg = build_knn_hypergraph(coords_of(pts), int(rng.integers(1, 4)))
            adjacency = adjacency_from_incidence(incidence_matrix(hg))
            oracle = brute_comembership(
                [set(e) for e in hg.hyperedges], hg.n_vertices
            )
            assert np.array_equal(adjacency, oracle)


class TestHypergraphValidation:
    def test_empty_edge_rejected(self):
        with pytest.raises(ValidationError, match="empty"):
            Hypergraph(2, ((0,), ()), unit_weights(2))

    def test_isolated_vertex_rejected_by_degree_normalization(self):
        hg = Hypergraph(3, ((0, 1),), unit_weights(1))
        with pytest.raises(ValidationError, match="zero degree"):
            degree_normalization(incidence_matrix(hg))

    def test_out_of_range_vertex(self):
        with pytest.raises(ValidationError):
            Hypergraph(2, ((0, 5),), unit_weights(1))


class TestEdgeListIO:
    def test_roundtrip(self, tmp_path, grid_coords):
        hg = build_knn_hypergraph(grid_coords, 3)
        p = tmp_path / "edges.txt"
        save_hyperedges(hg, str(p))
        back = load_hyperedges(str(p), n_vertices=hg.n_vertices)
        assert back.hyperedges == hg.hyperedges

    def test_format_is_one_line_per_edge(self, tmp_path):
        hg = Hypergraph(3, ((0, 1), (1, 2), (0, 2)), unit_weights(3))
        p = tmp_path / "edges.txt"
        save_hyperedges(hg, str(p))
        assert p.read_text() == "0 1\n1 2\n0 2\n"


class TestMahalanobisGate:
    def test_far_tile_dropped(self):
        # 4 spots on a line; spot 3's tile features are far from everyone
        coords = coords_of([(0, 0), (1, 0), (2, 0), (3, 0)])
        hg = build_knn_hypergraph(coords, 2)
        vecs = np.array([[0.0, 0], [0.1, 0], [0.2, 0], [50.0, 0]])
        cov = CovarianceModel(np.eye(2), np.eye(2), 0.0)
        gated = mahalanobis_gate(hg, TileFeatures(vecs), cov, quantile=0.5)
        for j, edge in enumerate(gated.hyperedges):
            assert j in edge  # centroid always kept
        assert 3 not in gated.hyperedges[2]  # far neighbour pruned

    def test_quantile_one_keeps_everything(self, grid_coords, rng):
        hg = build_knn_hypergraph(grid_coords, 3)
        vecs = rng.normal(size=(25, 3))
        cov = CovarianceModel(np.eye(3), np.eye(3), 0.0)
        gated = mahalanobis_gate(hg, TileFeatures(vecs), cov, quantile=1.0)
        assert gated.hyperedges == hg.hyperedges
