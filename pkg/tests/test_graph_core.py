import networkx as nx
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from graphot.errors import CapacityError, DimensionError, DomainError, GraphValidationError, SizeError
from graphot.graph_core import (
    DenseGraph, Permutation, SparseGraph, TransportPlan, apply_permutation, automorphism_count,
    canonical_form, dense_from_sparse, is_asymmetric, is_isomorphic_bruteforce, random_sparse_graph,
    sparse_from_dense,
)


class TestSparseGraph:
    def test_from_edges_normalizes_orientation(self):
        g = SparseGraph.from_edges([0, 1, 0], [(2, 0), (1, 0, 0)], n_f=2)
        assert g.edges == ((0, 1, 0), (0, 2, 0))
        assert g.n == 3

    @pytest.mark.parametrize("nodes,edges", [
        (((0, 0), (2, 0)), ()),                    # indices not contiguous
        (((0, 0), (1, 0)), ((0, 0, 0),)),          # self-loop
        (((0, 0), (1, 0)), ((1, 0, 0),)),          # src > dst
        (((0, 0), (1, 0)), ((0, 1, 0), (0, 1, 0))),  # duplicate
        (((0, 5), (1, 0)), ()),                    # node label out of range
        (((0, 0), (1, 0)), ((0, 1, 3),)),          # edge label out of range
        (((0, 0), (1, 0)), ((0, 4, 0),)),          # endpoint out of range
    ])
    def test_invalid_graphs_rejected(self, nodes, edges):
        with pytest.raises(GraphValidationError):
            SparseGraph(nodes, edges, n_f=2, n_c=1)

    def test_empty_alphabet_rejected(self):
        with pytest.raises(GraphValidationError):
            SparseGraph(((0, 0),), (), n_f=1, n_c=0)

    def test_relabel_moves_nodes(self):
        g = SparseGraph.from_edges([0, 1, 2], [(0, 1)], n_f=3)
        moved = g.relabel([2, 0, 1])
        assert list(moved.labels) == [1, 2, 0]
        assert moved.edges == ((0, 2, 0),)


class TestDenseFromSparse:
    def test_single_node(self):
        g = SparseGraph.from_edges([0], [], n_f=2)
        G = dense_from_sparse(g, 2)
        assert_array_equal(G.h, [1, 0])
        assert_array_equal(G.F, [[1, 0], [0, 0]])
        assert_array_equal(G.C[:, :, 0], np.ones((2, 2)))
        assert_array_equal(G.C[:, :, 1], np.zeros((2, 2)))

    def test_triangle_channels(self, triangle):
        G = dense_from_sparse(triangle, 3)
        for i in range(3):
            for j in range(3):
                expected = [1, 0] if i == j else [0, 1]
                assert_array_equal(G.C[i, j], expected)
        assert G.d_c == 2 and G.d_f == 2

    def test_capacity(self, triangle):
        with pytest.raises(CapacityError):
            dense_from_sparse(triangle, 2)

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            g = random_sparse_graph(rng, int(rng.integers(1, 9)), n_f=3, n_c=2)
            back = sparse_from_dense(dense_from_sparse(g, 9), n_f=3, n_c=2)
            assert back == g
            assert canonical_form(back) == canonical_form(g)

    def test_distinct_graphs_distinct_encodings(self, triangle, path3):
        assert not np.array_equal(dense_from_sparse(triangle, 4).C, dense_from_sparse(path3, 4).C)

    def test_arrays_are_read_only(self, triangle):
        G = dense_from_sparse(triangle, 3)
        with pytest.raises(ValueError):
            G.F[0, 0] = 5.0


class TestSparseFromDense:
    def test_threshold_drops_nodes(self):
        G = DenseGraph(np.array([0.9, 0.1]), np.array([[0.2, 0.8], [1.0, 0.0]]), np.zeros((2, 2, 2)))
        g = sparse_from_dense(G)
        assert g.n == 1
        assert list(g.labels) == [1]

    def test_ties_go_to_lowest_channel(self):
        C = np.zeros((2, 2, 3))
        C[0, 1] = C[1, 0] = [0.0, 0.5, 0.5]
        G = DenseGraph(np.ones(2), np.array([[0.5, 0.5], [0.3, 0.7]]), C)
        g = sparse_from_dense(G)
        assert list(g.labels) == [0, 1]
        assert g.edges == ((0, 1, 0),)

    def test_threshold_domain(self, triangle):
        with pytest.raises(DomainError):
            sparse_from_dense(dense_from_sparse(triangle, 3), threshold=1.0)


class TestPermutation:
    def test_rejects_non_bijection(self):
        with pytest.raises(DomainError):
            Permutation((0, 0, 1))

    def test_matrix_convention(self, rng, triangle):
        G = dense_from_sparse(SparseGraph.from_edges([0, 1, 1], [(0, 1)], n_f=2), 3)
        P = Permutation((2, 0, 1))
        M = P.matrix()
        moved = apply_permutation(G, P)
        assert_allclose(moved.h, M @ G.h)
        assert_allclose(moved.F, M @ G.F)
        assert_allclose(moved.C, np.einsum("ij,jlc,kl->ikc", M, G.C, M))

    def test_assignment_matrix_rows(self):
        P = Permutation((1, 2, 0))
        M = P.assignment_matrix()
        for i, j in enumerate(P.perm):
            assert M[i, j] == 1

    def test_inverse_and_compose(self, rng):
        P = Permutation.random(6, rng)
        assert P.compose(P.inverse()) == Permutation.identity(6)

    def test_random_fixes_padding(self, rng):
        P = Permutation.random(8, rng, fix_from=5)
        assert P.perm[5:] == (5, 6, 7)


class TestApplyPermutation:
    def test_identity(self, triangle):
        G = dense_from_sparse(triangle, 4)
        H = apply_permutation(G, Permutation.identity(4))
        assert_array_equal(H.C, G.C)

    def test_inverse_restores(self, rng):
        g = random_sparse_graph(rng, 6, n_f=3, n_c=2)
        G = dense_from_sparse(g, 7)
        P = Permutation.random(7, rng)
        back = apply_permutation(apply_permutation(G, P), P.inverse())
        assert_array_equal(back.h, G.h)
        assert_array_equal(back.F, G.F)
        assert_array_equal(back.C, G.C)

    def test_two_node_swap(self):
        g = SparseGraph.from_edges([0, 1], [(0, 1)], n_f=2)
        G = dense_from_sparse(g, 2)
        H = apply_permutation(G, Permutation((1, 0)))
        assert_array_equal(H.F, G.F[::-1])
        assert_array_equal(H.C, G.C[::-1, ::-1])

    def test_preserves_symmetry(self, rng):
        G = dense_from_sparse(random_sparse_graph(rng, 6), 6)
        assert apply_permutation(G, Permutation.random(6, rng)).is_symmetric()

    def test_length_mismatch(self, triangle):
        with pytest.raises(DimensionError):
            apply_permutation(dense_from_sparse(triangle, 3), Permutation.identity(4))


class TestIsomorphism:
    def test_permuted_copy(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 8))
            G = dense_from_sparse(random_sparse_graph(rng, n, n_f=2), 8)
            P = Permutation.random(8, rng, fix_from=n)
            assert is_isomorphic_bruteforce(G, apply_permutation(G, P))

    def test_triangle_vs_path(self, triangle, path3):
        assert not is_isomorphic_bruteforce(dense_from_sparse(triangle, 3), dense_from_sparse(path3, 3))

    def test_different_sizes(self, triangle):
        edge = SparseGraph.from_edges([0, 0], [(0, 1)], n_f=2)
        assert not is_isomorphic_bruteforce(dense_from_sparse(triangle, 4), dense_from_sparse(edge, 4))

    def test_size_guard(self):
        g = SparseGraph.from_edges([0] * 11, [], n_f=1)
        G = dense_from_sparse(g, 11)
        with pytest.raises(SizeError):
            is_isomorphic_bruteforce(G, G)

    def test_agrees_with_networkx(self):
        rng = np.random.default_rng(11)
        pool = [random_sparse_graph(rng, 4, n_f=2, n_c=1, p_edge=0.5) for _ in range(12)]
        match = lambda a, b: a["label"] == b["label"]  # noqa: E731
        for a in pool:
            for b in pool:
                expected = nx.is_isomorphic(a.to_networkx(), b.to_networkx(), node_match=match, edge_match=match)
                assert is_isomorphic_bruteforce(dense_from_sparse(a, 4), dense_from_sparse(b, 4)) == expected


class TestAutomorphisms:
    def test_triangle(self, triangle):
        assert automorphism_count(triangle) == 6
        assert not is_asymmetric(triangle)

    def test_labeled_path_is_asymmetric(self):
        g = SparseGraph.from_edges([0, 1, 2], [(0, 1), (1, 2)], n_f=3)
        assert automorphism_count(g) == 1
        assert is_asymmetric(g)

    def test_limit(self, triangle):
        assert automorphism_count(triangle, limit=2) == 2


class TestTransportPlan:
    def test_uniform(self):
        T = TransportPlan.uniform(4)
        assert T.is_bistochastic()
        assert not T.is_permutation()

    def test_from_permutation(self):
        T = TransportPlan.from_permutation(Permutation((2, 0, 1)))
        assert T.is_permutation()
        assert T.marginal_error() == 0.0

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            TransportPlan(np.array([[1.5, -0.5], [-0.5, 1.5]]))

    def test_non_square_rejected(self):
        with pytest.raises(DimensionError):
            TransportPlan(np.ones((2, 3)))
