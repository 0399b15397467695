"""Shared fixtures for the graphot test suite"""

import os
import sys

import numpy as np
import pytest
from scipy.special import expit, softmax

# Add project root to Python path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from graphot.graph_core import DenseGraph, SparseGraph, dense_from_sparse, random_sparse_graph  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def triangle():
    return SparseGraph.from_edges([0, 0, 0], [(0, 1), (0, 2), (1, 2)], n_f=2)


@pytest.fixture
def path3():
    return SparseGraph.from_edges([0, 0, 0], [(0, 1), (1, 2)], n_f=2)


@pytest.fixture
def collapse_pair():
    """N=2, C = C_hat = 0, F = (0.5, 0.5), F_hat = (1, 0), h = 1"""
    C = np.zeros((2, 2, 1))
    G = DenseGraph(np.ones(2), np.array([[0.5], [0.5]]), C)
    G_hat = DenseGraph(np.ones(2), np.array([[1.0], [0.0]]), C)
    return G, G_hat


@pytest.fixture
def graph_pool():
    """30 small labeled graphs, 3 to 7 nodes"""
    rng = np.random.default_rng(7)
    return [random_sparse_graph(rng, int(rng.integers(3, 8)), n_f=2, n_c=1, p_edge=0.4) for _ in range(30)]


def _symmetric(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.transpose(1, 0, 2))


@pytest.fixture
def random_pair():
    """
    Factory for (target, prediction) dense pairs

    The target is a padded one-hot graph, the prediction has a mask in (0, 1)
    and simplex rows with strictly positive entries, so both ground-loss
    kinds are defined.
    """
    def make(rng: np.random.Generator, N: int, n_f: int = 3, n_c: int = 2, n: int = None):
        n = N if n is None else n
        g = random_sparse_graph(rng, n, n_f=n_f, n_c=n_c, p_edge=0.5)
        G = dense_from_sparse(g, N)
        h_hat = expit(rng.normal(size=N))
        F_hat = softmax(rng.normal(size=(N, n_f)), axis=1)
        C_hat = softmax(_symmetric(rng.normal(size=(N, N, n_c + 1))), axis=2)
        return G, DenseGraph(h_hat, F_hat, C_hat)
    return make


@pytest.fixture
def random_bistochastic():
    """Factory for strictly positive bistochastic plans (Sinkhorn of a random kernel)"""
    from graphot.config import SinkhornConfig
    from graphot.solvers import sinkhorn

    def make(rng: np.random.Generator, N: int) -> np.ndarray:
        K = rng.uniform(0.1, 10.0, size=(N, N))
        return sinkhorn(K, SinkhornConfig(n_iters=200, epsilon=1.0)).T
    return make
