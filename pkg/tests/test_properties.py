"""Seeded property suites over larger pools of random instances"""

import time
from itertools import combinations

import numpy as np
import pytest

from graphot.graph_core import (
    DenseGraph, Permutation, apply_permutation, dense_from_sparse, is_isomorphic_bruteforce, random_sparse_graph,
)
from graphot.ot_loss import GroundLosses, LossWeights, l_align, l_pigvae, lot_fast, lot_naive, reorder
from graphot.solvers import exhaustive_min, frank_wolfe_qap, round_to_permutation

GROUND_LOSSES = [GroundLosses.squared_l2(), GroundLosses.cross_entropy()]


def test_fast_loss_matches_naive(random_pair, random_bistochastic):
    rng = np.random.default_rng(2024)
    for trial in range(200):
        N = (4, 8, 12)[trial % 3]
        gl = GROUND_LOSSES[trial % 2]
        G, G_hat = random_pair(rng, N, n=int(rng.integers(1, N + 1)))
        T = random_bistochastic(rng, N)
        w = LossWeights.for_size(N)
        naive = lot_naive(G, G_hat, T, gl, w)
        assert abs(lot_fast(G, G_hat, T, gl, w) - naive) <= 1e-9 * (1 + abs(naive))


def _best_time(fn, repeats: int = 3) -> float:
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


@pytest.mark.slow
def test_fast_loss_scales_cubically(random_pair, random_bistochastic):
    rng = np.random.default_rng(5)
    gl = GroundLosses.squared_l2()
    sizes = (16, 32, 64, 128)
    times = []
    for N in sizes:
        G, G_hat = random_pair(rng, N)
        T = random_bistochastic(rng, N)
        w = LossWeights.for_size(N)
        times.append(_best_time(lambda: lot_fast(G, G_hat, T, gl, w)))
        if N == 64:
            naive = _best_time(lambda: lot_naive(G, G_hat, T, gl, w), repeats=1)
            assert naive >= 5 * times[-1]
    slope = np.polyfit(np.log(sizes), np.log(times), 1)[0]
    assert slope <= 3.4


@pytest.mark.slow
def test_zero_exhaustive_loss_iff_isomorphic(graph_pool):
    rng = np.random.default_rng(11)
    N = 7
    dense = [dense_from_sparse(g, N) for g in graph_pool]
    copies = [apply_permutation(G, Permutation.random(N, rng, fix_from=G.n_active)) for G in dense[:10]]
    pairs = list(combinations(dense, 2)) + list(zip(dense[:10], copies))
    gl, w = GroundLosses.squared_l2(), LossWeights.for_size(N)
    isomorphic = 0
    for G1, G2 in pairs:
        _, value = exhaustive_min(G1, G2, gl, w)
        expected = is_isomorphic_bruteforce(G1, G2)
        isomorphic += expected
        assert (value <= 1e-9) == expected
    assert isomorphic >= 10


class TestAlignedAndPigvae:
    @pytest.mark.parametrize("gl", GROUND_LOSSES)
    def test_equal_on_permutations(self, random_pair, gl):
        rng = np.random.default_rng(3)
        for _ in range(100):
            N = int(rng.integers(2, 7))
            G, G_hat = random_pair(rng, N)
            T = Permutation.random(N, rng).matrix()
            w = LossWeights.for_size(N)
            pigvae = l_pigvae(G, G_hat, T, gl, w)
            assert abs(pigvae - lot_naive(G, G_hat, T, gl, w)) <= 1e-10
            assert abs(pigvae - l_align(G, DenseGraph(*reorder(G_hat, T)), gl, w)) <= 1e-10

    @pytest.mark.parametrize("gl", GROUND_LOSSES)
    def test_pigvae_below_ot_on_soft_plans(self, random_pair, random_bistochastic, gl):
        rng = np.random.default_rng(4)
        for _ in range(100):
            N = int(rng.integers(2, 7))
            G, G_hat = random_pair(rng, N)
            T = random_bistochastic(rng, N)
            w = LossWeights.for_size(N)
            assert l_pigvae(G, G_hat, T, gl, w) <= lot_naive(G, G_hat, T, gl, w) + 1e-12


@pytest.mark.slow
def test_frank_wolfe_recovers_most_isomorphic_pairs():
    rng = np.random.default_rng(8)
    N = 6
    gl, w = GroundLosses.squared_l2(), LossWeights.for_size(N)
    exact = 0
    for _ in range(50):
        G = dense_from_sparse(random_sparse_graph(rng, N, n_f=12, n_c=1, p_edge=0.5), N)
        G_hat = apply_permutation(G, Permutation.random(N, rng))
        plan, _ = frank_wolfe_qap(G, G_hat, gl, w)
        P = round_to_permutation(plan)
        _, best = exhaustive_min(G, G_hat, gl, w)
        cost = lot_fast(G, G_hat, P.matrix(), gl, w)
        assert cost >= best - 1e-12
        exact += cost <= best + 1e-9
    assert exact >= 30
