import numpy as np
import pytest
from numpy.testing import assert_allclose

from graphot.errors import DimensionError, DomainError, UnsupportedError
from graphot.graph_core import DenseGraph, Permutation, apply_permutation, dense_from_sparse, random_sparse_graph
from graphot.ot_loss import (
    KL, L1, SQUARED_L2, GroundLoss, GroundLosses, LossWeights, assignment_costs, compute_loss,
    entropy_regularizer, l_align, l_pigvae, lot_fast, lot_gradients, lot_naive, lot_quadratic, pigvae_plus,
    prediction_from_logits, reorder, smooth_prediction, softsort_permuter,
)

PRESETS = [GroundLosses.squared_l2(), GroundLosses.cross_entropy(), GroundLosses.cross_entropy(node_discrete=2)]


def _l1_losses() -> GroundLosses:
    l1 = GroundLoss(L1)
    return GroundLosses(l1, l1, l1, l1, l1)


def _with(G: DenseGraph, h=None, F=None, C=None) -> DenseGraph:
    return DenseGraph(G.h if h is None else h, G.F if F is None else F, G.C if C is None else C)


class TestGroundLoss:
    @pytest.mark.parametrize("kind", [SQUARED_L2, KL])
    def test_factorization_matches_direct(self, rng, kind):
        loss = GroundLoss(kind)
        a = rng.dirichlet(np.ones(4), size=6)
        b = rng.dirichlet(np.ones(4), size=6)
        factorized = loss.f1(a) + loss.f2(b) - (loss.h1(a) * loss.h2(b)).sum(axis=-1)
        assert_allclose(factorized, loss.evaluate(a, b), atol=1e-12)

    def test_kl_of_identical_distributions(self, rng):
        a = rng.dirichlet(np.ones(3), size=5)
        assert_allclose(GroundLoss(KL).evaluate(a, a), 0.0, atol=1e-12)

    def test_kl_handles_zero_target(self):
        assert_allclose(GroundLoss(KL).evaluate([1.0, 0.0], [0.5, 0.5]), np.log(2.0))

    def test_kl_rejects_zero_prediction(self):
        with pytest.raises(DomainError):
            GroundLoss(KL).evaluate([0.5, 0.5], [1.0, 0.0])

    def test_l1_has_no_factorization(self):
        loss = GroundLoss(L1)
        assert not loss.factorizable
        assert_allclose(loss.evaluate([1.0, 0.0], [0.0, 0.5]), 1.5)
        with pytest.raises(UnsupportedError):
            loss.f1([1.0])

    def test_unknown_kind(self):
        with pytest.raises(UnsupportedError):
            GroundLoss("hinge")

    def test_kl_lift_is_binary_cross_entropy(self):
        loss = GroundLoss(KL)
        value = loss.evaluate(loss.lift(1.0), loss.lift(0.25))
        assert_allclose(value, -np.log(0.25))


class TestLossWeights:
    def test_for_size(self):
        w = LossWeights.for_size(4)
        assert_allclose([w.alpha_h, w.alpha_F_d, w.alpha_F_c, w.alpha_C_d, w.alpha_C_c],
                        [0.25, 0.25, 0.125, 1 / 16, 1 / 32])

    @pytest.mark.parametrize("N", [0, -3])
    def test_for_size_needs_a_slot(self, N):
        with pytest.raises(DimensionError):
            LossWeights.for_size(N)

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            LossWeights(alpha_h=-1.0)

    def test_scaled(self):
        assert LossWeights.unit().scaled(2.0) == LossWeights(2.0, 2.0, 2.0, 2.0, 2.0)


class TestLotAgreement:
    @pytest.mark.parametrize("gl", PRESETS)
    def test_fast_equals_naive(self, rng, random_pair, random_bistochastic, gl):
        for N in (2, 4, 6):
            G, G_hat = random_pair(rng, N, n=N - 1)
            T = random_bistochastic(rng, N)
            w = LossWeights.for_size(N)
            assert_allclose(lot_fast(G, G_hat, T, gl, w), lot_naive(G, G_hat, T, gl, w), rtol=1e-10, atol=1e-12)

    def test_fast_equals_naive_off_polytope(self, rng, random_pair):
        G, G_hat = random_pair(rng, 5)
        T = rng.normal(size=(5, 5))
        gl, w = GroundLosses.squared_l2(), LossWeights.unit()
        assert_allclose(lot_fast(G, G_hat, T, gl, w), lot_naive(G, G_hat, T, gl, w), rtol=1e-10)

    def test_assignment_costs_reproduce_loss(self, rng, random_pair, random_bistochastic):
        G, G_hat = random_pair(rng, 4)
        T = random_bistochastic(rng, 4)
        gl, w = GroundLosses.cross_entropy(), LossWeights.for_size(4)
        A, Q = assignment_costs(G, G_hat, gl, w)
        value = (A * T).sum() + np.einsum("ijkl,ij,kl->", Q, T, T)
        assert_allclose(value, lot_naive(G, G_hat, T, gl, w), rtol=1e-10)

    def test_nonnegative(self, rng, random_pair, random_bistochastic):
        for gl in PRESETS:
            G, G_hat = random_pair(rng, 5)
            assert lot_fast(G, G_hat, random_bistochastic(rng, 5), gl, LossWeights.for_size(5)) >= 0

    def test_l1_only_naive(self, rng, random_pair):
        G, G_hat = random_pair(rng, 3)
        T = np.full((3, 3), 1 / 3)
        with pytest.raises(UnsupportedError):
            lot_fast(G, G_hat, T, _l1_losses(), LossWeights.unit())
        with pytest.raises(UnsupportedError):
            lot_quadratic(G, G_hat, T, _l1_losses(), LossWeights.unit())
        naive = lot_naive(G, G_hat, T, _l1_losses(), LossWeights.unit())
        assert compute_loss("ot", G, G_hat, T, _l1_losses(), LossWeights.unit()) == naive

    def test_dimension_mismatch(self, rng, random_pair):
        G, _ = random_pair(rng, 3)
        _, G_hat = random_pair(rng, 4)
        with pytest.raises(DimensionError):
            lot_fast(G, G_hat, np.eye(3), GroundLosses.squared_l2(), LossWeights.unit())


class TestPermutationInvariance:
    def test_relabeled_prediction(self, rng, random_pair, random_bistochastic):
        G, G_hat = random_pair(rng, 5)
        T = random_bistochastic(rng, 5)
        P = Permutation.random(5, rng)
        gl, w = GroundLosses.cross_entropy(), LossWeights.for_size(5)
        moved = lot_fast(G, apply_permutation(G_hat, P), T @ P.matrix().T, gl, w)
        assert_allclose(moved, lot_fast(G, G_hat, T, gl, w), rtol=1e-10)

    def test_permuted_copy_has_zero_loss(self, rng):
        G = dense_from_sparse(random_sparse_graph(rng, 5, n_f=3, n_c=2), 6)
        P = Permutation.random(6, rng)
        plan = P.assignment_matrix()
        gl, w = GroundLosses.squared_l2(), LossWeights.for_size(6)
        assert_allclose(lot_fast(G, apply_permutation(G, P), plan, gl, w), 0.0, atol=1e-12)
        assert_allclose(l_pigvae(G, apply_permutation(G, P), plan, gl, w), 0.0, atol=1e-12)


class TestCollapseExample:
    """Two nodes with features (0.5, 0.5) against a prediction (1, 0)"""

    def test_pigvae_is_fooled(self, collapse_pair):
        G, G_hat = collapse_pair
        gl, w = GroundLosses.squared_l2(), LossWeights.unit()
        assert_allclose(l_pigvae(G, G_hat, np.full((2, 2), 0.5), gl, w), 0.0)

    def test_ot_is_not(self, collapse_pair):
        G, G_hat = collapse_pair
        gl, w = GroundLosses.squared_l2(), LossWeights.unit()
        for T in (np.eye(2), np.full((2, 2), 0.5), np.eye(2)[::-1]):
            assert_allclose(lot_fast(G, G_hat, T, gl, w), 0.5)
        assert_allclose(l_align(G, G_hat, gl, w), 0.5)


def _central(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += eps
        down[idx] -= eps
        grad[idx] = (fn(up) - fn(down)) / (2 * eps)
    return grad


class TestLotGradients:
    @pytest.mark.parametrize("gl", PRESETS)
    def test_matches_finite_differences(self, rng, random_pair, random_bistochastic, gl):
        N = 3
        G, G_hat = random_pair(rng, N, n=2)
        T = random_bistochastic(rng, N)
        w = LossWeights.for_size(N)
        grads = lot_gradients(G, G_hat, T, gl, w)
        tol = dict(rtol=1e-4, atol=1e-6)

        assert_allclose(grads.value, lot_fast(G, G_hat, T, gl, w), rtol=1e-10)
        assert_allclose(grads.d_T, _central(lambda t: lot_fast(G, G_hat, t, gl, w), T), **tol)
        assert_allclose(grads.d_h_hat, _central(lambda h: lot_fast(G, _with(G_hat, h=h), T, gl, w), G_hat.h.copy()), **tol)
        assert_allclose(grads.d_F_hat, _central(lambda F: lot_fast(G, _with(G_hat, F=F), T, gl, w), G_hat.F.copy()), **tol)
        assert_allclose(grads.d_C_hat, _central(lambda C: lot_fast(G, _with(G_hat, C=C), T, gl, w), G_hat.C.copy()), **tol)

    def test_kl_at_zero_prediction(self, rng, random_pair):
        G, G_hat = random_pair(rng, 3)
        C = G_hat.C.copy()
        C[0, 1, 0] = 0.0
        with pytest.raises(DomainError):
            lot_gradients(G, _with(G_hat, C=C), np.eye(3), GroundLosses.cross_entropy(), LossWeights.unit())


class TestAlignedLosses:
    def test_pigvae_identity_is_align(self, rng, random_pair):
        G, G_hat = random_pair(rng, 4)
        gl, w = GroundLosses.cross_entropy(), LossWeights.for_size(4)
        assert_allclose(l_pigvae(G, G_hat, np.eye(4), gl, w), l_align(G, G_hat, gl, w))

    def test_reorder(self, rng, random_pair):
        _, G_hat = random_pair(rng, 3)
        P = Permutation((1, 2, 0))
        h, F, C = reorder(G_hat, P.matrix())
        moved = apply_permutation(G_hat, P)
        assert_allclose(h, moved.h)
        assert_allclose(F, moved.F)
        assert_allclose(C, moved.C)

    def test_entropy_of_uniform_plan(self):
        assert_allclose(entropy_regularizer(np.full((4, 4), 0.25), np.ones(4)), 4 * np.log(4))

    def test_entropy_of_permutation_is_zero(self):
        assert entropy_regularizer(np.eye(3), np.ones(3)) == 0.0

    def test_entropy_ignores_padded_columns(self):
        assert_allclose(entropy_regularizer(np.full((2, 2), 0.5), np.array([1.0, 0.0])), np.log(2))

    def test_entropy_rejects_negative(self):
        with pytest.raises(DomainError):
            entropy_regularizer(np.array([[1.5, -0.5], [-0.5, 1.5]]), np.ones(2))

    def test_pigvae_plus(self, rng, random_pair, random_bistochastic):
        G, G_hat = random_pair(rng, 4, n=3)
        T = random_bistochastic(rng, 4)
        gl, w = GroundLosses.squared_l2(), LossWeights.for_size(4)
        base = l_pigvae(G, G_hat, T, gl, w)
        assert pigvae_plus(G, G_hat, T, gl, w, lam=0.0) == base
        assert_allclose(pigvae_plus(G, G_hat, T, gl, w, lam=10.0), base + 10.0 * entropy_regularizer(T, G.h))
        with pytest.raises(DomainError):
            pigvae_plus(G, G_hat, T, gl, w, lam=-1.0)


class TestSoftSort:
    def test_two_scores(self):
        plan = softsort_permuter(np.array([[1.0], [0.0]]), np.array([1.0]), tau=1.0)
        e = np.exp(-1.0)
        assert_allclose(plan.T[0], [1 / (1 + e), e / (1 + e)])
        assert_allclose(plan.T[1], [e / (1 + e), 1 / (1 + e)])

    def test_small_temperature_is_hard(self, rng):
        X = rng.normal(size=(5, 3))
        U = rng.normal(size=3)
        plan = softsort_permuter(X, U, tau=1e-5)
        s = X @ U
        expected = np.zeros((5, 5))
        expected[np.argsort(-s), np.arange(5)] = 1.0
        assert_allclose(plan.T, expected, atol=1e-6)

    def test_rows_sum_to_one(self, rng):
        plan = softsort_permuter(rng.normal(size=(4, 2)), rng.normal(size=2), tau=0.5)
        assert_allclose(plan.T.sum(axis=1), 1.0)

    def test_temperature_domain(self):
        with pytest.raises(DomainError):
            softsort_permuter(np.ones((2, 1)), np.ones(1), tau=0.0)


class TestPredictionHelpers:
    def test_prediction_from_logits(self, rng):
        G = prediction_from_logits(rng.normal(size=3), rng.normal(size=(3, 4)), rng.normal(size=(3, 3, 2)))
        assert np.all((G.h > 0) & (G.h < 1))
        assert_allclose(G.F.sum(axis=1), 1.0)
        assert_allclose(G.C.sum(axis=2), 1.0)

    def test_continuous_block_passes_through(self, rng):
        F_logits = rng.normal(size=(3, 4))
        G = prediction_from_logits(np.zeros(3), F_logits, np.zeros((3, 3, 2)), node_discrete=2)
        assert_allclose(G.F[:, 2:], F_logits[:, 2:])
        assert_allclose(G.F[:, :2].sum(axis=1), 1.0)

    def test_smooth_prediction_makes_kl_finite(self, triangle):
        G = dense_from_sparse(triangle, 4)
        smooth = smooth_prediction(G)
        assert np.all(smooth.F > 0) and np.all(smooth.C > 0)
        value = compute_loss("ot", G, smooth, np.eye(4), GroundLosses.cross_entropy(), LossWeights.for_size(4))
        assert 0 <= value < 1e-4

    def test_smooth_prediction_domain(self, triangle):
        with pytest.raises(DomainError):
            smooth_prediction(dense_from_sparse(triangle, 3), eps=0.0)


class TestComputeLoss:
    def test_dispatch(self, rng, random_pair, random_bistochastic):
        G, G_hat = random_pair(rng, 3)
        T = random_bistochastic(rng, 3)
        gl, w = GroundLosses.squared_l2(), LossWeights.for_size(3)
        assert compute_loss("ot", G, G_hat, T, gl, w) == lot_fast(G, G_hat, T, gl, w)
        assert compute_loss("pigvae", G, G_hat, T, gl, w) == l_pigvae(G, G_hat, T, gl, w)
        assert compute_loss("pigvae-plus", G, G_hat, T, gl, w, lam=1.0) == pigvae_plus(G, G_hat, T, gl, w, 1.0)

    def test_unknown_kind(self, rng, random_pair):
        G, G_hat = random_pair(rng, 2)
        with pytest.raises(UnsupportedError):
            compute_loss("mse", G, G_hat, np.eye(2), GroundLosses.squared_l2(), LossWeights.unit())
