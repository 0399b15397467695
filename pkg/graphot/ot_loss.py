"""
Permutation-invariant graph losses for graphot

L_OT (naive quadruple loop and the O(N^3) factorized path), closed-form
gradients, L_ALIGN, L_PIGVAE, the padded PIGVAE+ variant with entropy
regularization and the SoftSort permuter.

Conventions: the target graph G comes first and the prediction G_hat second,
ground losses are l(target, prediction), and T[i, j] couples target node i
with predicted node j.
"""

from dataclasses import dataclass, replace as dc_replace
from typing import List, Optional, Tuple
import logging

import numpy as np
from scipy.special import expit, softmax, xlogy

from graphot.errors import DimensionError, DomainError, UnsupportedError
from graphot.graph_core import DenseGraph, PlanLike, TransportPlan, plan_array

logger = logging.getLogger(__name__)

SQUARED_L2 = "squared_l2"
KL = "kl_crossentropy"
L1 = "l1"
GROUND_LOSS_KINDS = (SQUARED_L2, KL, L1)


@dataclass(frozen=True)
class GroundLoss:
    """
    Per-element divergence l(a, b) over the last axis

    squared_l2 and kl_crossentropy are Bregman divergences and expose the
    factorization l(a, b) = f1(a) + f2(b) - <h1(a), h2(b)>. l1 has none and
    only supports the naive loss.
    """
    kind: str

    def __post_init__(self):
        if self.kind not in GROUND_LOSS_KINDS:
            raise UnsupportedError(f"Unknown ground loss {self.kind!r}, expected one of {GROUND_LOSS_KINDS}")

    @property
    def factorizable(self) -> bool:
        return self.kind in (SQUARED_L2, KL)

    def _require_factorization(self) -> None:
        if not self.factorizable:
            raise UnsupportedError(f"Ground loss {self.kind!r} has no f1 + f2 - <h1, h2> factorization")

    def _check_prediction(self, b: np.ndarray) -> None:
        if self.kind == KL and np.any(np.asarray(b) <= 0):
            raise DomainError("KL ground loss needs predictions in the open simplex (found a coordinate <= 0)")

    def evaluate(self, a, b) -> np.ndarray:
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        if self.kind == SQUARED_L2:
            return ((a - b) ** 2).sum(axis=-1)
        if self.kind == L1:
            return np.abs(a - b).sum(axis=-1)
        self._check_prediction(b)
        return (xlogy(a, a) - xlogy(a, b)).sum(axis=-1)

    def f1(self, a) -> np.ndarray:
        self._require_factorization()
        a = np.asarray(a, dtype=float)
        if self.kind == SQUARED_L2:
            return (a ** 2).sum(axis=-1)
        return xlogy(a, a).sum(axis=-1)

    def f2(self, b) -> np.ndarray:
        self._require_factorization()
        b = np.asarray(b, dtype=float)
        if self.kind == SQUARED_L2:
            return (b ** 2).sum(axis=-1)
        self._check_prediction(b)
        return np.zeros(b.shape[:-1])

    def h1(self, a) -> np.ndarray:
        self._require_factorization()
        a = np.asarray(a, dtype=float)
        return 2.0 * a if self.kind == SQUARED_L2 else a

    def h2(self, b) -> np.ndarray:
        self._require_factorization()
        b = np.asarray(b, dtype=float)
        if self.kind == SQUARED_L2:
            return b
        self._check_prediction(b)
        return np.log(b)

    def df2(self, b) -> np.ndarray:
        """Elementwise derivative of the summands of f2"""
        self._require_factorization()
        b = np.asarray(b, dtype=float)
        return 2.0 * b if self.kind == SQUARED_L2 else np.zeros_like(b)

    def dh2(self, b) -> np.ndarray:
        """Elementwise derivative of h2"""
        self._require_factorization()
        b = np.asarray(b, dtype=float)
        if self.kind == SQUARED_L2:
            return np.ones_like(b)
        self._check_prediction(b)
        return 1.0 / b

    def grad_b(self, a, b) -> np.ndarray:
        """d l(a, b) / d b"""
        return self.df2(b) - self.h1(a) * self.dh2(b)

    def lift(self, x) -> np.ndarray:
        """Scalar mask values as vectors: (x, 1 - x) for KL (binary cross-entropy), (x) otherwise"""
        x = np.asarray(x, dtype=float)
        if self.kind == KL:
            return np.stack([x, 1.0 - x], axis=-1)
        return x[..., None]

    def unlift_grad(self, g: np.ndarray) -> np.ndarray:
        if self.kind == KL:
            return g[..., 0] - g[..., 1]
        return g[..., 0]


@dataclass(frozen=True)
class LossWeights:
    """The five alpha coefficients of the mask / node / edge terms"""
    alpha_h: float = 1.0
    alpha_F_d: float = 1.0
    alpha_F_c: float = 1.0
    alpha_C_d: float = 1.0
    alpha_C_c: float = 1.0

    def __post_init__(self):
        for name in ("alpha_h", "alpha_F_d", "alpha_F_c", "alpha_C_d", "alpha_C_c"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def for_size(cls, N: int) -> "LossWeights":
        """Defaults: 1/N, 1/N, 1/(2N), 1/N^2, 1/(2N^2)"""
        if N < 1:
            raise DimensionError(f"Loss weights need a padding size >= 1, got {N}")
        return cls(1.0 / N, 1.0 / N, 1.0 / (2 * N), 1.0 / N ** 2, 1.0 / (2 * N ** 2))

    @classmethod
    def unit(cls) -> "LossWeights":
        return cls()

    def scaled(self, c: float) -> "LossWeights":
        return LossWeights(c * self.alpha_h, c * self.alpha_F_d, c * self.alpha_F_c,
                           c * self.alpha_C_d, c * self.alpha_C_c)

    def replace(self, **overrides) -> "LossWeights":
        return dc_replace(self, **{k: v for k, v in overrides.items() if v is not None})


@dataclass(frozen=True)
class GroundLosses:
    """
    Ground losses of the five terms

    The first node_discrete columns of F (edge_discrete channels of C) use the
    discrete loss, the remaining ones the continuous loss. None means every
    column is discrete.
    """
    h: GroundLoss
    F_d: GroundLoss
    F_c: GroundLoss
    C_d: GroundLoss
    C_c: GroundLoss
    node_discrete: Optional[int] = None
    edge_discrete: Optional[int] = None

    @classmethod
    def squared_l2(cls, node_discrete: Optional[int] = None, edge_discrete: Optional[int] = None) -> "GroundLosses":
        l2 = GroundLoss(SQUARED_L2)
        return cls(l2, l2, l2, l2, l2, node_discrete, edge_discrete)

    @classmethod
    def cross_entropy(cls, node_discrete: Optional[int] = None, edge_discrete: Optional[int] = None) -> "GroundLosses":
        """Cross-entropy (KL) for the mask and discrete blocks, squared L2 for continuous ones"""
        kl, l2 = GroundLoss(KL), GroundLoss(SQUARED_L2)
        return cls(kl, kl, l2, kl, l2, node_discrete, edge_discrete)

    @classmethod
    def by_name(cls, name: str) -> "GroundLosses":
        presets = {"l2": cls.squared_l2, "ce": cls.cross_entropy}
        if name not in presets:
            raise UnsupportedError(f"Unknown ground loss preset {name!r}, expected one of {sorted(presets)}")
        return presets[name]()

    def node_blocks(self, d_f: int, w: LossWeights) -> List[Tuple[slice, GroundLoss, float]]:
        k = d_f if self.node_discrete is None else min(self.node_discrete, d_f)
        blocks = [(slice(0, k), self.F_d, w.alpha_F_d), (slice(k, d_f), self.F_c, w.alpha_F_c)]
        return [b for b in blocks if b[0].stop > b[0].start]

    def edge_blocks(self, d_c: int, w: LossWeights) -> List[Tuple[slice, GroundLoss, float]]:
        k = d_c if self.edge_discrete is None else min(self.edge_discrete, d_c)
        blocks = [(slice(0, k), self.C_d, w.alpha_C_d), (slice(k, d_c), self.C_c, w.alpha_C_c)]
        return [b for b in blocks if b[0].stop > b[0].start]


@dataclass(frozen=True)
class LossGradients:
    """Partial derivatives of L_OT with respect to the prediction and the plan"""
    value: float
    d_h_hat: np.ndarray
    d_F_hat: np.ndarray
    d_C_hat: np.ndarray
    d_T: np.ndarray


def _check_graphs(G: DenseGraph, G_hat: DenseGraph) -> None:
    if G.N != G_hat.N or G.d_f != G_hat.d_f or G.d_c != G_hat.d_c:
        raise DimensionError(
            f"Graphs do not match: N {G.N} vs {G_hat.N}, d_f {G.d_f} vs {G_hat.d_f}, d_c {G.d_c} vs {G_hat.d_c}"
        )


def _linear_cost_direct(G: DenseGraph, G_hat: DenseGraph, gl: GroundLosses, w: LossWeights) -> np.ndarray:
    """A[i, j] = alpha_h l_h(h_i, h_hat_j) + h_i sum_blocks alpha l_F(F_i, F_hat_j)"""
    lh = gl.h
    A = w.alpha_h * lh.evaluate(lh.lift(G.h)[:, None, :], lh.lift(G_hat.h)[None, :, :])
    for cols, loss, alpha in gl.node_blocks(G.d_f, w):
        cost = loss.evaluate(G.F[:, None, cols], G_hat.F[None, :, cols])
        A = A + alpha * G.h[:, None] * cost
    return A


def _pairwise_factorized(loss: GroundLoss, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """M[i, j] = l(a_i, b_j) through the factorization, O(N^2 d)"""
    return loss.f1(a)[:, None] + loss.f2(b)[None, :] - loss.h1(a) @ loss.h2(b).T


def _linear_cost_fast(G: DenseGraph, G_hat: DenseGraph, gl: GroundLosses, w: LossWeights) -> np.ndarray:
    lh = gl.h
    A = w.alpha_h * _pairwise_factorized(lh, lh.lift(G.h), lh.lift(G_hat.h))
    for cols, loss, alpha in gl.node_blocks(G.d_f, w):
        A = A + alpha * G.h[:, None] * _pairwise_factorized(loss, G.F[:, cols], G_hat.F[:, cols])
    return A


def lot_naive(G: DenseGraph, G_hat: DenseGraph, T: PlanLike, gl: GroundLosses, w: LossWeights) -> float:
    """
    L_OT by direct evaluation, O(N^4 d_c)

    sum_ij l_h(h_i, h_hat_j) T_ij + sum_ij h_i l_F(F_i, F_hat_j) T_ij
    + sum_ijkl h_i h_k l_C(C_ik, C_hat_jl) T_ij T_kl, with the alpha weights
    multiplying their blocks.
    """
    _check_graphs(G, G_hat)
    T = plan_array(T, G.N)
    total = float((_linear_cost_direct(G, G_hat, gl, w) * T).sum())
    h = G.h
    for cols, loss, alpha in gl.edge_blocks(G.d_c, w):
        C_hat = G_hat.C[:, :, cols]
        quadratic = 0.0
        for i in range(G.N):
            for k in range(G.N):
                if h[i] * h[k] == 0:
                    continue
                L = loss.evaluate(G.C[i, k, cols], C_hat)
                quadratic += h[i] * h[k] * (T[i] @ L @ T[k])
        total += alpha * quadratic
    return total


def _quadratic_block(G: DenseGraph, G_hat: DenseGraph, T: np.ndarray, cols: slice, loss: GroundLoss) -> float:
    """sum_ijkl h_i h_k l(C_ik, C_hat_jl) T_ij T_kl for one channel block, O(d N^3)"""
    C, C_hat, h = G.C[:, :, cols], G_hat.C[:, :, cols], G.h
    W = np.outer(h, h)
    hr = h * T.sum(axis=1)
    p = T.T @ h
    constant = hr @ loss.f1(C) @ hr + p @ loss.f2(C_hat) @ p
    WH1 = W[:, :, None] * loss.h1(C)
    M = np.einsum("ij,ikc->jkc", T, WH1)
    M = np.einsum("jkc,kl->jlc", M, T)
    return float(constant - (M * loss.h2(C_hat)).sum())


def lot_quadratic(G: DenseGraph, G_hat: DenseGraph, T: PlanLike, gl: GroundLosses, w: LossWeights) -> float:
    """Weighted quadratic (edge) term of L_OT; T may be any real matrix"""
    _check_graphs(G, G_hat)
    T = np.asarray(T.T if isinstance(T, TransportPlan) else T, dtype=float)
    total = 0.0
    for cols, loss, alpha in gl.edge_blocks(G.d_c, w):
        loss._require_factorization()
        total += alpha * _quadratic_block(G, G_hat, T, cols, loss)
    return total


def lot_fast(G: DenseGraph, G_hat: DenseGraph, T: PlanLike, gl: GroundLosses, w: LossWeights) -> float:
    """
    L_OT in O(d_c N^3) using l_C(a, b) = f1(a) + f2(b) - <h1(a), h2(b)>

    Raises:
        UnsupportedError: a ground loss has no factorization
    """
    _check_graphs(G, G_hat)
    T = plan_array(T, G.N)
    for loss in (gl.h, *[b[1] for b in gl.node_blocks(G.d_f, w)], *[b[1] for b in gl.edge_blocks(G.d_c, w)]):
        loss._require_factorization()
    linear = float((_linear_cost_fast(G, G_hat, gl, w) * T).sum())
    return linear + lot_quadratic(G, G_hat, T, gl, w)


def assignment_costs(
    G: DenseGraph, G_hat: DenseGraph, gl: GroundLosses, w: LossWeights
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cost tensors of L_OT as a quadratic assignment problem

    Returns:
        A[i, j] (linear term) and Q[i, j, k, l] = sum_blocks alpha h_i h_k l(C_ik, C_hat_jl),
        so that L_OT(T) = <A, T> + sum_ijkl Q[i, j, k, l] T_ij T_kl
    """
    _check_graphs(G, G_hat)
    N = G.N
    A = _linear_cost_direct(G, G_hat, gl, w)
    Q = np.zeros((N, N, N, N))
    W = np.outer(G.h, G.h)
    for cols, loss, alpha in gl.edge_blocks(G.d_c, w):
        L = loss.evaluate(G.C[:, None, :, None, cols], G_hat.C[None, :, None, :, cols])
        Q += alpha * W[:, None, :, None] * L
    return A, Q


def _weighted_grad(loss: GroundLoss, weights: np.ndarray, weighted_h1: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sum_i w_ij dl(a_i, b_j)/db_j given sum_i w_ij and sum_i w_ij h1(a_i)"""
    return weights[..., None] * loss.df2(b) - weighted_h1 * loss.dh2(b)


def lot_gradients(G: DenseGraph, G_hat: DenseGraph, T: PlanLike, gl: GroundLosses, w: LossWeights) -> LossGradients:
    """
    Exact partial derivatives of L_OT with respect to h_hat, F_hat, C_hat and T

    Raises:
        DomainError: KL ground loss evaluated at a prediction with a zero coordinate
        UnsupportedError: a ground loss has no factorization
    """
    _check_graphs(G, G_hat)
    T = plan_array(T, G.N)
    h = G.h
    W = np.outer(h, h)
    r = T.sum(axis=1)
    c = T.sum(axis=0)

    A = _linear_cost_fast(G, G_hat, gl, w)
    d_T = A.copy()
    value = float((A * T).sum())

    lh = gl.h
    lifted, lifted_hat = lh.lift(h), lh.lift(G_hat.h)
    d_h_hat = w.alpha_h * lh.unlift_grad(_weighted_grad(lh, c, T.T @ lh.h1(lifted), lifted_hat))

    d_F_hat = np.zeros_like(G_hat.F)
    p = T.T @ h
    for cols, loss, alpha in gl.node_blocks(G.d_f, w):
        F_block = G.F[:, cols]
        weighted = T.T @ (h[:, None] * loss.h1(F_block))
        d_F_hat[:, cols] = alpha * _weighted_grad(loss, p, weighted, G_hat.F[:, cols])

    d_C_hat = np.zeros_like(G_hat.C)
    TWT = T.T @ W @ T
    for cols, loss, alpha in gl.edge_blocks(G.d_c, w):
        C, C_hat = G.C[:, :, cols], G_hat.C[:, :, cols]
        WH1 = W[:, :, None] * loss.h1(C)
        H2 = loss.h2(C_hat)
        f1C = W * loss.f1(C)
        f2C_hat = loss.f2(C_hat)

        TWH1T = np.einsum("ij,ikc->jkc", T, WH1)
        TWH1T = np.einsum("jkc,kl->jlc", TWH1T, T)
        d_C_hat[:, :, cols] = alpha * _weighted_grad(loss, TWT, TWH1T, C_hat)
        value += alpha * float(r * h @ loss.f1(C) @ (r * h) + p @ f2C_hat @ p - (TWH1T * H2).sum())

        # (i, j) slot and (k, l) slot of the quadratic term
        first = (f1C @ r)[:, None] + (W @ T) @ f2C_hat.T - np.einsum(
            "alc,blc->ab", np.einsum("akc,kl->alc", WH1, T), H2)
        second = (f1C.T @ r)[:, None] + (W.T @ T) @ f2C_hat - np.einsum(
            "ajc,jbc->ab", np.einsum("iac,ij->ajc", WH1, T), H2)
        d_T += alpha * (first + second)

    return LossGradients(value, d_h_hat, d_F_hat, d_C_hat, d_T)


def l_align(G: DenseGraph, G_hat: DenseGraph, gl: GroundLosses, w: LossWeights) -> float:
    """
    Elementwise aligned loss without matching

    alpha_h sum_i l_h(h_i, h_hat_i) + sum_i h_i l_F(F_i, F_hat_i) + sum_ij h_i h_j l_C(C_ij, C_hat_ij)
    """
    _check_graphs(G, G_hat)
    return _aligned(G, G_hat.h, G_hat.F, G_hat.C, gl, w)


def _aligned(G: DenseGraph, h_hat, F_hat, C_hat, gl: GroundLosses, w: LossWeights) -> float:
    lh = gl.h
    total = w.alpha_h * float(lh.evaluate(lh.lift(G.h), lh.lift(h_hat)).sum())
    for cols, loss, alpha in gl.node_blocks(G.d_f, w):
        total += alpha * float((G.h * loss.evaluate(G.F[:, cols], F_hat[:, cols])).sum())
    W = np.outer(G.h, G.h)
    for cols, loss, alpha in gl.edge_blocks(G.d_c, w):
        total += alpha * float((W * loss.evaluate(G.C[:, :, cols], C_hat[:, :, cols])).sum())
    return total


def reorder(G_hat: DenseGraph, T: PlanLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """T[G_hat] = (T h_hat, T F_hat, T C_hat T^T) as raw arrays"""
    T = plan_array(T, G_hat.N)
    return T @ G_hat.h, T @ G_hat.F, np.einsum("ij,jlc,kl->ikc", T, G_hat.C, T)


def l_pigvae(G: DenseGraph, G_hat: DenseGraph, T: PlanLike, gl: GroundLosses, w: LossWeights) -> float:
    """L_PIGVAE(G, G_hat, T) = L_ALIGN(G, T[G_hat])"""
    _check_graphs(G, G_hat)
    return _aligned(G, *reorder(G_hat, T), gl, w)


def entropy_regularizer(T: PlanLike, h: np.ndarray) -> float:
    """Omega(T) = -sum_ij T_ij log(T_ij) h_j with 0 log 0 := 0"""
    T = plan_array(T, len(h))
    if np.any(T < 0):
        raise DomainError("Entropy regularizer needs a nonnegative plan")
    return float(-(xlogy(T, T) * np.asarray(h)[None, :]).sum())


def pigvae_plus(
    G: DenseGraph,
    G_hat: DenseGraph,
    T: PlanLike,
    gl: GroundLosses,
    w: LossWeights,
    lam: float = 10.0,
) -> float:
    """Padded PIGVAE loss plus lam * Omega(T)"""
    if lam < 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    return l_pigvae(G, G_hat, T, gl, w) + lam * entropy_regularizer(T, G.h)


def softsort_permuter(X: np.ndarray, U: np.ndarray, tau: float) -> TransportPlan:
    """
    Row-stochastic relaxation of the argsort of the scores s = X U

    Row i is softmax_j(-|s_i - sort(s)_j| / tau), scores sorted in decreasing order.
    """
    if not tau > 0:
        raise DomainError(f"SoftSort temperature must be > 0, got {tau}")
    s = np.asarray(X, dtype=float) @ np.asarray(U, dtype=float)
    s_sorted = -np.sort(-s)
    return TransportPlan(softmax(-np.abs(s[:, None] - s_sorted[None, :]) / tau, axis=1))


def prediction_from_logits(
    h_logits: np.ndarray,
    F_logits: np.ndarray,
    C_logits: np.ndarray,
    node_discrete: Optional[int] = None,
    edge_discrete: Optional[int] = None,
) -> DenseGraph:
    """Sigmoid on the mask, softmax on the discrete blocks; continuous blocks pass through"""
    F = np.array(F_logits, dtype=float)
    C = np.array(C_logits, dtype=float)
    kf = F.shape[1] if node_discrete is None else node_discrete
    kc = C.shape[2] if edge_discrete is None else edge_discrete
    if kf:
        F[:, :kf] = softmax(F[:, :kf], axis=1)
    if kc:
        C[:, :, :kc] = softmax(C[:, :, :kc], axis=2)
    return DenseGraph(expit(np.asarray(h_logits, dtype=float)), F, C)


def smooth_prediction(G: DenseGraph, eps: float = 1e-6) -> DenseGraph:
    """Mix every simplex block with the uniform distribution (one-hot graph as a KL prediction)"""
    if not 0 < eps < 1:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    return DenseGraph(
        (1 - eps) * G.h + eps / 2,
        (1 - eps) * G.F + eps / G.d_f,
        (1 - eps) * G.C + eps / G.d_c,
    )


def compute_loss(
    kind: str,
    G: DenseGraph,
    G_hat: DenseGraph,
    T: PlanLike,
    gl: GroundLosses,
    w: LossWeights,
    lam: float = 10.0,
) -> float:
    """Dispatch on the CLI loss names ot / pigvae / pigvae-plus"""
    if kind == "ot":
        try:
            return lot_fast(G, G_hat, T, gl, w)
        except UnsupportedError:
            logger.info("Ground loss has no factorization, falling back to the naive L_OT")
            return lot_naive(G, G_hat, T, gl, w)
    if kind == "pigvae":
        return l_pigvae(G, G_hat, T, gl, w)
    if kind == "pigvae-plus":
        return pigvae_plus(G, G_hat, T, gl, w, lam)
    raise UnsupportedError(f"Unknown loss {kind!r}, expected ot, pigvae or pigvae-plus")
