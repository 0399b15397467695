"""
Learnable node-affinity matcher for graphot

Two one-hidden-layer ReLU perceptrons embed the nodes of both graphs, the
affinity is K_ij = exp(-||mlp_in(X_i) - mlp_out(X_hat_j)||_1), Sinkhorn turns
it into a plan during training and the Hungarian algorithm at test time.
Gradients are propagated by hand.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from graphot.config import FeaturizerConfig, SinkhornConfig, TrainConfig
from graphot.editdist import EditResult, align_cost, upper_bound
from graphot.errors import DataError, DimensionError, DivergenceError, UnsupportedError
from graphot.featurize import FeaturizedPair, node_features
from graphot.graph_core import DenseGraph, Permutation, TransportPlan, apply_permutation, sparse_from_dense
from graphot.ot_loss import GroundLosses, LossWeights, lot_gradients
from graphot.solvers import hungarian, sinkhorn_log_backward, sinkhorn_with_trace

logger = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "MLP",
    "AffinityModel",
    "affinity",
    "match",
    "match_graphs",
    "default_embedding",
    "pad_embeddings",
    "hidden_order_embeddings",
    "training_loss_and_gradients",
    "train_matcher",
    "matching_accuracy",
    "model_to_json",
    "model_from_json",
]

MODES = ("train", "test")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass(frozen=True)
class MLP:
    """
    y = relu(x W1 + b1) W2 + b2

    The same class holds parameter gradients returned by backward.
    """
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, d_in: int, hidden: int, d_out: int, rng: np.random.Generator) -> "MLP":
        return cls(_glorot(rng, d_in, hidden), np.zeros(hidden), _glorot(rng, hidden, d_out), np.zeros(d_out))

    @property
    def d_in(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    @property
    def d_out(self) -> int:
        return self.W2.shape[1]

    def forward(self, X: np.ndarray) -> Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
        Z = X @ self.W1 + self.b1
        H = np.maximum(Z, 0.0)
        return H @ self.W2 + self.b2, (X, Z)

    def backward(self, gY: np.ndarray, cache) -> Tuple["MLP", np.ndarray]:
        """Parameter gradients and d/dX; the ReLU subgradient at 0 is 0"""
        X, Z = cache
        H = np.maximum(Z, 0.0)
        gZ = (gY @ self.W2.T) * (Z > 0)
        grads = MLP(X.T @ gZ, gZ.sum(axis=0), H.T @ gY, gY.sum(axis=0))
        return grads, gZ @ self.W1.T

    def copy(self) -> "MLP":
        return MLP(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())

    def axpy(self, scale: float, other: "MLP") -> "MLP":
        """self + scale * other"""
        return MLP(self.W1 + scale * other.W1, self.b1 + scale * other.b1,
                   self.W2 + scale * other.W2, self.b2 + scale * other.b2)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (self.W1, self.b1, self.W2, self.b2))

    def to_dict(self) -> Dict[str, Any]:
        return {"W1": self.W1.tolist(), "b1": self.b1.tolist(), "W2": self.W2.tolist(), "b2": self.b2.tolist()}


@dataclass(frozen=True)
class AffinityModel:
    """mlp_in embeds input-side nodes, mlp_out target-side nodes, u fills padding slots"""
    mlp_in: MLP
    mlp_out: MLP
    u: np.ndarray

    @classmethod
    def init(
        cls,
        d_n: int,
        hidden: int = 32,
        d_e: int = 16,
        rng: Optional[np.random.Generator] = None,
        tied: bool = False,
    ) -> "AffinityModel":
        """
        Glorot-uniform weights, zero biases and zero padding vector

        mlp_out is drawn independently; with tied=True it starts as a copy of
        mlp_in (separate arrays), so an untrained model already matches
        identical embeddings.
        """
        rng = rng if rng is not None else np.random.default_rng(0)
        mlp_in = MLP.init(d_n, hidden, d_e, rng)
        mlp_out = mlp_in.copy() if tied else MLP.init(d_n, hidden, d_e, rng)
        return cls(mlp_in, mlp_out, np.zeros(d_n))

    @property
    def d_n(self) -> int:
        return self.mlp_in.d_in

    def is_finite(self) -> bool:
        return self.mlp_in.is_finite() and self.mlp_out.is_finite() and bool(np.all(np.isfinite(self.u)))


@dataclass(frozen=True)
class ModelGradients:
    mlp_in: MLP
    mlp_out: MLP
    u: np.ndarray

    def __add__(self, other: "ModelGradients") -> "ModelGradients":
        return ModelGradients(self.mlp_in.axpy(1.0, other.mlp_in), self.mlp_out.axpy(1.0, other.mlp_out), self.u + other.u)

    def scaled(self, c: float) -> "ModelGradients":
        zero_in = MLP(*(np.zeros_like(a) for a in (self.mlp_in.W1, self.mlp_in.b1, self.mlp_in.W2, self.mlp_in.b2)))
        zero_out = MLP(*(np.zeros_like(a) for a in (self.mlp_out.W1, self.mlp_out.b1, self.mlp_out.W2, self.mlp_out.b2)))
        return ModelGradients(zero_in.axpy(c, self.mlp_in), zero_out.axpy(c, self.mlp_out), c * self.u)


def pad_embeddings(X: np.ndarray, N: int, u: Optional[np.ndarray] = None) -> np.ndarray:
    """Append N - n copies of u (zeros when u is None)"""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n > N:
        raise DimensionError(f"{n} embeddings do not fit a padding size of {N}")
    pad = np.zeros(d) if u is None else np.asarray(u, dtype=float)
    if pad.shape != (d,):
        raise DimensionError(f"Padding vector has shape {pad.shape}, embeddings have dimension {d}")
    return np.vstack([X, np.tile(pad, (N - n, 1))]) if N > n else X.copy()


def default_embedding(G: DenseGraph, cfg: FeaturizerConfig = FeaturizerConfig(), u: Optional[np.ndarray] = None) -> np.ndarray:
    """Deterministic featurizer node features of a dense graph, padded to G.N"""
    g = sparse_from_dense(G)
    return pad_embeddings(node_features(g, cfg), G.N, u)


def _embed(model: Optional[AffinityModel], X: np.ndarray, X_hat: np.ndarray):
    X, X_hat = np.asarray(X, dtype=float), np.asarray(X_hat, dtype=float)
    if X.shape != X_hat.shape:
        raise DimensionError(f"Embedding shapes differ: {X.shape} vs {X_hat.shape}")
    if model is None:
        return X, X_hat, None, None
    if X.shape[1] != model.d_n:
        raise DimensionError(f"Model expects {model.d_n}-dimensional node embeddings, got {X.shape[1]}")
    Y, cache_in = model.mlp_in.forward(X)
    Y_hat, cache_out = model.mlp_out.forward(X_hat)
    return Y, Y_hat, cache_in, cache_out


def l1_distances(model: Optional[AffinityModel], X: np.ndarray, X_hat: np.ndarray) -> np.ndarray:
    """-log K: L1 distances between embedded nodes (raw embeddings when model is None)"""
    Y, Y_hat, _, _ = _embed(model, X, X_hat)
    return np.abs(Y[:, None, :] - Y_hat[None, :, :]).sum(axis=2)


def affinity(model: Optional[AffinityModel], X: np.ndarray, X_hat: np.ndarray) -> np.ndarray:
    """K[i, j] = exp(-||mlp_in(X_i) - mlp_out(X_hat_j)||_1), entries in (0, 1]"""
    return np.exp(-l1_distances(model, X, X_hat))


def affinity_backward(
    model: AffinityModel, X: np.ndarray, X_hat: np.ndarray, g_log_K: np.ndarray
) -> Tuple[MLP, MLP, np.ndarray, np.ndarray]:
    """
    Back-propagate d(loss)/d(log K) to both perceptrons

    Returns:
        (grads of mlp_in, grads of mlp_out, d/dX, d/dX_hat); sign(0) is taken as 0
    """
    Y, Y_hat, cache_in, cache_out = _embed(model, X, X_hat)
    S = np.sign(Y[:, None, :] - Y_hat[None, :, :])
    G = -np.asarray(g_log_K, dtype=float)[:, :, None] * S
    grads_in, gX = model.mlp_in.backward(G.sum(axis=1), cache_in)
    grads_out, gX_hat = model.mlp_out.backward(-G.sum(axis=0), cache_out)
    return grads_in, grads_out, gX, gX_hat


def match(
    model: Optional[AffinityModel],
    X: np.ndarray,
    X_hat: np.ndarray,
    mode: str = "test",
    cfg: SinkhornConfig = SinkhornConfig(),
) -> TransportPlan:
    """
    Train mode: Sinkhorn projection of the affinity. Test mode: permutation
    matrix of the Hungarian assignment on -log K (T[i, perm[i]] = 1).
    """
    if mode not in MODES:
        raise UnsupportedError(f"Unknown matching mode {mode!r}, expected one of {MODES}")
    D = l1_distances(model, X, X_hat)
    if mode == "train":
        return sinkhorn_with_trace(None, cfg, log_K=-D).plan
    return TransportPlan(hungarian(D).assignment_matrix())


def match_graphs(
    model: Optional[AffinityModel],
    G1: DenseGraph,
    G2: DenseGraph,
    embed: Optional[Callable[[DenseGraph], np.ndarray]] = None,
    cfg: FeaturizerConfig = FeaturizerConfig(),
) -> Tuple[Permutation, EditResult]:
    """
    Match two padded graphs and bound their edit distance

    Returns:
        The aligning permutation P (G1 against P[G2]) and the edit upper bound under it
    """
    if G1.N != G2.N:
        raise DimensionError(f"Graphs padded to different sizes: {G1.N} vs {G2.N}")
    if embed is None:
        u = model.u if model is not None else None
        X1, X2 = default_embedding(G1, cfg, u), default_embedding(G2, cfg, u)
    else:
        X1, X2 = embed(G1), embed(G2)
    sigma = hungarian(l1_distances(model, X1, X2))
    P = sigma.inverse()
    return P, upper_bound(sparse_from_dense(G1), sparse_from_dense(G2), P)


# Training objective: L_OT(G*, perm[G*], T) with squared L2 ground losses
TRAIN_GROUND_LOSSES = GroundLosses.squared_l2()


def hidden_order_embeddings(
    model: Optional[AffinityModel], pair: FeaturizedPair, perm: Permutation
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Input-side embeddings and the same rows moved by perm

    Row j of the input lands in slot perm[j] of the target side, so the
    correct plan is perm.assignment_matrix(). perm must fix the padding slots.
    """
    N = pair.target.N
    if len(perm) != N:
        raise DimensionError(f"Permutation of size {len(perm)} for a pair padded to {N}")
    if np.any(perm.as_array()[pair.n:] != np.arange(pair.n, N)):
        raise DimensionError("Hidden-order permutation must keep the padding slots in place")
    X = pad_embeddings(pair.input.F, N, model.u if model is not None else None)
    return X, perm.matrix() @ X


def training_loss_and_gradients(
    model: AffinityModel,
    pair: FeaturizedPair,
    cfg: SinkhornConfig = SinkhornConfig(),
    perm: Optional[Permutation] = None,
) -> Tuple[float, ModelGradients]:
    """
    Loss L_OT(G*, perm[G*], Sinkhorn(K)) for one pair and its gradient

    The target side sees the input rows in the order given by perm (identity
    when omitted). Chain: lot_gradients.d_T, unrolled Sinkhorn, L1 affinity,
    both MLPs; the padding vector collects the gradients of every padded row.
    """
    target = pair.target
    perm = perm if perm is not None else Permutation.identity(target.N)
    X, X_hat = hidden_order_embeddings(model, pair, perm)
    D = l1_distances(model, X, X_hat)
    trace = sinkhorn_with_trace(None, cfg, log_K=-D)
    T = np.exp(trace.states[-1])
    shuffled = apply_permutation(target, perm)
    grads = lot_gradients(target, shuffled, T, TRAIN_GROUND_LOSSES, LossWeights.for_size(target.N))
    g_log_K = sinkhorn_log_backward(trace, grads.d_T)
    grads_in, grads_out, gX, gX_hat = affinity_backward(model, X, X_hat, g_log_K)
    n = pair.n
    g_u = gX[n:].sum(axis=0) + gX_hat[n:].sum(axis=0)
    return grads.value, ModelGradients(grads_in, grads_out, g_u)


def train_matcher(
    model: AffinityModel,
    dataset: Sequence[FeaturizedPair],
    cfg: TrainConfig = TrainConfig(),
    progress_callback=None,
) -> Tuple[AffinityModel, List[float]]:
    """
    Plain gradient descent on the matcher parameters

    Each step averages the loss and gradients over a minibatch drawn without
    replacement, each example matched against a freshly shuffled copy of
    itself. Shuffles come from the training stream before any work is
    dispatched; with cfg.threads > 1 the examples of a batch run in a thread
    pool and their gradients are summed in batch order.

    Args:
        model: Starting parameters (not modified)
        dataset: Featurized pairs
        cfg: Training settings
        progress_callback: Optional function(step, total, message)

    Returns:
        Trained model and the per-step mean loss

    Raises:
        DivergenceError: a loss or parameter becomes non-finite
    """
    if not dataset:
        raise DataError("Cannot train the matcher on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    batch = min(cfg.batch, len(dataset))
    trace: List[float] = []

    executor = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    try:
        for step in range(cfg.steps):
            idx = rng.choice(len(dataset), size=batch, replace=False)
            examples = [dataset[i] for i in idx]
            perms = [Permutation.random(p.target.N, rng, fix_from=p.n) for p in examples]
            work = partial(training_loss_and_gradients, model)
            if executor:
                results = list(executor.map(work, examples, [cfg.sinkhorn] * batch, perms))
            else:
                results = [work(p, cfg.sinkhorn, q) for p, q in zip(examples, perms)]

            loss = float(np.mean([r[0] for r in results]))
            if not np.isfinite(loss):
                raise DivergenceError(step, f"non-finite training loss {loss}")
            total = results[0][1]
            for _, g in results[1:]:
                total = total + g
            g = total.scaled(1.0 / batch)
            model = AffinityModel(
                model.mlp_in.axpy(-cfg.lr, g.mlp_in),
                model.mlp_out.axpy(-cfg.lr, g.mlp_out),
                model.u - cfg.lr * g.u,
            )
            if not model.is_finite():
                raise DivergenceError(step, "non-finite matcher parameters")
            trace.append(loss)

            if progress_callback:
                progress_callback(step, cfg.steps, f"loss {loss:.6g}")
            if step % 50 == 0:
                logger.info(f"Matcher step {step}/{cfg.steps}: loss {loss:.6g}")
    finally:
        if executor:
            executor.shutdown()

    if progress_callback:
        progress_callback(cfg.steps, cfg.steps, "Training complete")
    return model, trace


def matching_accuracy(model: Optional[AffinityModel], pairs: Sequence[FeaturizedPair], seed: int = 0) -> float:
    """
    Fraction of pairs whose test-mode matching costs 0 edits

    Each input is matched against a copy of itself in a random node order
    (one seeded stream over the pairs); the Hungarian assignment must undo
    the shuffle up to an automorphism of the target.
    """
    if not pairs:
        return 0.0
    rng = np.random.default_rng(seed)
    hits = 0
    for pair in pairs:
        perm = Permutation.random(pair.target.N, rng, fix_from=pair.n)
        X, X_hat = hidden_order_embeddings(model, pair, perm)
        sigma = hungarian(l1_distances(model, X, X_hat))
        g = sparse_from_dense(pair.target)
        shuffled = g.relabel(perm.as_array()[:pair.n])
        if align_cost(g, shuffled, sigma.inverse()) == 0:
            hits += 1
    return hits / len(pairs)


def model_to_json(model: AffinityModel) -> Dict[str, Any]:
    """JSON document with a dims header and row-major nested arrays"""
    return {
        "dims": {"d_n": model.d_n, "hidden": model.mlp_in.hidden, "d_e": model.mlp_in.d_out},
        "mlp_in": model.mlp_in.to_dict(),
        "mlp_out": model.mlp_out.to_dict(),
        "u": model.u.tolist(),
    }


def _mlp_from_dict(data: Dict[str, Any], d_n: int, hidden: int, d_e: int) -> MLP:
    shapes = {"W1": (d_n, hidden), "b1": (hidden,), "W2": (hidden, d_e), "b2": (d_e,)}
    arrays = {}
    for name, shape in shapes.items():
        arr = np.asarray(data[name], dtype=float)
        if arr.shape != shape:
            raise DataError(f"Model array {name} has shape {arr.shape}, expected {shape}")
        arrays[name] = arr
    return MLP(**arrays)


def model_from_json(data: Dict[str, Any]) -> AffinityModel:
    """Inverse of model_to_json, raising DataError on missing keys or wrong shapes"""
    try:
        dims = data["dims"]
        d_n, hidden, d_e = int(dims["d_n"]), int(dims["hidden"]), int(dims["d_e"])
        mlp_in = _mlp_from_dict(data["mlp_in"], d_n, hidden, d_e)
        mlp_out = _mlp_from_dict(data["mlp_out"], d_n, hidden, d_e)
        u = np.asarray(data["u"], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"Malformed matcher model: {e}") from e
    if u.shape != (d_n,):
        raise DataError(f"Padding vector has shape {u.shape}, expected ({d_n},)")
    model = AffinityModel(mlp_in, mlp_out, u)
    if not model.is_finite():
        raise DataError("Matcher model has non-finite weights")
    return model
