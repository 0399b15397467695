"""
Featurizer for graphot
Builds the noisy input graph phi(x) and the padded one-hot target phi*(x)
from a sparse graph
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence
import logging

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from graphot.config import FeaturizerConfig
from graphot.errors import CapacityError, DimensionError
from graphot.graph_core import DenseGraph, SparseGraph, dense_from_sparse

logger = logging.getLogger(__name__)

PE_BASE = 100.0

__all__ = [
    "FeaturizerConfig",
    "FeaturizedPair",
    "shortest_paths",
    "diffusion_features",
    "positional_encoding",
    "edge_features",
    "featurize",
    "featurize_dataset",
]


@dataclass(frozen=True)
class FeaturizedPair:
    """Input graph phi(x) (noisy, unpadded), target phi*(x) (padded one-hot)"""
    input: DenseGraph
    target: DenseGraph
    clean_features: np.ndarray  # noise-free node features of the input, (n, d)

    @property
    def n(self) -> int:
        return self.input.N


def shortest_paths(g: SparseGraph) -> np.ndarray:
    """
    Hop distances between all node pairs

    Disconnected pairs get the sentinel value n (the graph size).
    """
    n = g.n
    if n == 0:
        return np.zeros((0, 0), dtype=int)
    dist = shortest_path(csr_matrix(g.adjacency()), method="D", directed=False, unweighted=True)
    dist[~np.isfinite(dist)] = n
    return dist.astype(int)


def diffusion_features(g: SparseGraph, k: int) -> np.ndarray:
    """CONCAT[F_0, A F_0, ..., A^k F_0] with F_0 the one-hot label matrix"""
    if k < 0:
        raise DimensionError(f"Diffusion order must be >= 0, got {k}")
    F0 = np.zeros((g.n, g.n_f))
    F0[np.arange(g.n), g.labels] = 1.0
    A = g.adjacency()
    blocks = [F0]
    for _ in range(k):
        blocks.append(A @ blocks[-1])
    return np.concatenate(blocks, axis=1)


def positional_encoding(d, pe_dim: int) -> np.ndarray:
    """
    Sinusoidal encoding of distances with base 100

    PE(d)_{2m} = sin(d / 100^{2m/pe_dim}), PE(d)_{2m+1} = cos(same)
    """
    d = np.asarray(d, dtype=float)
    m = np.arange(pe_dim // 2)
    angles = d[..., None] / PE_BASE ** (2.0 * m / max(pe_dim, 1))
    pe = np.empty(d.shape + (pe_dim,))
    pe[..., 0::2] = np.sin(angles)
    pe[..., 1::2] = np.cos(angles)
    return pe


def edge_features(g: SparseGraph, F: np.ndarray, cfg: FeaturizerConfig) -> np.ndarray:
    """
    Edge tensor CONCAT[F_i, F_j, ONE-HOT(A_ij), PE(SP_ij)] (+ one-hot edge labels)

    With cfg.enriched False the positional block is dropped.

    Args:
        g: Sparse graph
        F: Node features from diffusion_features, shape (n, d_F)
        cfg: Featurizer settings

    Returns:
        (n, n, d_c) tensor, d_c = 2 d_F + 2 + pe_dim (+ n_c)
    """
    n = g.n
    if F.shape[0] != n:
        raise DimensionError(f"Node features have {F.shape[0]} rows for a graph with {n} nodes")
    A = g.adjacency().astype(int)
    blocks = [
        np.broadcast_to(F[:, None, :], (n, n, F.shape[1])),
        np.broadcast_to(F[None, :, :], (n, n, F.shape[1])),
        np.eye(2)[A],
    ]
    if cfg.enriched:
        blocks.append(positional_encoding(shortest_paths(g), cfg.pe_dim))
    if cfg.edge_labels:
        E = g.edge_label_matrix()
        blocks.append(np.eye(g.n_c + 1)[E][..., 1:])
    return np.concatenate(blocks, axis=2)


def node_features(g: SparseGraph, cfg: FeaturizerConfig) -> np.ndarray:
    """Deterministic node features: diffusion features, or F_0 for the ablation"""
    return diffusion_features(g, cfg.k if cfg.enriched else 0)


def featurize(
    g: SparseGraph,
    N: int,
    cfg: FeaturizerConfig,
    rng: Optional[np.random.Generator] = None,
) -> FeaturizedPair:
    """
    phi(x) = (F + noise, C) unpadded and phi*(x) = padded one-hot target

    Noise is added to F only, drawn from N(0, noise_sigma^2). Without an
    explicit generator the noise is seeded with cfg.seed.
    """
    if g.n > N:
        raise CapacityError(f"Graph has {g.n} nodes but the padding size is N={N}")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    F = node_features(g, cfg)
    C = edge_features(g, F, cfg)
    noisy = F + rng.normal(0.0, cfg.noise_sigma, size=F.shape) if cfg.noise_sigma > 0 else F.copy()
    pair = FeaturizedPair(
        input=DenseGraph(np.ones(g.n), noisy, C),
        target=dense_from_sparse(g, N),
        clean_features=F,
    )
    logger.debug(f"Featurized graph with {g.n} nodes: d_F={F.shape[1]}, d_C={C.shape[2]}")
    return pair


def featurize_dataset(graphs: Sequence[SparseGraph], N: int, cfg: FeaturizerConfig) -> List[FeaturizedPair]:
    """Featurize a list with a single seeded stream so each graph gets its own noise"""
    rng = np.random.default_rng(cfg.seed)
    pairs = [featurize(g, N, cfg, rng) for g in graphs]
    logger.info(f"Featurized {len(pairs)} graphs (N={N}, k={cfg.k}, noise_sigma={cfg.noise_sigma})")
    return pairs
