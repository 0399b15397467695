"""
Synthetic dataset generators for graphot
COLORING-like properly 4-colored geometric graphs, molecule-like labeled
graphs and the label corruption used by the denoising evaluation
"""

from typing import Callable, List, Optional, Union
import logging

import networkx as nx
import numpy as np
from scipy.spatial import cKDTree

from graphot.config import BOND_PROBS, GenConfig
from graphot.errors import ConfigError, DomainError, GenerationError
from graphot.graph_core import SparseGraph, is_asymmetric

logger = logging.getLogger(__name__)

N_COLORS = 4
MAX_RETRIES = 100
RANDOM_ORDERS = 5

__all__ = [
    "GenConfig",
    "gen_coloring",
    "gen_molecule",
    "generate_graph",
    "generate",
    "asymmetric_pool",
    "corrupt_labels",
    "coloring_valid",
]


def _rng(seed_or_rng: Union[int, np.random.Generator, None], default: int = 0) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(default if seed_or_rng is None else seed_or_rng)


def _knn_graph(n: int, k: int, rng: np.random.Generator) -> nx.Graph:
    """Symmetrized k-nearest-neighbour graph of random points, joined into one component"""
    points = rng.random((n, 2))
    graph = nx.Graph()
    graph.add_nodes_from(range(n))
    if n < 2:
        return graph
    k = min(k, n - 1)
    _, idx = cKDTree(points).query(points, k=k + 1)
    for i in range(n):
        for j in idx[i, 1:]:
            graph.add_edge(i, int(j))
    # bridge components through their closest point pair
    while not nx.is_connected(graph):
        components = [sorted(c) for c in nx.connected_components(graph)]
        head = components[0]
        rest = [v for c in components[1:] for v in c]
        dist, nearest = cKDTree(points[rest]).query(points[head])
        a = int(np.argmin(dist))
        graph.add_edge(head[a], rest[int(nearest[a])])
    return graph


def _random_order(rng: np.random.Generator) -> Callable:
    def strategy(graph, colors):
        nodes = list(graph)
        return [nodes[i] for i in rng.permutation(len(nodes))]
    return strategy


def _four_coloring(graph: nx.Graph, rng: np.random.Generator) -> Optional[dict]:
    """Greedy coloring with at most 4 colors, or None"""
    attempts = [("saturation_largest_first", False), ("largest_first", True)]
    attempts += [(_random_order(rng), True) for _ in range(RANDOM_ORDERS)]
    for strategy, interchange in attempts:
        colors = nx.greedy_color(graph, strategy=strategy, interchange=interchange)
        if not colors or max(colors.values()) < N_COLORS:
            return colors
    return None


def gen_coloring(cfg: GenConfig, rng: Optional[np.random.Generator] = None) -> SparseGraph:
    """
    Connected graph whose 4 node labels form a proper coloring

    Random points in the unit square, edges to the k nearest neighbours,
    greedy coloring; a new geometry is drawn when greedy needs more than 4
    colors. Colors are randomly permuted at the end.

    Raises:
        GenerationError: no 4-coloring after 100 geometries
    """
    if cfg.flavor != "coloring":
        raise ConfigError(f"gen_coloring needs flavor 'coloring', got {cfg.flavor!r}")
    rng = _rng(rng, cfg.seed)
    n = int(rng.integers(cfg.n_min, cfg.n_max + 1))
    for attempt in range(MAX_RETRIES):
        graph = _knn_graph(n, cfg.knn_k, rng)
        colors = _four_coloring(graph, rng)
        if colors is not None:
            break
        logger.debug(f"Greedy coloring of a {n}-node graph needed more than {N_COLORS} colors (attempt {attempt})")
    else:
        raise GenerationError(f"No proper {N_COLORS}-coloring found after {MAX_RETRIES} geometries (n={n})")
    shuffle = rng.permutation(N_COLORS)
    labels = [int(shuffle[colors[i]]) for i in range(n)]
    return SparseGraph.from_edges(labels, list(graph.edges()), N_COLORS, cfg.n_c)


def gen_molecule(cfg: GenConfig, rng: Optional[np.random.Generator] = None) -> SparseGraph:
    """
    Connected molecule-like graph

    A random tree with degree cap cfg.max_degree plus a few ring-closing
    edges (probability edge_density / n per admissible pair). Label 0
    dominates with frequency dominant_label_freq; with n_c = 4 bonds follow
    BOND_PROBS (single, double, triple, aromatic), otherwise they are uniform.
    """
    if cfg.flavor != "molecule":
        raise ConfigError(f"gen_molecule needs flavor 'molecule', got {cfg.flavor!r}")
    rng = _rng(rng, cfg.seed)
    n = int(rng.integers(cfg.n_min, cfg.n_max + 1))

    dominant = rng.random(n) < cfg.dominant_label_freq
    others = rng.integers(1, cfg.n_f, size=n) if cfg.n_f > 1 else np.zeros(n, dtype=int)
    labels = np.where(dominant | (cfg.n_f == 1), 0, others)

    degree = np.zeros(n, dtype=int)
    pairs = []
    for i in range(1, n):
        candidates = np.flatnonzero(degree[:i] < cfg.max_degree)
        if len(candidates) == 0:
            raise GenerationError(f"Degree cap {cfg.max_degree} leaves no attachment point for node {i}")
        parent = int(rng.choice(candidates))
        pairs.append((parent, i))
        degree[parent] += 1
        degree[i] += 1

    existing = set(pairs)
    p_extra = cfg.edge_density / n
    for u in range(n):
        for v in range(u + 1, n):
            if (u, v) in existing or rng.random() >= p_extra:
                continue
            if degree[u] < cfg.max_degree and degree[v] < cfg.max_degree:
                pairs.append((u, v))
                degree[u] += 1
                degree[v] += 1

    if cfg.n_c == len(BOND_PROBS):
        bonds = rng.choice(cfg.n_c, size=len(pairs), p=BOND_PROBS)
    else:
        bonds = rng.integers(0, cfg.n_c, size=len(pairs))
    edges = [(u, v, int(b)) for (u, v), b in zip(pairs, bonds)]
    return SparseGraph.from_edges(labels.tolist(), edges, cfg.n_f, cfg.n_c)


def generate_graph(cfg: GenConfig, rng: np.random.Generator) -> SparseGraph:
    if cfg.flavor == "coloring":
        return gen_coloring(cfg, rng)
    return gen_molecule(cfg, rng)


def generate(cfg: GenConfig, count: int) -> List[SparseGraph]:
    """count graphs from one stream seeded with cfg.seed"""
    rng = np.random.default_rng(cfg.seed)
    graphs = [generate_graph(cfg, rng) for _ in range(count)]
    logger.info(f"Generated {len(graphs)} {cfg.flavor} graphs (n in [{cfg.n_min}, {cfg.n_max}], seed {cfg.seed})")
    return graphs


def asymmetric_pool(cfg: GenConfig, count: int, max_draws: Optional[int] = None) -> List[SparseGraph]:
    """
    count graphs whose only label-preserving automorphism is the identity

    Raises:
        GenerationError: fewer than count asymmetric graphs in max_draws draws
    """
    rng = np.random.default_rng(cfg.seed)
    max_draws = max_draws if max_draws is not None else 100 * count
    pool: List[SparseGraph] = []
    draws = 0
    while len(pool) < count:
        if draws >= max_draws:
            raise GenerationError(f"Only {len(pool)} asymmetric graphs found in {max_draws} draws")
        g = generate_graph(cfg, rng)
        draws += 1
        if is_asymmetric(g):
            pool.append(g)
    logger.info(f"Kept {count} asymmetric graphs out of {draws} draws")
    return pool


def corrupt_labels(g: SparseGraph, p: float, seed: Union[int, np.random.Generator] = 0) -> SparseGraph:
    """
    Resample each node label uniformly with probability p

    Uniforms and replacement labels are drawn for every node whatever p is,
    so one seed gives nested corruptions across noise levels.
    """
    if not 0 <= p <= 1:
        raise DomainError(f"Corruption probability must lie in [0, 1], got {p}")
    rng = _rng(seed)
    u = rng.random(g.n)
    replacement = rng.integers(0, g.n_f, size=g.n)
    labels = np.where(u < p, replacement, g.labels)
    return SparseGraph(tuple(enumerate(labels.tolist())), g.edges, g.n_f, g.n_c)


def coloring_valid(g: SparseGraph) -> bool:
    """No edge joins two equal labels and the graph is connected (the empty graph counts as valid)"""
    labels = g.labels
    if any(labels[s] == labels[d] for s, d, _ in g.edges):
        return False
    return g.n == 0 or nx.is_connected(g.to_networkx())
