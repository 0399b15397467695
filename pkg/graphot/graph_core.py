"""
Graph data model for graphot
Sparse storage form, dense padded computational form, permutations,
transport plans and the brute-force isomorphism oracle
"""

from dataclasses import dataclass
from itertools import permutations
from typing import List, Optional, Sequence, Tuple, Union
import logging

import networkx as nx
from networkx.algorithms import isomorphism
import numpy as np

from graphot.config import MAX_ISOMORPHISM_NODES
from graphot.errors import (
    CapacityError, DimensionError, DomainError, GraphValidationError, SizeError,
)

logger = logging.getLogger(__name__)

NO_EDGE = 0  # channel of C that encodes "no edge"


def _readonly(array) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SparseGraph:
    """
    Labeled undirected graph in storage form

    nodes: (index, label) pairs with indices forming range(n)
    edges: (src, dst, label) triples with src < dst, stored once
    """
    nodes: Tuple[Tuple[int, int], ...]
    edges: Tuple[Tuple[int, int, int], ...]
    n_f: int
    n_c: int

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted((int(i), int(l)) for i, l in self.nodes)))
        object.__setattr__(self, "edges", tuple(sorted((int(s), int(d), int(l)) for s, d, l in self.edges)))
        self.validate()

    def validate(self) -> None:
        """Check the SparseGraph invariants, raising GraphValidationError"""
        if self.n_f < 1 or self.n_c < 1:
            raise GraphValidationError(f"Alphabet sizes must be >= 1, got n_f={self.n_f}, n_c={self.n_c}")
        indices = [i for i, _ in self.nodes]
        if indices != list(range(len(indices))):
            raise GraphValidationError(f"Node indices must form the range [0, {len(indices)}), got {indices}")
        for i, label in self.nodes:
            if not 0 <= label < self.n_f:
                raise GraphValidationError(f"Node {i} label {label} outside [0, {self.n_f})")
        seen = set()
        n = len(indices)
        for src, dst, label in self.edges:
            if not (0 <= src < n and 0 <= dst < n):
                raise GraphValidationError(f"Edge ({src}, {dst}) has an endpoint outside [0, {n})")
            if src == dst:
                raise GraphValidationError(f"Self-loop on node {src}")
            if src > dst:
                raise GraphValidationError(f"Edge ({src}, {dst}) must be stored with src < dst")
            if (src, dst) in seen:
                raise GraphValidationError(f"Duplicate edge ({src}, {dst})")
            if not 0 <= label < self.n_c:
                raise GraphValidationError(f"Edge ({src}, {dst}) label {label} outside [0, {self.n_c})")
            seen.add((src, dst))

    @classmethod
    def from_edges(
        cls,
        labels: Sequence[int],
        edges: Sequence[Tuple[int, ...]],
        n_f: int,
        n_c: int = 1,
    ) -> "SparseGraph":
        """
        Build a graph from a label list and (u, v[, label]) pairs in any orientation

        Args:
            labels: Node labels, node i gets labels[i]
            edges: Pairs (u, v) (label 0) or triples (u, v, label)
            n_f: Node-label alphabet size
            n_c: Edge-label alphabet size

        Returns:
            Validated SparseGraph
        """
        triples = []
        for edge in edges:
            u, v = int(edge[0]), int(edge[1])
            label = int(edge[2]) if len(edge) > 2 else 0
            triples.append((min(u, v), max(u, v), label))
        return cls(tuple(enumerate(labels)), tuple(triples), n_f, n_c)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.nodes], dtype=int)

    def adjacency(self) -> np.ndarray:
        """Symmetric 0/1 adjacency matrix"""
        A = np.zeros((self.n, self.n))
        for src, dst, _ in self.edges:
            A[src, dst] = A[dst, src] = 1.0
        return A

    def edge_label_matrix(self) -> np.ndarray:
        """Integer matrix with 0 for "no edge" and label + 1 otherwise"""
        E = np.zeros((self.n, self.n), dtype=int)
        for src, dst, label in self.edges:
            E[src, dst] = E[dst, src] = label + 1
        return E

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1).astype(int)

    def relabel(self, perm: Sequence[int]) -> "SparseGraph":
        """Move node i to position perm[i]"""
        perm = list(perm)
        if sorted(perm) != list(range(self.n)):
            raise DimensionError(f"relabel needs a permutation of range({self.n})")
        labels = [0] * self.n
        for i, label in self.nodes:
            labels[perm[i]] = label
        edges = [(perm[s], perm[d], l) for s, d, l in self.edges]
        return SparseGraph.from_edges(labels, edges, self.n_f, self.n_c)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        for i, label in self.nodes:
            graph.add_node(i, label=label)
        for src, dst, label in self.edges:
            graph.add_edge(src, dst, label=label)
        return graph


@dataclass(frozen=True)
class DenseGraph:
    """
    Padded dense graph (h, F, C)

    h: (N,) mask in [0, 1], F: (N, d_f) node features, C: (N, N, d_c) edge features
    """
    h: np.ndarray
    F: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        h, F, C = _readonly(self.h), _readonly(self.F), _readonly(self.C)
        N = h.shape[0] if h.ndim == 1 else -1
        if h.ndim != 1 or F.ndim != 2 or C.ndim != 3:
            raise DimensionError(f"Expected h (N,), F (N, d_f), C (N, N, d_c); got {h.shape}, {F.shape}, {C.shape}")
        if F.shape[0] != N or C.shape[:2] != (N, N):
            raise DimensionError(f"Inconsistent sizes: h {h.shape}, F {F.shape}, C {C.shape}")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "C", C)

    @property
    def N(self) -> int:
        return self.h.shape[0]

    @property
    def d_f(self) -> int:
        return self.F.shape[1]

    @property
    def d_c(self) -> int:
        return self.C.shape[2]

    def active(self, threshold: float = 0.5) -> np.ndarray:
        """Indices of nodes with h > threshold"""
        return np.flatnonzero(self.h > threshold)

    @property
    def n_active(self) -> int:
        return len(self.active())

    def is_symmetric(self, atol: float = 0.0) -> bool:
        return bool(np.allclose(self.C, self.C.transpose(1, 0, 2), rtol=0.0, atol=atol))


@dataclass(frozen=True)
class Permutation:
    """
    Bijection on range(N)

    As a matrix, P[perm[j], j] = 1, so apply_permutation(G, P) = (Ph, PF, PCP^T).
    """
    perm: Tuple[int, ...]

    def __post_init__(self):
        perm = tuple(int(p) for p in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise DomainError(f"Not a permutation of range({len(perm)}): {perm}")
        object.__setattr__(self, "perm", perm)

    @classmethod
    def identity(cls, N: int) -> "Permutation":
        return cls(tuple(range(N)))

    @classmethod
    def random(cls, N: int, rng: np.random.Generator, fix_from: Optional[int] = None) -> "Permutation":
        """Uniform permutation; indices >= fix_from (the padding block) stay in place"""
        n = N if fix_from is None else fix_from
        head = rng.permutation(n)
        return cls(tuple(head) + tuple(range(n, N)))

    def __len__(self) -> int:
        return len(self.perm)

    def as_array(self) -> np.ndarray:
        return np.array(self.perm, dtype=int)

    def inverse(self) -> "Permutation":
        return Permutation(tuple(np.argsort(self.as_array())))

    def compose(self, other: "Permutation") -> "Permutation":
        """self after other"""
        return Permutation(tuple(self.as_array()[other.as_array()]))

    def matrix(self) -> np.ndarray:
        N = len(self)
        P = np.zeros((N, N))
        P[self.as_array(), np.arange(N)] = 1.0
        return P

    def assignment_matrix(self) -> np.ndarray:
        """M[i, perm[i]] = 1 (row i assigned to column perm[i])"""
        return self.matrix().T


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative square coupling between the nodes of two graphs"""
    T: np.ndarray

    def __post_init__(self):
        T = _readonly(self.T)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise DimensionError(f"Transport plan must be square, got shape {T.shape}")
        if not np.all(np.isfinite(T)):
            raise DomainError("Transport plan has non-finite entries")
        if np.any(T < 0):
            raise DomainError("Transport plan has negative entries")
        object.__setattr__(self, "T", T)

    @classmethod
    def uniform(cls, N: int) -> "TransportPlan":
        return cls(np.full((N, N), 1.0 / N))

    @classmethod
    def from_permutation(cls, P: Permutation) -> "TransportPlan":
        return cls(P.matrix())

    @property
    def N(self) -> int:
        return self.T.shape[0]

    def marginal_error(self) -> float:
        rows = np.abs(self.T.sum(axis=1) - 1.0).max()
        cols = np.abs(self.T.sum(axis=0) - 1.0).max()
        return float(max(rows, cols))

    def is_bistochastic(self, tol: float = 1e-6) -> bool:
        return self.marginal_error() <= tol

    def is_permutation(self) -> bool:
        return bool(np.all((self.T == 0) | (self.T == 1)) and self.is_bistochastic(0.0))


PlanLike = Union[TransportPlan, np.ndarray]


def plan_array(T: PlanLike, N: Optional[int] = None) -> np.ndarray:
    """Raw matrix of a plan, checking its size against N"""
    arr = T.T if isinstance(T, TransportPlan) else np.asarray(T, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or (N is not None and arr.shape[0] != N):
        raise DimensionError(f"Plan of shape {arr.shape} does not match N={N}")
    return arr


def dense_from_sparse(g: SparseGraph, N: int) -> DenseGraph:
    """
    One-hot padded encoding of a sparse graph

    Args:
        g: Graph with n <= N nodes
        N: Padding size

    Returns:
        DenseGraph with d_f = n_f and d_c = n_c + 1 (channel 0 = "no edge")
    """
    if g.n > N:
        raise CapacityError(f"Graph has {g.n} nodes but the padding size is N={N}")
    h = np.zeros(N)
    h[: g.n] = 1.0
    F = np.zeros((N, g.n_f))
    F[np.arange(g.n), g.labels] = 1.0
    C = np.zeros((N, N, g.n_c + 1))
    C[:, :, NO_EDGE] = 1.0
    for src, dst, label in g.edges:
        for a, b in ((src, dst), (dst, src)):
            C[a, b, NO_EDGE] = 0.0
            C[a, b, label + 1] = 1.0
    return DenseGraph(h, F, C)


def sparse_from_dense(G: DenseGraph, threshold: float = 0.5, n_f: Optional[int] = None, n_c: Optional[int] = None) -> SparseGraph:
    """
    Decode a (possibly real-valued) dense graph

    Nodes with h > threshold are kept and reindexed in order. np.argmax breaks
    ties toward the lowest channel.
    """
    if not 0 < threshold < 1:
        raise DomainError(f"threshold must lie in (0, 1), got {threshold}")
    kept = G.active(threshold)
    n_f = n_f or G.d_f
    n_c = n_c or max(G.d_c - 1, 1)
    labels = [int(np.argmax(G.F[i])) for i in kept]
    edges = []
    for a in range(len(kept)):
        for b in range(a + 1, len(kept)):
            channels = G.C[kept[a], kept[b]]
            if int(np.argmax(channels)) != NO_EDGE:
                edges.append((a, b, int(np.argmax(channels[1:]))))
    return SparseGraph.from_edges(labels, edges, n_f, n_c)


def apply_permutation(G: DenseGraph, P: Permutation) -> DenseGraph:
    """P[G] = (Ph, PF, PCP^T): node at index j moves to index perm[j]"""
    if len(P) != G.N:
        raise DimensionError(f"Permutation of length {len(P)} applied to a graph with N={G.N}")
    inv = P.inverse().as_array()
    return DenseGraph(G.h[inv], G.F[inv], G.C[inv][:, inv])


def _actives_first(G: DenseGraph) -> DenseGraph:
    active = G.active()
    rest = np.setdiff1d(np.arange(G.N), active)
    order = np.concatenate([active, rest])
    return DenseGraph(G.h[order], G.F[order], G.C[order][:, order])


def is_isomorphic_bruteforce(G1: DenseGraph, G2: DenseGraph) -> bool:
    """
    Exact isomorphism test by enumerating permutations of the active nodes

    Padding positions are compared after moving all active nodes to the front.
    """
    n1, n2 = G1.n_active, G2.n_active
    if max(n1, n2) > MAX_ISOMORPHISM_NODES:
        raise SizeError(f"Brute-force isomorphism is limited to {MAX_ISOMORPHISM_NODES} active nodes")
    if G1.N != G2.N or G1.d_f != G2.d_f or G1.d_c != G2.d_c or n1 != n2:
        return False
    A, B = _actives_first(G1), _actives_first(G2)
    n = n1
    if not (np.array_equal(A.h[n:], B.h[n:]) and np.array_equal(A.F[n:], B.F[n:])
            and np.array_equal(A.C[n:, n:], B.C[n:, n:])):
        return False
    # cheap invariant before the factorial search
    if not np.array_equal(np.sort(A.h[:n]), np.sort(B.h[:n])):
        return False
    if not np.array_equal(A.F[:n][np.lexsort(A.F[:n].T)], B.F[:n][np.lexsort(B.F[:n].T)]):
        return False
    tail = np.arange(n, G1.N)
    for perm in permutations(range(n)):
        order = np.concatenate([np.array(perm, dtype=int), tail])
        if (np.array_equal(A.h, B.h[order]) and np.array_equal(A.F, B.F[order])
                and np.array_equal(A.C, B.C[order][:, order])):
            return True
    return False


def canonical_form(g: SparseGraph) -> Tuple[Tuple[int, ...], Tuple[Tuple[int, int, int], ...]]:
    """
    Test-oracle canonical form

    Nodes sorted by (label, sorted neighbour-degree sequence), then the
    lexicographic edge list under that order. Equal forms imply isomorphic
    graphs; the converse only holds when the sort key separates the nodes,
    which is enough for round-trip checks.
    """
    A = g.adjacency()
    degrees = g.degrees()
    labels = g.labels
    keys = []
    for i in range(g.n):
        neighbour_degrees = tuple(sorted(int(degrees[j]) for j in np.flatnonzero(A[i])))
        keys.append((int(labels[i]), int(degrees[i]), neighbour_degrees, i))
    order = [key[-1] for key in sorted(keys)]
    position = {node: pos for pos, node in enumerate(order)}
    edges = tuple(sorted(
        (min(position[s], position[d]), max(position[s], position[d]), l) for s, d, l in g.edges
    ))
    return tuple(int(labels[i]) for i in order), edges


def _label_match(a, b) -> bool:
    return a["label"] == b["label"]


def automorphism_count(g: SparseGraph, limit: Optional[int] = None) -> int:
    """Number of label-preserving automorphisms (stops counting at limit)"""
    graph = g.to_networkx()
    matcher = isomorphism.GraphMatcher(graph, graph, node_match=_label_match, edge_match=_label_match)
    count = 0
    for _ in matcher.isomorphisms_iter():
        count += 1
        if limit is not None and count >= limit:
            break
    return count


def is_asymmetric(g: SparseGraph) -> bool:
    """True iff the only label-preserving automorphism is the identity"""
    return automorphism_count(g, limit=2) == 1


def random_sparse_graph(
    rng: np.random.Generator,
    n: int,
    n_f: int = 3,
    n_c: int = 1,
    p_edge: float = 0.4,
) -> SparseGraph:
    """Erdos-Renyi graph with uniform node and edge labels (test pools)"""
    labels = rng.integers(0, n_f, size=n)
    edges: List[Tuple[int, int, int]] = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p_edge:
                edges.append((u, v, int(rng.integers(0, n_c))))
    return SparseGraph.from_edges(labels.tolist(), edges, n_f, n_c)
