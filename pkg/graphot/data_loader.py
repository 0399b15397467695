"""
Data loader module for graphot
Reads and writes graph files (JSON and JSON-lines), transport plans,
permutations and matcher models
"""

from typing import Any, Dict, Iterable, List, Optional, Union
import json
import logging
import os

import numpy as np

from graphot.errors import DataError, DimensionError, GraphOTError
from graphot.graph_core import DenseGraph, Permutation, SparseGraph, TransportPlan, dense_from_sparse
from graphot.matcher import AffinityModel, model_from_json, model_to_json

logger = logging.getLogger(__name__)

GraphLike = Union[SparseGraph, DenseGraph]


def graph_to_dict(g: SparseGraph) -> Dict[str, Any]:
    """Storage format {"n_f", "n_c", "nodes": [[index, label]], "edges": [[src, dst, label]]}"""
    return {
        "n_f": g.n_f,
        "n_c": g.n_c,
        "nodes": [[i, label] for i, label in g.nodes],
        "edges": [[s, d, label] for s, d, label in g.edges],
    }


def graph_from_dict(data: Dict[str, Any]) -> SparseGraph:
    try:
        return SparseGraph(
            tuple(tuple(node) for node in data["nodes"]),
            tuple(tuple(edge) for edge in data["edges"]),
            int(data["n_f"]),
            int(data["n_c"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"Malformed graph record: {e!r}") from e


def dense_to_dict(G: DenseGraph) -> Dict[str, Any]:
    return {"h": G.h.tolist(), "F": G.F.tolist(), "C": G.C.tolist()}


def dense_from_dict(data: Dict[str, Any]) -> DenseGraph:
    try:
        return DenseGraph(np.asarray(data["h"], dtype=float), np.asarray(data["F"], dtype=float),
                          np.asarray(data["C"], dtype=float))
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"Malformed dense graph record: {e!r}") from e
    except DimensionError as e:
        raise DataError(f"Inconsistent dense graph: {e}") from e


class GraphDatasetLoader:
    """
    File access for graphs, datasets, plans, permutations and models

    Every read error surfaces as DataError, with the line number for
    JSON-lines datasets.
    """

    def __init__(self, base_dir: Optional[str] = None):
        self.base_dir = base_dir

    def _path(self, path: str) -> str:
        if self.base_dir and not os.path.isabs(path):
            return os.path.join(self.base_dir, path)
        return path

    def _read_json(self, path: str) -> Any:
        path = self._path(path)
        try:
            with open(path, "r") as f:
                return json.load(f)
        except OSError as e:
            raise DataError(f"Cannot read {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise DataError(f"{path} is not valid JSON: {e}") from e

    def load_graph(self, path: str) -> GraphLike:
        """A single graph in sparse or dense ({"h", "F", "C"}) format"""
        data = self._read_json(path)
        if not isinstance(data, dict):
            raise DataError(f"{path} does not hold a graph object")
        if "h" in data:
            return dense_from_dict(data)
        return graph_from_dict(data)

    def load_dense(self, path: str, N: Optional[int] = None) -> DenseGraph:
        """Graph file as a dense graph; sparse files are padded to N (default: their size)"""
        g = self.load_graph(path)
        if isinstance(g, DenseGraph):
            if N is not None and N != g.N:
                raise DataError(f"{path} holds a dense graph with N={g.N}, expected N={N}")
            return g
        return dense_from_sparse(g, N if N is not None else g.n)

    def save_graph(self, g: GraphLike, path: str) -> str:
        record = dense_to_dict(g) if isinstance(g, DenseGraph) else graph_to_dict(g)
        return self._write_text(json.dumps(record, sort_keys=True) + "\n", path)

    def read_dataset(self, path: str) -> List[SparseGraph]:
        """JSON-lines dataset, one sparse graph per line (blank lines skipped)"""
        path = self._path(path)
        graphs = []
        try:
            with open(path, "r") as f:
                for lineno, line in enumerate(f, start=1):
                    if not line.strip():
                        continue
                    try:
                        graphs.append(graph_from_dict(json.loads(line)))
                    except (json.JSONDecodeError, GraphOTError) as e:
                        raise DataError(f"{path}:{lineno}: {e}") from e
        except OSError as e:
            raise DataError(f"Cannot read dataset {path}: {e}") from e
        if not graphs:
            raise DataError(f"Dataset {path} is empty")
        logger.info(f"Loaded {len(graphs)} graphs from {path}")
        return graphs

    def write_dataset(self, graphs: Iterable[SparseGraph], path: str) -> str:
        """JSON-lines with sorted keys, so identical graphs give identical bytes"""
        text = "".join(json.dumps(graph_to_dict(g), sort_keys=True) + "\n" for g in graphs)
        return self._write_text(text, path)

    def load_plan(self, path: str, N: Optional[int] = None) -> TransportPlan:
        """{"T": [[...]]} or a bare nested list"""
        data = self._read_json(path)
        raw = data.get("T") if isinstance(data, dict) else data
        try:
            plan = TransportPlan(np.asarray(raw, dtype=float))
        except (TypeError, ValueError, GraphOTError) as e:
            raise DataError(f"{path} does not hold a valid transport plan: {e}") from e
        if N is not None and plan.N != N:
            raise DataError(f"Plan in {path} is {plan.N}x{plan.N}, graphs have N={N}")
        return plan

    def load_permutation(self, path: str, N: Optional[int] = None) -> Permutation:
        """{"permutation": [...]} or a bare list"""
        data = self._read_json(path)
        raw = data.get("permutation") if isinstance(data, dict) else data
        try:
            P = Permutation(tuple(int(p) for p in raw))
        except (TypeError, ValueError, GraphOTError) as e:
            raise DataError(f"{path} does not hold a valid permutation: {e}") from e
        if N is not None and len(P) != N:
            raise DataError(f"Permutation in {path} has length {len(P)}, expected {N}")
        return P

    def load_model(self, path: str) -> AffinityModel:
        return model_from_json(self._read_json(path))

    def save_model(self, model: AffinityModel, path: str) -> str:
        return self._write_text(json.dumps(model_to_json(model), sort_keys=True) + "\n", path)

    def _write_text(self, text: str, path: str) -> str:
        path = self._path(path)
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        try:
            with open(path, "w") as f:
                f.write(text)
        except OSError as e:
            raise DataError(f"Cannot write {path}: {e}") from e
        logger.info(f"Wrote {path}")
        return path


# Convenience functions for easy access
def read_dataset(path: str) -> List[SparseGraph]:
    return GraphDatasetLoader().read_dataset(path)


def write_dataset(graphs: Iterable[SparseGraph], path: str) -> str:
    return GraphDatasetLoader().write_dataset(graphs, path)


def load_graph(path: str) -> GraphLike:
    return GraphDatasetLoader().load_graph(path)
