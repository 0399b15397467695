"""
Configuration module for graphot
Centralized settings, constants and config dataclasses
"""

from dataclasses import dataclass, field, asdict, fields
from typing import Any, Dict, Optional, Tuple
import logging
import os

from graphot.errors import ConfigError

# Directory structure
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.path.join(BASE_DIR, "data")
FIXTURE_DIR = os.path.join(DATA_DIR, "fixtures")
EXPORT_DIR = os.path.join(BASE_DIR, "exports")

LOG_ENV_VAR = "GRAPHOT_LOG"
LOG_LEVELS = {
    "error": logging.ERROR,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def ensure_dirs() -> None:
    """Create the export directory if it does not exist yet"""
    os.makedirs(EXPORT_DIR, exist_ok=True)


def setup_logging(level: Optional[str] = None) -> None:
    """
    Configure the root logger from GRAPHOT_LOG (or an explicit level)

    Args:
        level: One of "error", "info", "debug". Falls back to the
            environment variable, then to "error".
    """
    name = (level or os.environ.get(LOG_ENV_VAR) or "error").lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"Unknown log level {name!r}, expected one of {sorted(LOG_LEVELS)}")
    logging.basicConfig(
        level=LOG_LEVELS[name],
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


class _Serializable:
    """to_dict / from_dict for flat and nested config dataclasses"""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"Unknown {cls.__name__} fields: {sorted(unknown)}")
        kwargs = dict(data)
        for name, f in known.items():
            sub = _NESTED.get((cls.__name__, name))
            if sub is not None and isinstance(kwargs.get(name), dict):
                kwargs[name] = sub.from_dict(kwargs[name])
        return cls(**kwargs)


@dataclass(frozen=True)
class FeaturizerConfig(_Serializable):
    """Featurizer settings (diffusion order, positional encoding, noise)"""
    k: int = 2
    pe_dim: int = 16
    noise_sigma: float = 0.01
    seed: int = 0
    enriched: bool = True  # False = featurizer ablation (F_0 and one-hot adjacency only)
    edge_labels: bool = True

    def __post_init__(self):
        if self.k < 0:
            raise ConfigError(f"k must be >= 0, got {self.k}")
        if self.pe_dim < 0 or self.pe_dim % 2 != 0:
            raise ConfigError(f"pe_dim must be a nonnegative even integer, got {self.pe_dim}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass(frozen=True)
class SinkhornConfig(_Serializable):
    """Log-domain Sinkhorn settings"""
    n_iters: int = 100
    epsilon: float = 0.1
    log_domain: bool = True

    def __post_init__(self):
        if self.n_iters < 1:
            raise ConfigError(f"n_iters must be >= 1, got {self.n_iters}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.log_domain:
            raise ConfigError("Only log-domain Sinkhorn iterations are supported")


@dataclass(frozen=True)
class FWConfig(_Serializable):
    """Frank-Wolfe (conditional gradient) settings"""
    max_iters: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be > 0, got {self.tol}")


@dataclass(frozen=True)
class TrainConfig(_Serializable):
    """Matcher training settings"""
    lr: float = 1e-3
    steps: int = 200
    batch: int = 8
    seed: int = 0
    hidden: int = 32
    embed_dim: int = 16
    tied_init: bool = False
    threads: int = 1
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        for name in ("steps", "batch", "hidden", "embed_dim", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")


GEN_FLAVORS = ("coloring", "molecule")


@dataclass(frozen=True)
class GenConfig(_Serializable):
    """Synthetic dataset generation settings"""
    n_min: int = 5
    n_max: int = 20
    seed: int = 0
    flavor: str = "coloring"
    edge_density: float = 0.5
    n_f: int = 4
    n_c: int = 1
    knn_k: int = 3
    dominant_label_freq: float = 0.6
    max_degree: int = 4

    def __post_init__(self):
        if not 1 <= self.n_min <= self.n_max:
            raise ConfigError(f"Need 1 <= n_min <= n_max, got n_min={self.n_min}, n_max={self.n_max}")
        if self.flavor not in GEN_FLAVORS:
            raise ConfigError(f"Unknown flavor {self.flavor!r}, expected one of {GEN_FLAVORS}")
        if not 0 < self.edge_density <= 1:
            raise ConfigError(f"edge_density must lie in (0, 1], got {self.edge_density}")
        if self.n_f < 1 or self.n_c < 1:
            raise ConfigError("Alphabet sizes n_f and n_c must be >= 1")
        if self.flavor == "coloring" and self.n_f != 4:
            raise ConfigError("The coloring flavor uses exactly 4 node labels (n_f=4)")
        if not 0 <= self.dominant_label_freq <= 1:
            raise ConfigError(f"dominant_label_freq must lie in [0, 1], got {self.dominant_label_freq}")
        if self.knn_k < 1:
            raise ConfigError(f"knn_k must be >= 1, got {self.knn_k}")
        if self.max_degree < 2:
            # a degree-1 cap cannot grow a tree past two nodes
            raise ConfigError(f"max_degree must be >= 2, got {self.max_degree}")


@dataclass(frozen=True)
class BenchConfig(_Serializable):
    """Edit-distance benchmark settings"""
    solvers: Tuple[str, ...] = ("exhaustive", "frank-wolfe", "hungarian-affinity", "matcher", "random")
    pairs: int = 100
    seed: int = 0
    threads: int = 0  # 0 = number of logical processors
    repeats: int = 3

    def __post_init__(self):
        unknown = [s for s in self.solvers if s not in SOLVERS]
        if unknown:
            raise ConfigError(f"Unknown solver(s) {unknown}, expected a subset of {list(SOLVERS)}")
        if self.pairs < 1 or self.repeats < 1 or self.threads < 0:
            raise ConfigError("pairs and repeats must be >= 1, threads >= 0")


_NESTED = {("TrainConfig", "sinkhorn"): SinkhornConfig}

# Bench solver registry
SOLVERS = {
    "exhaustive": "Exact edit distance by exhaustive search (N.A. above 8 nodes)",
    "frank-wolfe": "Frank-Wolfe on L_OT, rounded with the Hungarian algorithm",
    "hungarian-affinity": "Hungarian on the raw featurizer affinity",
    "matcher": "Hungarian on the (trained) matcher affinity",
    "random": "Uniformly random permutation",
}

# Result columns
BENCH_COLUMNS = [
    "solver",
    "mean_distance",
    "std_distance",
    "mean_seconds",
    "std_seconds",
    "pairs",
]
BENCH_DETAIL_COLUMNS = ["pair", "i", "j", "solver", "distance", "seconds"]
DENOISE_COLUMNS = ["p", "valid_fraction"]
TRACE_COLUMNS = ["step", "loss"]

# Entropy weight of the pigvae-plus loss
DEFAULT_LAMBDA = 10.0

# Molecule flavour: bond types (single, double, triple, aromatic)
BOND_PROBS = (0.7, 0.2, 0.05, 0.05)

# Size guards for factorial searches
MAX_ISOMORPHISM_NODES = 10
MAX_EXHAUSTIVE_NODES = 8
MAX_EDIT_NODES = 8

EXIT_CODES = {
    "ok": 0,
    "usage": 2,
    "data": 3,
    "divergence": 4,
}
