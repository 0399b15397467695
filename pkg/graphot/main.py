"""
Main entry point for graphot
Command-line surface: dataset generation, loss evaluation, matching,
edit distances, solver benchmarking, matcher training and the denoising
validity curve

Run with: python -m graphot <command> [options]
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import argparse
import logging
import os
import sys
import time

import numpy as np
import pandas as pd

from graphot.config import (
    BENCH_DETAIL_COLUMNS, DEFAULT_LAMBDA, DENOISE_COLUMNS, EXIT_CODES, GEN_FLAVORS, LOG_LEVELS,
    MAX_EDIT_NODES, SOLVERS, TRACE_COLUMNS, BenchConfig, FeaturizerConfig, FWConfig, GenConfig,
    SinkhornConfig, TrainConfig, setup_logging,
)
from graphot.data_loader import GraphDatasetLoader, graph_to_dict
from graphot.datagen import asymmetric_pool, coloring_valid, corrupt_labels, generate
from graphot.editdist import edit_exact, upper_bound
from graphot.errors import (
    CapacityError, ConfigError, DataError, DimensionError, DivergenceError, DomainError,
    GenerationError, GraphOTError, GraphValidationError, SizeError, UnsupportedError, UsageError,
)
from graphot.featurize import featurize_dataset
from graphot.graph_core import (
    DenseGraph, Permutation, SparseGraph, dense_from_sparse, sparse_from_dense,
)
from graphot.matcher import AffinityModel, match_graphs, train_matcher
from graphot.ot_loss import GroundLosses, LossWeights, compute_loss, lot_gradients, smooth_prediction
from graphot.reporting import BenchReport, ResultExporter, record_to_text, table_to_text
from graphot.solvers import exhaustive_min, frank_wolfe_qap, random_permutation, round_to_permutation

logger = logging.getLogger(__name__)

_EXIT_CLASSES = (
    ((UsageError, ConfigError, UnsupportedError), "usage"),
    ((DataError, GraphValidationError, CapacityError, GenerationError, SizeError, DimensionError), "data"),
    ((DivergenceError, DomainError), "divergence"),
)

DEFAULT_NOISE_LEVELS = (0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0)
LOSS_KINDS = ("ot", "pigvae", "pigvae-plus")
PLAN_SOURCES = ("exhaustive", "fw", "file")


def exit_code_for(error: GraphOTError) -> int:
    for classes, name in _EXIT_CLASSES:
        if isinstance(error, classes):
            return EXIT_CODES[name]
    return EXIT_CODES["data"]


def _resolve_threads(threads: int) -> int:
    return threads if threads > 0 else (os.cpu_count() or 1)


def _emit(text: str, args: argparse.Namespace, name: str, ext: Optional[str] = None) -> None:
    """Write to --out or stdout; --export also keeps a timestamped copy under exports/"""
    exporter = ResultExporter()
    if args.out:
        exporter.write_text(text, args.out)
    else:
        sys.stdout.write(text)
    if getattr(args, "export", False):
        exporter.write_text(text, exporter.timestamped_path(name, ext or args.format))


def _featurizer_config(args: argparse.Namespace) -> FeaturizerConfig:
    return FeaturizerConfig(k=args.k, pe_dim=args.pe_dim, noise_sigma=args.noise_sigma, seed=args.seed)


def _pad_pair(a, b, N: Optional[int]) -> Tuple[DenseGraph, DenseGraph]:
    """Both graphs as dense graphs with a common padding size"""
    sizes = [g.N if isinstance(g, DenseGraph) else g.n for g in (a, b)]
    N = N if N is not None else max(sizes)
    pair = []
    for g in (a, b):
        if isinstance(g, DenseGraph):
            if g.N != N:
                raise DataError(f"Dense graph with N={g.N} cannot be used with padding size {N}")
            pair.append(g)
        else:
            pair.append(dense_from_sparse(g, N))
    return pair[0], pair[1]


def _as_sparse(g) -> SparseGraph:
    return sparse_from_dense(g) if isinstance(g, DenseGraph) else g


def _loss_settings(args: argparse.Namespace, N: int) -> Tuple[GroundLosses, LossWeights]:
    gl = GroundLosses.by_name(args.ground)
    w = LossWeights.unit() if args.unit_weights else LossWeights.for_size(N)
    w = w.replace(alpha_h=args.alpha_h, alpha_F_d=args.alpha_f_d, alpha_F_c=args.alpha_f_c,
                  alpha_C_d=args.alpha_c_d, alpha_C_c=args.alpha_c_c)
    return gl, w


def loss_record(
    G: DenseGraph,
    G_hat: DenseGraph,
    kind: str,
    plan: str,
    gl: GroundLosses,
    w: LossWeights,
    lam: float = DEFAULT_LAMBDA,
    T=None,
    fw_cfg: FWConfig = FWConfig(),
    with_grad: bool = False,
) -> Dict:
    """Loss value of G_hat against G under a plan obtained from the given source"""
    if plan == "exhaustive":
        P, _ = exhaustive_min(G, G_hat, gl, w)
        T = P.matrix()
    elif plan == "fw":
        T = frank_wolfe_qap(G, G_hat, gl, w, fw_cfg)[0].T
    elif T is None:
        raise UsageError("A plan file is required with --plan file")
    T = np.asarray(getattr(T, "T", T), dtype=float)
    if T.shape != (G.N, G.N):
        raise DataError(f"Plan of shape {T.shape} does not match N={G.N}")
    record = {"loss": kind, "plan": plan, "N": G.N, "value": compute_loss(kind, G, G_hat, T, gl, w, lam)}
    if with_grad:
        grads = lot_gradients(G, G_hat, T, gl, w)
        record["grad_norms"] = {
            "d_h_hat": float(np.linalg.norm(grads.d_h_hat)),
            "d_F_hat": float(np.linalg.norm(grads.d_F_hat)),
            "d_C_hat": float(np.linalg.norm(grads.d_C_hat)),
            "d_T": float(np.linalg.norm(grads.d_T)),
        }
    return record


def _timed(fn: Callable[[], Permutation], repeats: int) -> Tuple[Permutation, float]:
    """Result of the first run and the median wall-clock time over repeats runs"""
    times, result = [], None
    for r in range(repeats):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
        if r == 0:
            result = out
    return result, float(np.median(times))


def _solver_fn(
    solver: str,
    g1: SparseGraph,
    g2: SparseGraph,
    seed: Tuple[int, int],
    model: Optional[AffinityModel],
    feat_cfg: FeaturizerConfig,
    fw_cfg: FWConfig,
) -> Optional[Callable[[], Permutation]]:
    """Zero-argument callable producing the solver's alignment, None when not applicable"""
    N = max(g1.n, g2.n)
    G1, G2 = dense_from_sparse(g1, N), dense_from_sparse(g2, N)
    if solver == "exhaustive":
        if N > MAX_EDIT_NODES:
            return None
        return lambda: edit_exact(g1, g2).permutation
    if solver == "frank-wolfe":
        gl, w = GroundLosses.squared_l2(), LossWeights.for_size(N)
        return lambda: round_to_permutation(frank_wolfe_qap(G1, G2, gl, w, fw_cfg)[0])
    if solver == "hungarian-affinity":
        return lambda: match_graphs(None, G1, G2, cfg=feat_cfg)[0]
    if solver == "matcher":
        return lambda: match_graphs(model, G1, G2, cfg=feat_cfg)[0]
    if solver == "random":
        # fresh generator per call so every repeat draws the same permutation
        return lambda: random_permutation(N, np.random.default_rng(seed))
    raise UsageError(f"Unknown solver {solver!r}, expected one of {list(SOLVERS)}")


def run_bench(
    graphs: Sequence[SparseGraph],
    cfg: BenchConfig,
    model: Optional[AffinityModel] = None,
    feat_cfg: FeaturizerConfig = FeaturizerConfig(),
    fw_cfg: FWConfig = FWConfig(),
    progress_callback=None,
) -> BenchReport:
    """
    Edit-distance upper bounds of every solver on random graph pairs

    Pairs are drawn from one seeded stream; work fans out over a thread pool
    and rows are ordered by pair index before aggregation.
    """
    if not graphs:
        raise DataError("Benchmark dataset is empty")
    rng = np.random.default_rng(cfg.seed)
    n = len(graphs)
    pairs = []
    for _ in range(cfg.pairs):
        i = int(rng.integers(n))
        j = int(rng.integers(n - 1)) if n > 1 else 0
        pairs.append((i, j + 1 if n > 1 and j >= i else j))

    if "matcher" in cfg.solvers and model is None:
        n_f = max(g.n_f for g in graphs)
        model = AffinityModel.init(n_f * (feat_cfg.k + 1), rng=np.random.default_rng(cfg.seed), tied=True)

    def evaluate(index: int) -> List[Dict]:
        i, j = pairs[index]
        rows = []
        for solver in cfg.solvers:
            fn = _solver_fn(solver, graphs[i], graphs[j], (cfg.seed, index), model, feat_cfg, fw_cfg)
            if fn is None:
                rows.append({"pair": index, "i": i, "j": j, "solver": solver,
                             "distance": np.nan, "seconds": np.nan})
                continue
            P, seconds = _timed(fn, cfg.repeats)
            distance = upper_bound(graphs[i], graphs[j], P).distance
            rows.append({"pair": index, "i": i, "j": j, "solver": solver,
                         "distance": float(distance), "seconds": seconds})
        return rows

    threads = _resolve_threads(cfg.threads)
    results: List[List[Dict]] = [None] * len(pairs)
    with ThreadPoolExecutor(max_workers=threads) as executor:
        for index, rows in enumerate(executor.map(evaluate, range(len(pairs)))):
            results[index] = rows
            if progress_callback:
                progress_callback(index, len(pairs), f"pair {index}")
    details = pd.DataFrame([row for rows in results for row in rows], columns=BENCH_DETAIL_COLUMNS)
    logger.info(f"Benchmarked {len(cfg.solvers)} solvers on {len(pairs)} pairs with {threads} threads")
    return BenchReport.from_details(details, cfg.solvers)


def denoise_curve(graphs: Sequence[SparseGraph], levels: Sequence[float], seed: int = 0) -> pd.DataFrame:
    """
    Fraction of corrupted graphs that are still properly colored, per noise level

    Graph i is corrupted with the generator seeded by (seed, i) at every
    level, so corruptions are nested across levels.
    """
    rows = []
    for p in levels:
        valid = [coloring_valid(corrupt_labels(g, p, np.random.default_rng((seed, i)))) for i, g in enumerate(graphs)]
        rows.append({"p": float(p), "valid_fraction": float(np.mean(valid)) if valid else 0.0})
    return pd.DataFrame(rows, columns=DENOISE_COLUMNS)


def cmd_gen(args: argparse.Namespace) -> int:
    n_c = args.n_c if args.n_c is not None else (4 if args.flavor == "molecule" else 1)
    cfg = GenConfig(n_min=args.n_min, n_max=args.n_max, seed=args.seed, flavor=args.flavor,
                    edge_density=args.edge_density, n_f=args.n_f, n_c=n_c)
    graphs = asymmetric_pool(cfg, args.count) if args.asymmetric else generate(cfg, args.count)
    loader = GraphDatasetLoader()
    if args.out:
        loader.write_dataset(graphs, args.out)
    else:
        sys.stdout.write("".join(record_to_text(graph_to_dict(g)) for g in graphs))
    return EXIT_CODES["ok"]


def cmd_loss(args: argparse.Namespace) -> int:
    loader = GraphDatasetLoader()
    G, G_hat = _pad_pair(loader.load_graph(args.a), loader.load_graph(args.b), args.n)
    gl, w = _loss_settings(args, G.N)
    if args.ground == "ce":
        G_hat = smooth_prediction(G_hat)
    T = loader.load_plan(args.plan_file) if args.plan == "file" and args.plan_file else None
    record = loss_record(G, G_hat, args.loss, args.plan, gl, w, args.lam, T,
                         FWConfig(args.fw_iters, args.fw_tol), args.grad)
    _emit(record_to_text(record), args, "loss", "json")
    return EXIT_CODES["ok"]


def cmd_match(args: argparse.Namespace) -> int:
    loader = GraphDatasetLoader()
    G1, G2 = _pad_pair(loader.load_graph(args.a), loader.load_graph(args.b), args.n)
    model = loader.load_model(args.model) if args.model else None
    P, bound = match_graphs(model, G1, G2, cfg=_featurizer_config(args))
    _emit(record_to_text({"permutation": list(P.perm), "upper_bound": bound.distance}), args, "match", "json")
    return EXIT_CODES["ok"]


def cmd_editdist(args: argparse.Namespace) -> int:
    loader = GraphDatasetLoader()
    g1, g2 = _as_sparse(loader.load_graph(args.a)), _as_sparse(loader.load_graph(args.b))
    if args.perm:
        P = loader.load_permutation(args.perm)
        if len(P) < max(g1.n, g2.n):
            raise DataError(f"Permutation of length {len(P)} cannot align graphs of sizes {g1.n} and {g2.n}")
        result = upper_bound(g1, g2, P)
    else:
        result = edit_exact(g1, g2)
    _emit(record_to_text(result.to_dict()), args, "editdist", "json")
    return EXIT_CODES["ok"]


def _companion_path(path: str, fmt: str) -> str:
    """path with its extension swapped for fmt, or fmt appended when that would collide"""
    stem, ext = os.path.splitext(path)
    return f"{stem}.{fmt}" if ext and ext != f".{fmt}" else f"{path}.{fmt}"


def cmd_bench(args: argparse.Namespace) -> int:
    loader = GraphDatasetLoader()
    graphs = loader.read_dataset(args.data)
    solvers = tuple(s.strip() for s in args.solvers.split(",") if s.strip())
    unknown = [s for s in solvers if s not in SOLVERS]
    if unknown:
        raise UsageError(f"Unknown solver(s) {unknown}, expected a subset of {list(SOLVERS)}")
    cfg = BenchConfig(solvers=solvers, pairs=args.pairs, seed=args.seed, threads=args.threads, repeats=args.repeats)
    model = loader.load_model(args.model) if args.model else None
    report = run_bench(graphs, cfg, model, _featurizer_config(args), FWConfig(args.fw_iters, args.fw_tol))
    _emit(table_to_text(report.summary, args.format), args, "bench")

    # the summary is always kept in both formats when it goes to a file
    other = "json" if args.format == "csv" else "csv"
    exporter = ResultExporter()
    if args.out:
        exporter.write_text(table_to_text(report.summary, other), _companion_path(args.out, other))
    if args.export:
        exporter.write_text(table_to_text(report.summary, other), exporter.timestamped_path("bench", other))
    if args.details:
        exporter.export_table(report.details, "bench_details", args.format, args.details)
    return EXIT_CODES["ok"]


def cmd_train_matcher(args: argparse.Namespace) -> int:
    loader = GraphDatasetLoader()
    graphs = loader.read_dataset(args.data)
    feat_cfg = _featurizer_config(args)
    N = args.n if args.n is not None else max(g.n for g in graphs)
    dataset = featurize_dataset(graphs, N, feat_cfg)
    cfg = TrainConfig(
        lr=args.lr, steps=args.steps, batch=args.batch, seed=args.seed, hidden=args.hidden,
        embed_dim=args.embed_dim, threads=_resolve_threads(args.threads),
        sinkhorn=SinkhornConfig(n_iters=args.sinkhorn_iters, epsilon=args.epsilon),
    )
    d_n = dataset[0].input.d_f
    model = AffinityModel.init(d_n, cfg.hidden, cfg.embed_dim, np.random.default_rng(cfg.seed), cfg.tied_init)
    model, trace = train_matcher(model, dataset, cfg)
    out = args.out or ResultExporter().timestamped_path("matcher", "json")
    loader.save_model(model, out)
    if args.trace:
        trace_df = pd.DataFrame({"step": np.arange(len(trace)), "loss": trace}, columns=TRACE_COLUMNS)
        ResultExporter().export_table(trace_df, "matcher_trace", "csv", args.trace)
    sys.stdout.write(record_to_text({"model": out, "steps": len(trace), "final_loss": trace[-1]}))
    return EXIT_CODES["ok"]


def cmd_denoise_eval(args: argparse.Namespace) -> int:
    graphs = GraphDatasetLoader().read_dataset(args.data)
    try:
        levels = [float(p) for p in args.levels.split(",")] if args.levels else list(DEFAULT_NOISE_LEVELS)
    except ValueError as e:
        raise UsageError(f"--levels must be a comma-separated list of numbers: {e}") from e
    _emit(table_to_text(denoise_curve(graphs, levels, args.seed), args.format), args, "denoise")
    return EXIT_CODES["ok"]


def _add_featurizer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=2, help="Diffusion order of the node features")
    p.add_argument("--pe-dim", type=int, default=16, help="Positional encoding size")
    p.add_argument("--noise-sigma", type=float, default=0.01, help="Disambiguation noise std")


def _add_fw_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fw-iters", type=int, default=100)
    p.add_argument("--fw-tol", type=float, default=1e-6)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=0, help="Worker threads (0 = logical processors)")
    common.add_argument("--out", default=None, help="Output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--export", action="store_true", help="Also keep a timestamped copy under exports/")
    common.add_argument("--log-level", choices=sorted(LOG_LEVELS), default=None,
                        help="Overrides the GRAPHOT_LOG environment variable")

    parser = argparse.ArgumentParser(prog="graphot", description="Permutation-invariant graph losses and matching")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="Generate a synthetic JSON-lines dataset")
    p.add_argument("--flavor", choices=GEN_FLAVORS, default="coloring")
    p.add_argument("--n-min", type=int, default=5)
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--edge-density", type=float, default=0.5)
    p.add_argument("--n-f", type=int, default=4)
    p.add_argument("--n-c", type=int, default=None, help="Edge alphabet (default 1 for coloring, 4 for molecule)")
    p.add_argument("--asymmetric", action="store_true", help="Keep only graphs without nontrivial automorphisms")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("loss", parents=[common], help="Evaluate a loss between two graph files")
    p.add_argument("--a", required=True, help="Target graph file")
    p.add_argument("--b", required=True, help="Predicted graph file")
    p.add_argument("--plan", choices=PLAN_SOURCES, default="exhaustive")
    p.add_argument("--plan-file", default=None)
    p.add_argument("--loss", choices=LOSS_KINDS, default="ot")
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--ground", choices=("l2", "ce"), default="l2")
    p.add_argument("--unit-weights", action="store_true")
    for name in ("h", "f-d", "f-c", "c-d", "c-c"):
        p.add_argument(f"--alpha-{name}", type=float, default=None)
    p.add_argument("--grad", action="store_true", help="Also report gradient norms")
    p.add_argument("--n", type=int, default=None, help="Padding size (default: largest graph)")
    _add_fw_flags(p)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("match", parents=[common], help="Match two graphs and bound their edit distance")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--model", default=None, help="Trained matcher (default: raw featurizer affinity)")
    p.add_argument("--n", type=int, default=None)
    _add_featurizer_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("editdist", parents=[common], help="Exact edit distance or the bound of a permutation")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="Exact distance (default)")
    mode.add_argument("--perm", default=None, help="Permutation file")
    p.set_defaults(func=cmd_editdist)

    p = sub.add_parser(
        "bench", parents=[common], help="Benchmark matching solvers on random pairs",
        description="The summary table goes to stdout or --out in --format. With --out or --export the "
                    "other format is written as well, next to the primary file.",
    )
    p.add_argument("--data", required=True)
    p.add_argument("--solvers", default=",".join(SOLVERS))
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--model", default=None, help="Trained matcher (default: untrained, tied weights)")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--details", default=None, help="Also write the per-pair table to this file")
    _add_featurizer_flags(p)
    _add_fw_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train-matcher", parents=[common], help="Train the affinity matcher")
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--embed-dim", type=int, default=16)
    p.add_argument("--sinkhorn-iters", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--trace", default=None, help="CSV file for the per-step loss")
    _add_featurizer_flags(p)
    p.set_defaults(func=cmd_train_matcher)

    p = sub.add_parser("denoise-eval", parents=[common], help="Validity of corrupted colorings per noise level")
    p.add_argument("--data", required=True)
    p.add_argument("--levels", default=None, help="Comma-separated corruption probabilities")
    p.set_defaults(func=cmd_denoise_eval)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the command and map errors to exit codes"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_CODES["ok"]
    try:
        setup_logging(args.log_level)
        return args.func(args)
    except GraphOTError as e:
        code = exit_code_for(e)
        logger.error(f"{args.command}: {e}")
        sys.stderr.write(f"graphot {args.command}: {e}\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
