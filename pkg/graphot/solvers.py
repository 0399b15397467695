"""
Transport-plan and assignment solvers for graphot
Log-domain Sinkhorn with unrolled differentiation, Hungarian assignment,
Frank-Wolfe on the L_OT relaxation and the exhaustive permutation oracle
"""

from dataclasses import dataclass
from itertools import permutations
from typing import List, Optional, Tuple
import logging

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from graphot.config import FWConfig, MAX_EXHAUSTIVE_NODES, SinkhornConfig
from graphot.errors import DimensionError, DomainError, SizeError
from graphot.graph_core import DenseGraph, Permutation, TransportPlan
from graphot.ot_loss import (
    GroundLosses, LossWeights, assignment_costs, lot_fast, lot_gradients, lot_quadratic,
)

logger = logging.getLogger(__name__)

__all__ = [
    "SinkhornConfig",
    "FWConfig",
    "SinkhornTrace",
    "sinkhorn",
    "sinkhorn_with_trace",
    "sinkhorn_backward",
    "sinkhorn_log_backward",
    "hungarian",
    "round_to_permutation",
    "random_permutation",
    "linesearch_quadratic",
    "frank_wolfe_qap",
    "exhaustive_min",
]


@dataclass(frozen=True)
class SinkhornTrace:
    """
    Log-domain states of an unrolled Sinkhorn run

    states[0] = log(K) / epsilon, then one state per half-step (rows first,
    then columns); exp(states[-1]) is the returned plan.
    """
    states: Tuple[np.ndarray, ...]
    epsilon: float

    @property
    def plan(self) -> TransportPlan:
        return TransportPlan(np.exp(self.states[-1]))


def _log_kernel(K: np.ndarray, epsilon: float) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DimensionError(f"Sinkhorn needs a square matrix, got shape {K.shape}")
    if not np.all(np.isfinite(K)) or np.any(K <= 0):
        raise DomainError("Sinkhorn needs a finite, strictly positive matrix")
    return np.log(K) / epsilon


def sinkhorn_with_trace(
    K: Optional[np.ndarray],
    cfg: SinkhornConfig = SinkhornConfig(),
    log_K: Optional[np.ndarray] = None,
) -> SinkhornTrace:
    """
    Run cfg.n_iters row/column log-sum-exp normalizations and keep every state

    log_K may be given instead of K when the kernel would underflow.
    """
    if log_K is not None:
        log_K = np.asarray(log_K, dtype=float)
        if log_K.ndim != 2 or log_K.shape[0] != log_K.shape[1] or not np.all(np.isfinite(log_K)):
            raise DomainError("Sinkhorn needs a finite square log-kernel")
        Z = log_K / cfg.epsilon
    else:
        Z = _log_kernel(K, cfg.epsilon)
    states = [Z]
    for _ in range(cfg.n_iters):
        Z = Z - logsumexp(Z, axis=1, keepdims=True)
        states.append(Z)
        Z = Z - logsumexp(Z, axis=0, keepdims=True)
        states.append(Z)
    return SinkhornTrace(tuple(states), cfg.epsilon)


def sinkhorn(K: np.ndarray, cfg: SinkhornConfig = SinkhornConfig()) -> TransportPlan:
    """
    Project exp(log(K) / epsilon) onto the bistochastic matrices

    epsilon = 1 is the plain Sinkhorn projection of K. The iteration count is
    fixed; there is no convergence test.

    Raises:
        DomainError: K has a nonpositive or non-finite entry
    """
    trace = sinkhorn_with_trace(K, cfg)
    plan = trace.plan
    logger.debug(f"Sinkhorn: N={plan.N}, {cfg.n_iters} iterations, marginal error {plan.marginal_error():.2e}")
    return plan


def sinkhorn_backward(
    K: np.ndarray,
    cfg: SinkhornConfig,
    upstream: np.ndarray,
    trace: Optional[SinkhornTrace] = None,
) -> np.ndarray:
    """
    Reverse-mode derivative of the unrolled Sinkhorn map

    Args:
        K: Positive matrix of the forward pass
        cfg: Forward settings
        upstream: d(loss)/dT at the forward output
        trace: Forward states, recomputed when omitted

    Returns:
        d(loss)/dK, same shape as K
    """
    K = np.asarray(K, dtype=float)
    trace = trace if trace is not None else sinkhorn_with_trace(K, cfg)
    return sinkhorn_log_backward(trace, upstream) / K


def sinkhorn_log_backward(trace: SinkhornTrace, upstream: np.ndarray) -> np.ndarray:
    """d(loss)/d(log K) through the unrolled iterations recorded in trace"""
    states = trace.states
    g = np.asarray(upstream, dtype=float) * np.exp(states[-1])
    # odd half-steps normalized rows, even ones columns
    for step in range(len(states) - 1, 0, -1):
        S = np.exp(states[step])
        axis = 1 if step % 2 == 1 else 0
        g = g - S * g.sum(axis=axis, keepdims=True)
    return g / trace.epsilon


def hungarian(cost: np.ndarray) -> Permutation:
    """
    Exact linear assignment: perm[i] is the column assigned to row i

    Raises:
        DomainError: cost has NaN or infinite entries
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise DimensionError(f"Assignment needs a square cost matrix, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise DomainError("Assignment cost matrix has NaN or infinite entries")
    rows, cols = linear_sum_assignment(cost)
    return Permutation(tuple(cols[np.argsort(rows)]))


def round_to_permutation(T) -> Permutation:
    """Aligning permutation P whose matrix is closest to T (Hungarian on -T)"""
    T = T.T if isinstance(T, TransportPlan) else np.asarray(T, dtype=float)
    return hungarian(-T).inverse()


def random_permutation(N: int, rng: np.random.Generator) -> Permutation:
    return Permutation.random(N, rng)


def linesearch_quadratic(a: float, b: float) -> float:
    """Minimizer of a g^2 + b g over g in [0, 1]"""
    if a > 0:
        return float(np.clip(-b / (2.0 * a), 0.0, 1.0))
    return 1.0 if a + b < 0 else 0.0


def frank_wolfe_qap(
    G: DenseGraph,
    G_hat: DenseGraph,
    gl: GroundLosses,
    w: LossWeights,
    cfg: FWConfig = FWConfig(),
) -> Tuple[TransportPlan, List[float]]:
    """
    Conditional gradient on min_T L_OT(G, G_hat, T) over the bistochastic matrices

    Starts from the uniform plan; each iteration moves toward the Hungarian
    vertex of the gradient with an exact line search, so the objective trace
    is nonincreasing.

    Returns:
        Final plan and the objective value after every accepted step (first
        entry is the uniform plan)
    """
    N = G.N
    if N < 1:
        raise DimensionError("Frank-Wolfe needs graphs with at least one slot")
    T = np.full((N, N), 1.0 / N)
    trace = [lot_fast(G, G_hat, T, gl, w)]
    for it in range(cfg.max_iters):
        grads = lot_gradients(G, G_hat, T, gl, w)
        vertex = hungarian(grads.d_T).assignment_matrix()
        D = vertex - T
        b = float((grads.d_T * D).sum())
        a = lot_quadratic(G, G_hat, D, gl, w)
        gamma = linesearch_quadratic(a, b)
        if gamma == 0.0:
            break
        candidate = T + gamma * D
        value = lot_fast(G, G_hat, candidate, gl, w)
        if value > trace[-1]:
            # rounding noise at a stationary point
            break
        T = candidate
        decrease = trace[-1] - value
        trace.append(value)
        if decrease <= cfg.tol * max(abs(trace[-2]), np.finfo(float).tiny):
            break
    logger.info(f"Frank-Wolfe stopped after {len(trace) - 1} steps at objective {trace[-1]:.6g}")
    return TransportPlan(np.clip(T, 0.0, None)), trace


def exhaustive_min(
    G: DenseGraph,
    G_hat: DenseGraph,
    gl: GroundLosses,
    w: LossWeights,
) -> Tuple[Permutation, float]:
    """
    Exact minimum of L_OT over all N! permutation plans

    Returns:
        (P, value) with P the aligning permutation, i.e. the plan is P.matrix()
        and value = L_OT(G, G_hat, P.matrix()). Ties go to the
        lexicographically first assignment.

    Raises:
        SizeError: N > 8
    """
    N = G.N
    if N > MAX_EXHAUSTIVE_NODES:
        raise SizeError(f"Exhaustive search is limited to N <= {MAX_EXHAUSTIVE_NODES}, got N={N}")
    A, Q = assignment_costs(G, G_hat, gl, w)
    sigmas = np.array(list(permutations(range(N))), dtype=int)
    rows = np.arange(N)
    linear = A[rows, sigmas].sum(axis=1)
    quadratic = Q[rows[:, None], sigmas[:, :, None], rows[None, :], sigmas[:, None, :]].sum(axis=(1, 2))
    values = linear + quadratic
    best = int(np.argmin(values))
    sigma = Permutation(tuple(sigmas[best]))
    return sigma.inverse(), float(values[best])
