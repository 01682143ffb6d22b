"""Positive-definite Gram matrices over graphs, and jittered Cholesky factors."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from app.config import get_settings
from app.exceptions import DimensionError, GraphError, NumericalError
from app.services.distances import DistanceMatrix
from app.services.graphs import Graph, matrix_diagnostics

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SqExpHyper:
    """
    Squared-exponential hyperparameters.

    `length_scale` multiplies the graph distance. The survival kernel also needs
    `time_length_scale` and one entry of `covariate_length_scales` per scalar covariate.
    """
    signal_variance: float
    length_scale: float
    time_length_scale: Optional[float] = None
    covariate_length_scales: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        scales = [self.length_scale, *self.covariate_length_scales]
        if self.time_length_scale is not None:
            scales.append(self.time_length_scale)
        if self.signal_variance <= 0 or any(s <= 0 for s in scales):
            raise ValueError(f"hyperparameters must be positive: {self}")


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Kernel matrix K with its lower Cholesky factor of K + jitter * I."""
    K: np.ndarray
    chol: np.ndarray
    jitter: float

    @property
    def m(self) -> int:
        return self.K.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """(K + jitter I)^{-1} b via the cached factor."""
        return linalg.cho_solve((self.chol, True), b)

    def whiten(self, b: np.ndarray) -> np.ndarray:
        """C^{-1} b."""
        return linalg.solve_triangular(self.chol, b, lower=True)


def _as_array(d) -> np.ndarray:
    return d.values if isinstance(d, DistanceMatrix) else np.asarray(d, dtype=float)


def stabilized_cholesky(
    K: np.ndarray,
    ladder: Optional[Sequence[float]] = None,
) -> tuple[np.ndarray, float]:
    """
    Lower Cholesky factor of K + jitter * I for the smallest jitter on the ladder.

    Ladder entries are relative to mean(diag K); the returned jitter is absolute.
    """
    K = np.asarray(K, dtype=float)
    ladder = get_settings().jitter_ladder if ladder is None else ladder
    scale = float(np.mean(np.diag(K))) if K.size else 1.0
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0

    eye = np.eye(K.shape[0])
    for rel in ladder:
        jitter = rel * scale
        try:
            chol = linalg.cholesky(K + jitter * eye, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError):
            continue
        if rel > 0:
            logger.debug(f"Cholesky needed jitter {jitter:.3e} on a {K.shape[0]}x{K.shape[0]} Gram")
        return chol, jitter

    diagnostics = matrix_diagnostics(K)
    diagnostics["max_jitter"] = ladder[-1] * scale if len(ladder) else 0.0
    raise NumericalError("Cholesky failed at maximum jitter", diagnostics=diagnostics)


def gram_from_kernel(K: np.ndarray, ladder: Optional[Sequence[float]] = None) -> GramMatrix:
    chol, jitter = stabilized_cholesky(K, ladder)
    return GramMatrix(K=K, chol=chol, jitter=jitter)


def sqexp_kernel(d: np.ndarray, signal_variance: float, length_scale: float) -> np.ndarray:
    """sigma^2 * exp(-ell * d) entry-wise; d is already a squared distance."""
    return signal_variance * np.exp(-length_scale * np.asarray(d, dtype=float))


def sqexp_gram(
    D: DistanceMatrix | np.ndarray,
    h: SqExpHyper,
    ladder: Optional[Sequence[float]] = None,
) -> GramMatrix:
    """K[i][j] = sigma^2 exp(-ell D[i][j]), factorized with the jitter ladder."""
    return gram_from_kernel(sqexp_kernel(_as_array(D), h.signal_variance, h.length_scale), ladder)


def survival_kernel(
    d_graph: np.ndarray,
    d_time: np.ndarray,
    d_covariates: Sequence[np.ndarray],
    h: SqExpHyper,
) -> np.ndarray:
    """Additive kernel over graph, time and scalar-covariate blocks; any block shape."""
    if h.time_length_scale is None:
        raise ValueError("survival kernel needs a time length scale")
    if len(d_covariates) != len(h.covariate_length_scales):
        raise DimensionError(
            f"{len(d_covariates)} covariate blocks but "
            f"{len(h.covariate_length_scales)} covariate length scales"
        )
    shape = np.shape(d_graph)
    blocks = [d_time, *d_covariates]
    if any(np.shape(b) != shape for b in blocks):
        raise DimensionError(
            f"survival kernel blocks disagree: {[shape] + [np.shape(b) for b in blocks]}"
        )

    total = np.exp(-h.length_scale * np.asarray(d_graph, dtype=float))
    for d_k, ell_k in zip(d_covariates, h.covariate_length_scales):
        total = total + np.exp(-ell_k * np.asarray(d_k, dtype=float))
    total = total + np.exp(-h.time_length_scale * np.asarray(d_time, dtype=float))
    return h.signal_variance * total


def survival_gram(
    D_G: DistanceMatrix | np.ndarray,
    D_T: np.ndarray,
    D_p: Sequence[np.ndarray],
    h: SqExpHyper,
    ladder: Optional[Sequence[float]] = None,
) -> GramMatrix:
    """Additive survival Gram; the jitter ladder starts at the survival setting."""
    ladder = get_settings().survival_jitter_ladder if ladder is None else ladder
    d_graph = _as_array(D_G)
    if d_graph.ndim != 2 or d_graph.shape[0] != d_graph.shape[1]:
        raise DimensionError(f"survival Gram needs square blocks, got {d_graph.shape}")
    return gram_from_kernel(survival_kernel(d_graph, D_T, D_p, h), ladder)


def squared_differences(a: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
    """(a_i - b_j)^2 for scalar times or covariates."""
    a = np.asarray(a, dtype=float)
    b = a if b is None else np.asarray(b, dtype=float)
    return (a[:, None] - b[None, :]) ** 2


def walk_counts(g: Graph, steps: int) -> np.ndarray:
    """1' A^s 1 for s = 0..steps."""
    counts = np.empty(steps + 1)
    v = np.ones(g.n)
    for s in range(steps + 1):
        counts[s] = v.sum()
        v = g.weights @ v
    return counts


def random_walk_gram(
    graphs: Sequence[Graph],
    steps: int = 3,
    decay: float = 0.01,
    normalize: bool = False,
    ladder: Optional[Sequence[float]] = None,
) -> GramMatrix:
    """
    k-step random-walk kernel on the direct product graph, uniform start/stop.

    K[i][j] = sum_s decay^s 1'(A_i x A_j)^s 1. Since (A x B)^s = A^s x B^s and
    1'(A x B)1 = (1'A1)(1'B1), each term factorizes into per-graph walk counts.
    With `normalize`, entries are divided by n^2.
    """
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    if decay <= 0:
        raise ValueError(f"decay must be positive, got {decay}")
    for idx, g in enumerate(graphs):
        if not g.is_binary:
            raise GraphError(
                f"graph {idx} is weighted; the random-walk kernel needs binary graphs "
                "(threshold first with threshold_binarize)"
            )
    n_orders = {g.n for g in graphs}
    if len(n_orders) != 1:
        raise DimensionError(f"all graphs must share one order, got {sorted(n_orders)}")

    counts = np.stack([walk_counts(g, steps) for g in graphs])  # m x (steps+1)
    weights = decay ** np.arange(steps + 1)
    K = (counts * weights) @ counts.T
    K = (K + K.T) / 2.0
    if normalize:
        K = K / float(n_orders.pop() ** 2)
    return gram_from_kernel(K, ladder)


def random_walk_features(
    graphs: Sequence[Graph],
    steps: int,
    decay: float,
    normalize: bool,
) -> np.ndarray:
    """Feature rows phi with K = phi phi'; lets new graphs join a cached kernel."""
    counts = np.stack([walk_counts(g, steps) for g in graphs])
    phi = counts * np.sqrt(decay ** np.arange(steps + 1))
    if normalize:
        phi = phi / float(graphs[0].n)
    return phi


def cross_covariance(
    d_new: np.ndarray,
    h: SqExpHyper,
    d_time: Optional[np.ndarray] = None,
    d_covariates: Sequence[np.ndarray] = (),
    m: Optional[int] = None,
) -> np.ndarray:
    """
    Covariances between new points and m training points.

    With `d_time`, the additive survival form is used, matching survival_gram rows.
    When `m` is given, every row must hold exactly m distances.
    """
    d_new = np.asarray(d_new, dtype=float)
    if m is not None and (d_new.ndim == 0 or d_new.shape[-1] != m):
        raise DimensionError(f"expected distances to {m} training points, got shape {d_new.shape}")
    if d_time is None:
        return sqexp_kernel(d_new, h.signal_variance, h.length_scale)
    if np.shape(d_time) != d_new.shape:
        raise DimensionError(f"time block {np.shape(d_time)} does not match {d_new.shape}")
    return survival_kernel(d_new, d_time, d_covariates, h)
