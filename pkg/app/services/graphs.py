"""Network covariates: validated weighted graphs and their Laplacian representations."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from app.config import get_settings
from app.exceptions import GraphError, NumericalError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph of fixed order with real (possibly negative) weights."""
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {w.shape}")
        if w.shape[0] < 2:
            raise GraphError(f"graph order must be at least 2, got {w.shape[0]}")
        if not np.all(np.isfinite(w)):
            raise GraphError("adjacency contains non-finite weights")

        tol = get_settings().graph_tolerance
        asym = np.abs(w - w.T)
        if asym.max() > tol:
            i, j = np.unravel_index(np.argmax(asym), asym.shape)
            raise GraphError(
                f"adjacency is not symmetric: W[{i}][{j}]={float(w[i, j])!r} "
                f"but W[{j}][{i}]={float(w[j, i])!r}"
            )
        diag = np.abs(np.diag(w))
        if diag.max() > tol:
            i = int(np.argmax(diag))
            raise GraphError(f"self loop at node {i}: W[{i}][{i}]={float(w[i, i])!r}")

        w = (w + w.T) / 2.0
        np.fill_diagonal(w, 0.0)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def has_negative_weights(self) -> bool:
        return bool(np.any(self.weights < 0))

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.weights == 0) | (self.weights == 1)))

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, k=1)))

    def permuted(self, order: np.ndarray) -> "Graph":
        """Relabel nodes so that new node k is old node order[k]."""
        order = np.asarray(order)
        return Graph(self.weights[np.ix_(order, order)])


@dataclass(frozen=True)
class Spectrum:
    """Real eigenvalues sorted ascending."""
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def _require_non_negative(g: Graph, name: str) -> None:
    if g.has_negative_weights:
        raise GraphError(
            f"{name} needs non-negative weights; use signed_laplacian for graphs "
            "with negative edges"
        )


def laplacian(g: Graph) -> np.ndarray:
    """L = D - W with D the diagonal strength matrix."""
    _require_non_negative(g, "laplacian")
    return np.diag(g.weights.sum(axis=1)) - g.weights


def normalized_laplacian(g: Graph) -> np.ndarray:
    """
    L = I - D^{-1/2} W D^{-1/2}.

    Isolated nodes (zero strength) get an all-zero row and column, diagonal included.
    """
    _require_non_negative(g, "normalized_laplacian")
    strength = g.weights.sum(axis=1)
    connected = strength > 0
    inv_sqrt = np.zeros_like(strength)
    inv_sqrt[connected] = 1.0 / np.sqrt(strength[connected])
    scaled = inv_sqrt[:, None] * g.weights * inv_sqrt[None, :]
    return np.diag(connected.astype(float)) - scaled


def signed_laplacian(g: Graph) -> np.ndarray:
    """Off-diagonal -W, diagonal the absolute strengths; equals laplacian(g) when W >= 0."""
    return np.diag(np.abs(g.weights).sum(axis=1)) - g.weights


def spectrum(matrix: np.ndarray) -> Spectrum:
    """All eigenvalues of a symmetric matrix, sorted ascending."""
    matrix = np.asarray(matrix, dtype=float)
    try:
        values = linalg.eigvalsh(matrix)
    except (linalg.LinAlgError, ValueError) as e:
        logger.error(f"Eigensolve failed for {matrix.shape} matrix: {e}")
        raise NumericalError(
            "symmetric eigensolver did not converge",
            diagnostics=matrix_diagnostics(matrix),
        ) from e
    return Spectrum(np.sort(values))


def matrix_diagnostics(matrix: np.ndarray) -> dict[str, float]:
    """Cheap condition summary attached to numerical errors."""
    diag = np.diag(matrix)
    info = {
        "size": int(matrix.shape[0]),
        "min_diag": float(diag.min()) if diag.size else 0.0,
        "max_diag": float(diag.max()) if diag.size else 0.0,
        "finite": bool(np.all(np.isfinite(matrix))),
    }
    try:
        info["condition"] = float(np.linalg.cond(matrix))
    except np.linalg.LinAlgError:
        info["condition"] = float("inf")
    return info


def threshold_binarize(g: Graph, cutoff: float) -> Graph:
    """Binary graph with an edge wherever |weight| > cutoff."""
    return Graph((np.abs(g.weights) > cutoff).astype(float))


def from_rows(rows: list[list[float]], name: Optional[str] = None) -> Graph:
    """Build a Graph from nested lists, naming the source in validation errors."""
    try:
        weights = np.asarray(rows, dtype=float)
    except ValueError as e:
        raise GraphError(f"{name or 'graph'}: rows do not form a numeric matrix") from e
    try:
        return Graph(weights)
    except GraphError as e:
        if name is None:
            raise
        raise GraphError(f"{name}: {e}") from e
