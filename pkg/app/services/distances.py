"""Pairwise graph distances and the cached distance matrix behind every kernel."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from app.config import get_settings
from app.exceptions import DatasetError, DimensionError, GraphError
from app.models.schemas import DistanceKind
from app.services.graphs import (
    Graph,
    laplacian,
    normalized_laplacian,
    signed_laplacian,
    spectrum,
)

logger = logging.getLogger(__name__)

_LAPLACIANS = {
    DistanceKind.SPECTRAL_LAPLACIAN: laplacian,
    DistanceKind.SPECTRAL_NORMALIZED: normalized_laplacian,
    DistanceKind.SPECTRAL_SIGNED: signed_laplacian,
}


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric, zero-diagonal, non-negative m x m matrix of graph distances."""
    values: np.ndarray
    kind: DistanceKind

    def __post_init__(self):
        d = np.asarray(self.values, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise DimensionError(f"distance matrix must be square, got {d.shape}")
        if np.any(d < 0) or np.any(np.diag(d) != 0) or not np.array_equal(d, d.T):
            raise DimensionError("distance matrix must be symmetric, non-negative, zero-diagonal")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "values", d)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def restrict(self, rows: Sequence[int], cols: Optional[Sequence[int]] = None) -> np.ndarray:
        """Slice rows x cols (cols default to rows) without recomputing anything."""
        rows = np.asarray(rows, dtype=int)
        cols = rows if cols is None else np.asarray(cols, dtype=int)
        return self.values[np.ix_(rows, cols)]

    def subset(self, index: Sequence[int]) -> "DistanceMatrix":
        return DistanceMatrix(self.restrict(index), self.kind)

    def save_csv(self, path: Path) -> Path:
        """Write m rows of m comma-separated reals behind a `# kind=... m=...` line."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(
            path,
            self.values,
            delimiter=",",
            fmt="%.17g",
            header=f"kind={self.kind.value} m={self.m}",
            comments="# ",
        )
        logger.info(f"Cached {self.m}x{self.m} {self.kind.value} distances to {path}")
        return path

    @classmethod
    def load_csv(cls, path: Path) -> "DistanceMatrix":
        path = Path(path)
        with open(path, encoding="utf-8") as handle:
            header = handle.readline().lstrip("#").split()
        meta = dict(item.split("=", 1) for item in header if "=" in item)
        if "kind" not in meta or "m" not in meta:
            raise DatasetError("missing '# kind=... m=...' metadata line", str(path), 1)
        try:
            kind = DistanceKind(meta["kind"])
        except ValueError as e:
            raise DatasetError(f"unknown distance kind {meta['kind']!r}", str(path), 1) from e

        values = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        if values.shape != (int(meta["m"]), int(meta["m"])):
            raise DatasetError(
                f"expected {meta['m']}x{meta['m']} entries, found {values.shape}", str(path)
            )
        return cls(values, kind)


def _check_orders(graphs: Sequence[Graph]) -> int:
    orders = {g.n for g in graphs}
    if len(orders) != 1:
        raise DimensionError(f"all graphs must share one order, got orders {sorted(orders)}")
    return orders.pop()


def _require_compatible(g: Graph, kind: DistanceKind) -> None:
    if kind in (DistanceKind.SPECTRAL_LAPLACIAN, DistanceKind.SPECTRAL_NORMALIZED) \
            and g.has_negative_weights:
        raise GraphError(
            f"{kind.value} distance needs non-negative weights; use spectral-signed"
        )


def frobenius_distance(g1: Graph, g2: Graph) -> float:
    """Sum of squared entry differences over ordered pairs, divided by n(n-1)."""
    n = _check_orders([g1, g2])
    return float(np.sum((g1.weights - g2.weights) ** 2) / (n * (n - 1)))


def graph_spectrum(g: Graph, kind: DistanceKind) -> np.ndarray:
    """Sorted eigenvalues of the Laplacian variant that `kind` names."""
    _require_compatible(g, kind)
    return spectrum(_LAPLACIANS[kind](g)).values


def spectral_distance(
    g1: Graph,
    g2: Graph,
    variant: DistanceKind = DistanceKind.SPECTRAL_NORMALIZED,
) -> float:
    """Sum of squared differences of sorted Laplacian eigenvalues."""
    if not variant.is_spectral:
        raise ValueError(f"{variant.value} is not a spectral distance")
    _check_orders([g1, g2])
    diff = graph_spectrum(g1, variant) - graph_spectrum(g2, variant)
    return float(np.sum(diff ** 2))


def resolve_kind(graphs: Sequence[Graph], kind: DistanceKind) -> DistanceKind:
    """Swap an unsigned spectral kind for the signed Laplacian when weights go negative."""
    if kind in (DistanceKind.SPECTRAL_LAPLACIAN, DistanceKind.SPECTRAL_NORMALIZED) \
            and any(g.has_negative_weights for g in graphs):
        logger.warning(
            f"Negative edge weights present; using spectral-signed instead of {kind.value}"
        )
        return DistanceKind.SPECTRAL_SIGNED
    return kind


def _embed(graphs: Sequence[Graph], kind: DistanceKind, n_jobs: int) -> np.ndarray:
    """Rows whose squared Euclidean distances are the requested graph distances."""
    if kind is DistanceKind.FROBENIUS:
        n = graphs[0].n
        return np.stack([g.weights.ravel() for g in graphs]) / np.sqrt(n * (n - 1))

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            spectra = list(pool.map(lambda g: graph_spectrum(g, kind), graphs))
    else:
        spectra = [graph_spectrum(g, kind) for g in graphs]
    return np.stack(spectra)


def distance_matrix(
    graphs: Sequence[Graph],
    kind: DistanceKind = DistanceKind.SPECTRAL_NORMALIZED,
    n_jobs: Optional[int] = None,
) -> DistanceMatrix:
    """
    Distances over the m(m-1)/2 unordered pairs, mirrored into an m x m matrix.

    Spectral kinds compute each graph's spectrum once (in parallel when n_jobs > 1)
    before the pairwise pass.
    """
    if len(graphs) < 2:
        raise DimensionError(f"need at least two graphs, got {len(graphs)}")
    _check_orders(graphs)
    kind = resolve_kind(graphs, kind)
    n_jobs = n_jobs or get_settings().n_jobs

    features = _embed(graphs, kind, n_jobs)
    values = squareform(pdist(features, metric="sqeuclidean"))
    logger.info(f"Computed {len(graphs)}x{len(graphs)} {kind.value} distance matrix")
    return DistanceMatrix(values, kind)


def cross_distances(
    test_graphs: Sequence[Graph],
    train_graphs: Sequence[Graph],
    kind: DistanceKind = DistanceKind.SPECTRAL_NORMALIZED,
) -> np.ndarray:
    """Rectangular test-to-train distances for graphs outside a cached matrix."""
    _check_orders(list(test_graphs) + list(train_graphs))
    n_jobs = get_settings().n_jobs
    return cdist(
        _embed(test_graphs, kind, n_jobs),
        _embed(train_graphs, kind, n_jobs),
        metric="sqeuclidean",
    )
