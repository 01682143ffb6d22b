"""Dataset directories: graph matrix files, label/time/covariate CSVs and a manifest."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.exceptions import DatasetError, DimensionError, GraphError
from app.models.schemas import DatasetManifest, DistanceKind, SimDesign
from app.services.distances import DistanceMatrix, distance_matrix, resolve_kind
from app.services.graphs import Graph

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
GRAPH_DIR = "graphs"
LABELS = "labels.csv"
TIMES = "times.csv"
COVARIATES = "covariates.csv"


@dataclass
class Dataset:
    """A loaded dataset; labels or times (or both) depending on its kind."""
    path: Path
    manifest: DatasetManifest
    graphs: list[Graph]
    labels: Optional[np.ndarray] = None
    times: Optional[np.ndarray] = None
    groups: Optional[np.ndarray] = None
    covariates: Optional[pd.DataFrame] = None

    @property
    def m(self) -> int:
        return len(self.graphs)

    @property
    def n(self) -> int:
        return self.graphs[0].n


# ============== Graph Files ==============

def read_graph(path: Path) -> Graph:
    """First line n, then n rows of n whitespace-separated reals."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DatasetError(f"cannot read graph file: {e}", str(path)) from e
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise DatasetError("empty graph file", str(path), 1)

    try:
        n = int(lines[0].strip())
    except ValueError:
        raise DatasetError(f"first line must be the node count, got {lines[0]!r}", str(path), 1)
    if len(lines) - 1 != n:
        raise DatasetError(f"expected {n} matrix rows, found {len(lines) - 1}", str(path))

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split()
        if len(fields) != n:
            raise DatasetError(f"expected {n} values, found {len(fields)}", str(path), lineno)
        try:
            rows.append([float(x) for x in fields])
        except ValueError as e:
            raise DatasetError(f"non-numeric entry: {e}", str(path), lineno) from e

    try:
        return Graph(np.asarray(rows))
    except GraphError as e:
        raise DatasetError(str(e), str(path)) from e


def write_graph(path: Path, g: Graph) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"{g.n}\n")
        np.savetxt(handle, g.weights, fmt="%.17g", delimiter=" ")
    return path


# ============== CSV Columns ==============

def _read_column(path: Path, column: str, m: int) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DatasetError(f"cannot parse CSV: {e}", str(path)) from e
    if column not in frame.columns:
        raise DatasetError(f"missing column {column!r}", str(path), 1)
    if len(frame) != m:
        raise DatasetError(f"expected {m} rows to match {m} graphs, found {len(frame)}", str(path))
    return frame


def _read_labels(path: Path, m: int) -> np.ndarray:
    frame = _read_column(path, "label", m)
    labels = pd.to_numeric(frame["label"], errors="coerce").to_numpy(dtype=float)
    bad = ~np.isin(labels, (-1.0, 1.0))
    if bad.any():
        row = int(np.argmax(bad))
        raise DatasetError(
            f"label must be -1 or +1, got {frame['label'].iloc[row]!r}", str(path), row + 2
        )
    return labels


def _read_times(path: Path, m: int) -> tuple[np.ndarray, Optional[np.ndarray]]:
    frame = _read_column(path, "time", m)
    times = pd.to_numeric(frame["time"], errors="coerce").to_numpy(dtype=float)
    bad = ~(times > 0) | ~np.isfinite(times)
    if bad.any():
        row = int(np.argmax(bad))
        raise DatasetError(
            f"survival time must be positive, got {frame['time'].iloc[row]!r}", str(path), row + 2
        )
    groups = frame["group"].to_numpy() if "group" in frame.columns else None
    return times, groups


# ============== Load / Save ==============

def load_dataset(path: Path) -> Dataset:
    """
    Load and validate a dataset directory.

    Raises:
        DatasetError: Malformed files, order mismatch, bad labels or times; the
            message names the file and, where it applies, the line.
    """
    path = Path(path)
    manifest_path = path / MANIFEST
    if not manifest_path.exists():
        raise DatasetError("dataset has no manifest", str(manifest_path))
    try:
        manifest = DatasetManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise DatasetError(f"invalid manifest: {e}", str(manifest_path)) from e

    graphs = [read_graph(path / name) for name in manifest.graph_files]
    if len(graphs) != manifest.m:
        raise DatasetError(f"manifest lists m={manifest.m} but {len(graphs)} graph files", str(manifest_path))
    for name, g in zip(manifest.graph_files, graphs):
        if g.n != graphs[0].n:
            raise DatasetError(
                f"graph order {g.n} differs from {graphs[0].n} in {manifest.graph_files[0]}",
                str(path / name),
            )

    dataset = Dataset(path=path, manifest=manifest, graphs=graphs)
    if manifest.has_labels:
        dataset.labels = _read_labels(path / LABELS, manifest.m)
    if manifest.has_times:
        dataset.times, dataset.groups = _read_times(path / TIMES, manifest.m)
    if manifest.covariate_names:
        frame = _read_column(path / COVARIATES, manifest.covariate_names[0], manifest.m)
        missing = [c for c in manifest.covariate_names if c not in frame.columns]
        if missing:
            raise DatasetError(f"missing covariate columns {missing}", str(path / COVARIATES), 1)
        dataset.covariates = frame[manifest.covariate_names].astype(float)

    logger.info(f"Loaded {manifest.kind} dataset {path}: m={dataset.m}, n={dataset.n}")
    return dataset


def save_dataset(
    path: Path,
    graphs: Sequence[Graph],
    labels: Optional[np.ndarray] = None,
    times: Optional[np.ndarray] = None,
    groups: Optional[np.ndarray] = None,
    covariates: Optional[pd.DataFrame] = None,
    design: Optional[SimDesign] = None,
    seed: Optional[int] = None,
    policies: Optional[dict[str, str]] = None,
) -> DatasetManifest:
    """Write graphs, outcome CSVs and manifest.json under `path`."""
    if not graphs:
        raise DimensionError("a dataset needs at least one graph")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    graph_files = []
    for i, g in enumerate(graphs):
        name = f"{GRAPH_DIR}/graph_{i:04d}.txt"
        write_graph(path / name, g)
        graph_files.append(name)

    index = np.arange(len(graphs))
    if labels is not None:
        pd.DataFrame({"index": index, "label": np.asarray(labels).astype(int)}).to_csv(
            path / LABELS, index=False
        )
    if times is not None:
        frame = pd.DataFrame({"index": index, "time": np.asarray(times, dtype=float)})
        if groups is not None:
            frame["group"] = np.asarray(groups)
        frame.to_csv(path / TIMES, index=False, float_format="%.17g")
    covariate_names: list[str] = []
    if covariates is not None:
        covariate_names = [c for c in covariates.columns if c != "index"]
        frame = covariates[covariate_names].copy()
        frame.insert(0, "index", index)
        frame.to_csv(path / COVARIATES, index=False, float_format="%.17g")

    manifest = DatasetManifest(
        kind="survival" if times is not None else "classification",
        m=len(graphs),
        n=graphs[0].n,
        graph_files=graph_files,
        has_labels=labels is not None,
        has_times=times is not None,
        covariate_names=covariate_names,
        design=design,
        seed=seed,
        policies=policies or {},
    )
    (path / MANIFEST).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Wrote {manifest.kind} dataset with {manifest.m} graphs to {path}")
    return manifest


# ============== Distance Cache ==============

def distances_path(dataset_dir: Path, kind: DistanceKind) -> Path:
    return Path(dataset_dir) / f"distances_{kind.value}.csv"


def cached_distances(dataset: Dataset, kind: DistanceKind, n_jobs: Optional[int] = None) -> DistanceMatrix:
    """
    Distance matrix for the dataset, read from its cache file when present.

    Unsigned spectral kinds on graphs with negative weights resolve to the signed
    Laplacian before the cache lookup.
    """
    kind = resolve_kind(dataset.graphs, kind)
    cache = distances_path(dataset.path, kind)
    if cache.exists():
        cached = DistanceMatrix.load_csv(cache)
        if cached.m == dataset.m and cached.kind is kind:
            logger.info(f"Using cached {kind.value} distances from {cache}")
            return cached
        logger.warning(f"Ignoring stale distance cache {cache}")

    D = distance_matrix(dataset.graphs, kind, n_jobs)
    D.save_csv(cache)
    return D

