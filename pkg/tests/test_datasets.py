"""Dataset directories and the distance cache."""

import json

import numpy as np
import pandas as pd
import pytest

from app.exceptions import DatasetError
from app.models.schemas import DistanceKind, SimDesign
from app.services.datasets import (
    cached_distances,
    distances_path,
    load_dataset,
    read_graph,
    save_dataset,
)
from app.services.graphs import Graph


def weighted_graphs(m: int, n: int, seed: int = 90, signed: bool = False) -> list[Graph]:
    rng = np.random.default_rng(seed)
    low = -1.0 if signed else 0.0
    graphs = []
    for _ in range(m):
        W = np.triu(rng.uniform(low, 1.0, size=(n, n)), k=1)
        graphs.append(Graph(W + W.T))
    return graphs


def test_classification_round_trip(tmp_path):
    """Test graphs reload bit for bit with labels and the manifest."""
    graphs = weighted_graphs(4, 5)
    design = SimDesign(m=4, n=5, seed=9)
    manifest = save_dataset(tmp_path, graphs, labels=np.array([-1, -1, 1, 1]), design=design, seed=9)
    assert manifest.kind == "classification"

    data = load_dataset(tmp_path)
    assert data.m == 4 and data.n == 5
    assert all(np.array_equal(a.weights, b.weights) for a, b in zip(graphs, data.graphs))
    assert list(data.labels) == [-1, -1, 1, 1]
    assert data.manifest.design == design
    assert data.times is None


def test_survival_round_trip_with_covariates(tmp_path):
    """Test times, groups and covariate columns survive a save and load."""
    graphs = weighted_graphs(3, 4)
    times = np.array([0.5, 1.25, 3.0 + 1e-12])
    covariates = pd.DataFrame({"age": [40.0, 51.5, 63.0], "sex": [0.0, 1.0, 1.0]})
    save_dataset(tmp_path, graphs, times=times, groups=np.array([0, 1, 1]), covariates=covariates)

    data = load_dataset(tmp_path)
    assert data.manifest.kind == "survival"
    assert np.array_equal(data.times, times)
    assert list(data.groups) == [0, 1, 1]
    assert list(data.covariates.columns) == ["age", "sex"]
    assert np.array_equal(data.covariates["age"].to_numpy(), covariates["age"].to_numpy())


def test_corrupted_symmetry_names_entry(tmp_path):
    """Test an asymmetric matrix fails with the file and the offending entry."""
    save_dataset(tmp_path, weighted_graphs(2, 3), labels=np.array([-1, 1]))
    target = tmp_path / "graphs" / "graph_0001.txt"
    target.write_text("3\n0 1 0\n0 0 0\n0 0 0\n")
    with pytest.raises(DatasetError, match=r"graph_0001\.txt: .*W\[0\]\[1\]"):
        load_dataset(tmp_path)


def test_graph_file_errors_carry_line_numbers(tmp_path):
    """Test malformed rows report their line."""
    path = tmp_path / "g.txt"
    path.write_text("2\n0 1\n1 x\n")
    with pytest.raises(DatasetError, match=r"g\.txt:3: non-numeric"):
        read_graph(path)

    path.write_text("3\n0 1 0\n1 0\n0 0 0\n")
    with pytest.raises(DatasetError, match=r"g\.txt:3: expected 3 values"):
        read_graph(path)

    path.write_text("two\n")
    with pytest.raises(DatasetError, match=r"g\.txt:1:"):
        read_graph(path)


def test_missing_label_row(tmp_path):
    """Test a labels file shorter than the graph list is rejected."""
    save_dataset(tmp_path, weighted_graphs(4, 3), labels=np.array([-1, -1, 1, 1]))
    (tmp_path / "labels.csv").write_text("index,label\n0,-1\n1,-1\n2,1\n")
    with pytest.raises(DatasetError, match="expected 4 rows"):
        load_dataset(tmp_path)


def test_bad_label_and_time_lines(tmp_path):
    """Test invalid labels and non-positive times name the CSV line."""
    labeled = tmp_path / "labeled"
    save_dataset(labeled, weighted_graphs(3, 3), labels=np.array([-1, 1, 1]))
    (labeled / "labels.csv").write_text("index,label\n0,-1\n1,2\n2,1\n")
    with pytest.raises(DatasetError, match=r"labels\.csv:3: label must be"):
        load_dataset(labeled)

    timed = tmp_path / "timed"
    save_dataset(timed, weighted_graphs(3, 3), times=np.array([1.0, 2.0, 3.0]))
    (timed / "times.csv").write_text("index,time\n0,1.0\n1,2.0\n2,-3.0\n")
    with pytest.raises(DatasetError, match=r"times\.csv:4: survival time"):
        load_dataset(timed)


def test_missing_manifest(tmp_path):
    """Test a directory without manifest.json is not a dataset."""
    with pytest.raises(DatasetError, match="manifest"):
        load_dataset(tmp_path)


def test_distance_cache_written_and_reused(tmp_path):
    """Test the first call writes the cache and later calls read it back unchanged."""
    save_dataset(tmp_path, weighted_graphs(4, 5), labels=np.array([-1, -1, 1, 1]))
    data = load_dataset(tmp_path)

    first = cached_distances(data, DistanceKind.FROBENIUS)
    cache = distances_path(tmp_path, DistanceKind.FROBENIUS)
    assert cache.exists()
    stamp = cache.stat().st_mtime_ns

    second = cached_distances(data, DistanceKind.FROBENIUS)
    assert np.array_equal(first.values, second.values)
    assert cache.stat().st_mtime_ns == stamp


def test_distance_cache_resolves_signed_kind(tmp_path):
    """Test negative weights store the cache under the signed Laplacian kind."""
    save_dataset(tmp_path, weighted_graphs(3, 4, signed=True), labels=np.array([-1, 1, 1]))
    D = cached_distances(load_dataset(tmp_path), DistanceKind.SPECTRAL_NORMALIZED)
    assert D.kind is DistanceKind.SPECTRAL_SIGNED
    assert distances_path(tmp_path, DistanceKind.SPECTRAL_SIGNED).exists()
    assert not distances_path(tmp_path, DistanceKind.SPECTRAL_NORMALIZED).exists()


def test_manifest_records_policies(tmp_path):
    """Test simulation policies are written to manifest.json."""
    save_dataset(tmp_path, weighted_graphs(2, 3), labels=np.array([-1, 1]),
                 policies={"lattice_radius": "2"})
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["policies"] == {"lattice_radius": "2"}
    assert manifest["graph_files"] == ["graphs/graph_0000.txt", "graphs/graph_0001.txt"]
