"""Graph validation, Laplacians and spectra."""

import numpy as np
import pytest

from app.exceptions import GraphError
from app.services.graphs import (
    Graph,
    from_rows,
    laplacian,
    normalized_laplacian,
    signed_laplacian,
    spectrum,
    threshold_binarize,
)


def path_graph() -> Graph:
    return Graph(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float))


def random_weighted(n: int, rng: np.random.Generator, low: float = 0.0) -> Graph:
    W = np.triu(rng.uniform(low, 1.0, size=(n, n)), k=1)
    return Graph(W + W.T)


def test_graph_rejects_asymmetry_naming_entry():
    """Test that an asymmetric adjacency error names the offending entry."""
    W = np.zeros((3, 3))
    W[0, 2] = 1.0
    with pytest.raises(GraphError, match=r"W\[0\]\[2\]"):
        Graph(W)


def test_graph_rejects_self_loop_and_tiny_order():
    """Test the zero-diagonal and n >= 2 invariants."""
    with pytest.raises(GraphError, match="self loop"):
        Graph(np.eye(3))
    with pytest.raises(GraphError, match="at least 2"):
        Graph(np.zeros((1, 1)))
    with pytest.raises(GraphError, match="square"):
        Graph(np.zeros((2, 3)))


def test_graph_symmetrizes_within_tolerance():
    """Test asymmetry below the tolerance is accepted and removed."""
    W = np.array([[0, 1.0], [1.0 + 1e-12, 0]])
    g = Graph(W)
    assert np.array_equal(g.weights, g.weights.T)
    assert not g.weights.flags.writeable


def test_from_rows_prefixes_source_name():
    """Test from_rows names the graph in validation errors."""
    with pytest.raises(GraphError, match="^graph 3: "):
        from_rows([[0, 1], [0, 0]], name="graph 3")


def test_laplacian_examples():
    """Test D - W on empty, single-edge and path graphs."""
    assert np.array_equal(laplacian(Graph(np.zeros((3, 3)))), np.zeros((3, 3)))
    assert np.array_equal(laplacian(Graph(np.array([[0, 1.0], [1.0, 0]]))), [[1, -1], [-1, 1]])
    L = laplacian(path_graph())
    assert np.allclose(L.sum(axis=1), 0)
    assert L[1, 1] == 2


def test_laplacian_rejects_negative_weights():
    """Test unsigned Laplacians point to the signed variant."""
    g = Graph(np.array([[0, -1.0], [-1.0, 0]]))
    with pytest.raises(GraphError, match="signed_laplacian"):
        laplacian(g)
    with pytest.raises(GraphError, match="signed_laplacian"):
        normalized_laplacian(g)


def test_normalized_laplacian_examples():
    """Test the normalized Laplacian on K2, the empty graph and a star."""
    k2 = Graph(np.array([[0, 1.0], [1.0, 0]]))
    assert np.allclose(normalized_laplacian(k2), [[1, -1], [-1, 1]])
    assert np.array_equal(normalized_laplacian(Graph(np.zeros((4, 4)))), np.zeros((4, 4)))

    star = Graph(np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=float))
    assert np.allclose(spectrum(normalized_laplacian(star)).values, [0, 1, 2], atol=1e-12)


def test_normalized_laplacian_isolated_node_is_zero():
    """Test an isolated node gets an all-zero row and column."""
    W = np.zeros((3, 3))
    W[0, 1] = W[1, 0] = 2.0
    L = normalized_laplacian(Graph(W))
    assert np.all(L[2] == 0) and np.all(L[:, 2] == 0)


def test_signed_laplacian_examples():
    """Test the signed Laplacian on negative, empty and non-negative graphs."""
    g = Graph(np.array([[0, -1.0], [-1.0, 0]]))
    assert np.array_equal(signed_laplacian(g), [[1, 1], [1, 1]])
    assert np.array_equal(signed_laplacian(Graph(np.zeros((3, 3)))), np.zeros((3, 3)))

    rng = np.random.default_rng(0)
    positive = random_weighted(6, rng)
    assert np.array_equal(signed_laplacian(positive), laplacian(positive))


def test_spectrum_examples():
    """Test eigenvalues are complete and sorted."""
    assert np.allclose(spectrum(np.eye(3)).values, [1, 1, 1])
    assert np.allclose(spectrum(np.array([[1.0, -1.0], [-1.0, 1.0]])).values, [0, 2])
    assert np.array_equal(spectrum(np.zeros((4, 4))).values, np.zeros(4))
    assert len(spectrum(np.eye(5))) == 5


def test_laplacian_psd_and_spectrum_permutation_invariant():
    """Test Laplacian PSD-ness and spectra under node relabeling."""
    rng = np.random.default_rng(1)
    for _ in range(20):
        g = random_weighted(8, rng)
        values = spectrum(laplacian(g)).values
        assert values.min() >= -1e-8 * g.n
        assert abs(values[0]) < 1e-8
        assert np.all(np.diff(values) >= 0)

        permuted = g.permuted(rng.permutation(g.n))
        assert np.allclose(spectrum(laplacian(permuted)).values, values, atol=1e-8)


def test_threshold_binarize():
    """Test edges survive only where |weight| exceeds the cutoff."""
    W = np.array([[0, 0.3, -0.5], [0.3, 0, 0.9], [-0.5, 0.9, 0]])
    g = Graph(W)

    kept = threshold_binarize(g, 0.45)
    assert kept.weights[0, 1] == 0 and kept.weights[0, 2] == 1 and kept.weights[1, 2] == 1
    assert kept.is_binary

    assert threshold_binarize(g, 0.1).edge_count == 3
    assert threshold_binarize(g, 1.0).edge_count == 0


def test_threshold_binarize_two_weights():
    """Test weights {0.3, 0.5} with cutoff 0.45 keep only the 0.5 edge."""
    W = np.zeros((3, 3))
    W[0, 1] = W[1, 0] = 0.3
    W[1, 2] = W[2, 1] = 0.5
    kept = threshold_binarize(Graph(W), 0.45)
    assert kept.edge_count == 1
    assert kept.weights[1, 2] == 1
