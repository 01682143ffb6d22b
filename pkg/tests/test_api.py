"""Basic API tests."""

import pytest
from fastapi.testclient import TestClient

from app.main import app


@pytest.fixture
def client():
    """Create test client."""
    return TestClient(app)


def test_root_endpoint(client):
    """Test root endpoint returns API info."""
    response = client.get("/")
    assert response.status_code == 200
    data = response.json()
    assert data["name"] == "NetGP API"
    assert data["version"] == "1.0.0"


def test_health_endpoint(client):
    """Test health endpoint returns status."""
    response = client.get("/health")
    assert response.status_code == 200
    data = response.json()
    assert data["status"] == "healthy"
    assert "numpy_version" in data
    assert "scipy_version" in data
    assert "networkx_version" in data
    assert data["n_jobs"] >= 1


def test_distances_endpoint(client):
    """Test posted graphs return a symmetric distance matrix."""
    k2 = [[0, 1], [1, 0]]
    empty = [[0, 0], [0, 0]]
    response = client.post("/distances", json={"graphs": [k2, empty], "kind": "spectral-laplacian"})
    assert response.status_code == 200
    data = response.json()
    assert data["m"] == 2
    assert data["kind"] == "spectral-laplacian"
    assert data["distances"][0][1] == pytest.approx(4.0)
    assert data["distances"][1][0] == data["distances"][0][1]


def test_distances_signed_fallback(client):
    """Test negative weights report the signed kind actually used."""
    negative = [[0, -1], [-1, 0]]
    response = client.post("/distances", json={"graphs": [negative, negative]})
    assert response.status_code == 200
    assert response.json()["kind"] == "spectral-signed"


def test_distances_invalid_graph(client):
    """Test asymmetric or ragged graphs return 400 naming the graph."""
    asymmetric = [[0, 1], [0, 0]]
    response = client.post("/distances", json={"graphs": [[[0, 1], [1, 0]], asymmetric]})
    assert response.status_code == 400
    assert "graph 1" in response.json()["detail"]

    ragged = [[0, 1, 0], [1, 0]]
    response = client.post("/distances", json={"graphs": [[[0, 1], [1, 0]], ragged]})
    assert response.status_code == 400


def test_distances_order_mismatch(client):
    """Test graphs of different orders return 400."""
    response = client.post(
        "/distances",
        json={"graphs": [[[0, 1], [1, 0]], [[0, 1, 0], [1, 0, 0], [0, 0, 0]]], "kind": "frobenius"}
    )
    assert response.status_code == 400


def test_distances_validation(client):
    """Test distances endpoint validates input."""
    # A single graph has no pairs
    response = client.post("/distances", json={"graphs": [[[0, 1], [1, 0]]]})
    assert response.status_code == 422


def test_experiment_unknown_key(client, tmp_path):
    """Test unknown configuration keys are rejected."""
    response = client.post("/experiments/simulate", json={"out": str(tmp_path), "nonsense": 1})
    assert response.status_code == 422


def test_experiment_missing_dataset(client, tmp_path):
    """Test read tasks need an existing dataset."""
    response = client.post("/experiments/classify", json={"dataset": str(tmp_path / "missing")})
    assert response.status_code == 422


def test_experiment_unknown_task(client):
    """Test unknown task names are rejected by path validation."""
    response = client.post("/experiments/train", json={})
    assert response.status_code == 422


def test_experiment_simulate_and_distances(client, tmp_path):
    """Test simulate then distances through the API."""
    data = tmp_path / "data"
    response = client.post(
        "/experiments/simulate",
        json={"out": str(data), "model": "er", "m": 6, "n": 6, "seed": 2}
    )
    assert response.status_code == 200
    assert response.json()["summary"]["m"] == 6
    assert (data / "manifest.json").exists()

    response = client.post("/experiments/distances", json={"dataset": str(data), "kernel": "gp-f"})
    assert response.status_code == 200
    assert response.json()["summary"]["kind"] == "frobenius"


def test_experiment_ergm_rejected(client, tmp_path):
    """Test the refused graph model returns 400."""
    response = client.post(
        "/experiments/simulate",
        json={"out": str(tmp_path), "model": "ergm", "m": 4, "n": 6}
    )
    assert response.status_code == 400
    assert "ERGM" in response.json()["detail"]
