"""
API tests against the in-process app
"""
import pytest
from fastapi.testclient import TestClient

from main import app
from models.schemas import CertificateFile, CertificateKind


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as c:
        yield c


def test_health(client):
    response = client.get("/healthy")
    assert response.status_code == 200
    assert response.json()["success"] == "running"


def test_catalog(client):
    response = client.get("/catalog")
    assert response.status_code == 200
    names = [e["name"] for e in response.json()]
    assert len(names) == 5
    assert "cantor-preserving" in names


def test_run(client):
    body = {"system": "catalog:two-rotations", "probe": {"name": "unstable-leaf", "depth": 20}}
    response = client.post("/run", json=body)
    assert response.status_code == 200
    report = response.json()
    assert report["matched"] is True
    assert report["outcome"]["metric"] == 2


def test_run_rejects_epsilon_below_twice_delta(client):
    body = {"system": "catalog:rotation-morse-smale",
            "probe": {"name": "strict-attractor", "epsilon": 0.01, "delta": 0.01}}
    assert client.post("/run", json=body).status_code == 422


def test_run_rejects_a_malformed_body(client):
    assert client.post("/run", json={"system": "catalog:two-rotations", "probe": {"name": "nope"}}).status_code == 422


def test_catalog_run(client):
    response = client.post("/catalog/two-rotations/run", params={"probe": "unstable-leaf"})
    assert response.status_code == 200
    reports = response.json()
    assert len(reports) == 1
    assert reports[0]["outcome"]["verdict"] == "not-dense"


def test_catalog_run_without_expectations(client):
    response = client.post("/catalog/two-rotations/run", params={"probe": "bootstrap"})
    assert response.status_code == 404


def test_unknown_catalog_system(client):
    assert client.post("/catalog/three-rotations/run").status_code == 400


def test_verify_blending_certificate(client, gap_pair, blend):
    certificate = CertificateFile(kind=CertificateKind.BLENDING, system=gap_pair, certificate=blend)
    response = client.post("/verify", json=certificate.model_dump(mode="json"))
    assert response.status_code == 200
    assert response.json()["failures"] == []
