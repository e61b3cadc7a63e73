import pytest
from fastapi.testclient import TestClient

from app.main import app

COARSE_GRID = {"x_min": -2.0, "x_max": 2.0, "y_max": 4.0, "n_eta": 2, "M": 10, "z_max": 2.0}


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as c:
        yield c


def test_root(client):
    r = client.get("/")
    assert r.status_code == 200
    assert r.json()["status"] == "online"


def test_health(client):
    r = client.get("/api/v1/health")
    assert r.status_code == 200
    assert r.json()["status"] == "ok"


def test_solve_coarse_grid(client):
    r = client.post("/api/v1/solve", json={"grid": COARSE_GRID, "states": [[0.0, 2.0], [1.0, 3.0]]})
    assert r.status_code == 200
    body = r.json()
    assert len(body["values"]) == 2
    v0, v1 = body["values"][0][2], body["values"][1][2]
    assert 0 < v0 < 10.0
    assert v1 >= 1.0
    assert body["outer_iterations"] >= 1
    assert all(row["x_star"] >= 0 and row["kappa_star"] <= 0 for row in body["barriers"])


def test_solve_rejects_bad_grid(client):
    grid = dict(COARSE_GRID, y_max=2.05)
    r = client.post("/api/v1/solve", json={"grid": grid})
    assert r.status_code == 400


def test_solve_schema_validation(client):
    r = client.post("/api/v1/solve", json={"model": {"delta": 0.5}})
    assert r.status_code == 422


def test_evaluate_coarse_grid(client):
    payload = {
        "grid": COARSE_GRID,
        "eval": {"n_paths": 8, "states": [[0.5, 2.0]], "h": 0.1, "horizon_T": 1.0, "seed": 5},
    }
    r = client.post("/api/v1/evaluate", json=payload)
    assert r.status_code == 200
    row = r.json()["rows"][0]
    assert row["policy_source"] == "pde_barriers"
    assert row["mc_ci95"][0] <= row["mc_mean"] <= row["mc_ci95"][1]
    assert row["pde_value"] is not None
