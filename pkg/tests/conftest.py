import json

import numpy as np
import pytest

from app.hjb_solver import build_grid, howard_solve
from app.schemas import GridSpec, ModelParams, TrainConfig


@pytest.fixture
def params() -> ModelParams:
    return ModelParams()


@pytest.fixture
def quiet_params() -> ModelParams:
    """Sin siniestros en la práctica (b diminuto, sin excitación)."""
    return ModelParams(b=1e-9, eta=0.0)


@pytest.fixture
def coarse_spec() -> GridSpec:
    return GridSpec(x_min=-2.0, x_max=2.0, y_max=4.0, n_eta=2, M=10, z_max=2.0)


@pytest.fixture
def coarse_grid(coarse_spec, params):
    return build_grid(coarse_spec, params)


@pytest.fixture(scope="session")
def coarse_solution():
    p = ModelParams()
    g = build_grid(GridSpec(x_min=-2.0, x_max=2.0, y_max=4.0, n_eta=2, M=10, z_max=2.0), p)
    return g, p, howard_solve(g, p)


@pytest.fixture
def small_train() -> TrainConfig:
    return TrainConfig(h=0.1, horizon_T=1.0, batch_size=8, epochs=2, hidden=(8, 8), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def coarse_config_file(tmp_path):
    """JSON de configuración pequeño para la CLI y la API."""
    cfg = {
        "model": {"a": 2.0, "b": 2.0, "eta": 0.4, "rho": 0.1, "c": 1.0, "delta": 1.8,
                  "claim": {"kind": "exponential", "beta": 3.0}},
        "grid": {"x_min": -2.0, "x_max": 2.0, "y_max": 4.0, "n_eta": 2, "M": 10, "z_max": 2.0},
        "train": {"h": 0.1, "horizon_T": 1.0, "batch_size": 8, "epochs": 1, "hidden": [8], "seed": 1},
        "eval": {"n_paths": 16, "states": [[0.5, 2.0], [1.0, 3.0]], "h": 0.1, "horizon_T": 2.0, "seed": 7},
        "output_dir": str(tmp_path / "out"),
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path
