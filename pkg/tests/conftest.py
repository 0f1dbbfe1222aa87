"""Shared fixtures: small seeded datasets and a minimal run configuration."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pytest

from pcsinfer.core_data import DataMatrix, standardize, write_csv
from pcsinfer.pcs_core import PcsConfig, ScreeningRule
from pcsinfer.simgen import SimConfig, simulate

ACTIVE = (0, 1)


def make_signal_data(n: int = 60, p: int = 6, seed: int = 11, noise: float = 0.5) -> DataMatrix:
    """Standardized Gaussian design with y = 3 x0 - 2 x1 + noise."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    y = 3.0 * x[:, 0] - 2.0 * x[:, 1] + noise * rng.standard_normal(n)
    return standardize(DataMatrix(x, y, tuple(f"f{j}" for j in range(p))))


@pytest.fixture
def signal_data() -> DataMatrix:
    return make_signal_data()


@pytest.fixture
def small_config() -> PcsConfig:
    return PcsConfig(
        master_seed=20240101,
        bootstrap_replicates=8,
        nlambda=20,
        screening=ScreeningRule.top_k(5),
    )


@pytest.fixture
def small_sim():
    return simulate(SimConfig.from_setting("gaussian", n=60, p_base=4, seed=7))


@pytest.fixture
def run_doc() -> Dict[str, Any]:
    return {
        "master_seed": 5,
        "target": "lasso_selected_features",
        "metric": "l2",
        "split": {"fraction": 0.5, "average_halves": True},
        "perturbations": {"bootstrap_replicates": 6, "nlambda": 15},
        "screening": {"rule": "top_k", "k": 4},
        "reporting": {"intervals": ["model_size"], "percentiles": [10, 90]},
        "data": {"path": "data.csv", "response": "y"},
    }


@pytest.fixture
def run_dir(tmp_path: Path, run_doc: Dict[str, Any]) -> Path:
    """A directory holding data.csv and config.json for the CLI."""
    write_csv(make_signal_data(), tmp_path / "data.csv")
    (tmp_path / "config.json").write_text(json.dumps(run_doc), encoding="utf-8")
    return tmp_path
