import os
from pathlib import Path

import pytest

from rrsim.data import make_synthetic


def dataset_path(name: str) -> Path:
    root = Path(os.environ.get("RRSIM_DATA", Path(__file__).resolve().parents[1] / "data"))
    return root / name


def require_dataset(name: str) -> Path:
    path = dataset_path(name)
    if not path.exists():
        pytest.skip(f"dataset file {path} not present (see scripts/fetch_datasets.py)")
    return path


@pytest.fixture(scope="session")
def small_logistic():
    # Heterogeneous strongly convex problem, L_max/mu_tilde = 100.
    return make_synthetic(M=4, n=8, d=10, heterogeneity=1.0, kind="logistic", lam=1 / 198, seed=3)


@pytest.fixture(scope="session")
def small_quadratic():
    return make_synthetic(M=3, n=5, d=4, heterogeneity=0.7, kind="quadratic", seed=1)
