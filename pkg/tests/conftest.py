import numpy as np
import pytest

from svytransport.data import CombinedDataset
from svytransport.datasets import load_toy


@pytest.fixture(scope="session")
def toy_dataset() -> CombinedDataset:
    return load_toy()


def make_dataset(
    rng: np.random.Generator,
    n_trial: int = 40,
    n_survey: int = 120,
    p: int = 2,
    weight_spread: float = 1.0,
) -> CombinedDataset:
    """Random well-behaved dataset: covariates shift between samples so the
    membership fit has signal but never separates."""
    names = [f"x{j}" for j in range(p)]
    X_trial = rng.normal(0.0, 1.0, (n_trial, p))
    X_survey = rng.normal(0.4, 1.0, (n_survey, p))
    a = (rng.random(n_trial) < 0.5).astype(float)
    if a.sum() == 0:
        a[0] = 1.0
    elif a.sum() == n_trial:
        a[0] = 0.0
    y = rng.normal(1.0 + a, 1.0)
    d = np.exp(rng.normal(1.0, weight_spread, n_survey))
    return CombinedDataset.from_arrays(names, X_trial, a, y, X_survey, d)
