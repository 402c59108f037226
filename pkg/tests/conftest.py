"""Shared fixtures and small problem builders."""

import numpy as np
import pytest

from higlasso.design import GroupedDesign, RawDataset, preprocess


def random_raw(n: int, s: int, seed: int) -> RawDataset:
    """Gaussian covariates and response with a mild planted signal."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, s))
    y = X[:, 0] - X[:, min(1, s - 1)] + 0.5 * rng.standard_normal(n)
    return RawDataset(y=y, X=X, covariate_names=[f"x{j + 1}" for j in range(s)])


def random_design(n: int, s: int, degree: int, seed: int) -> GroupedDesign:
    return preprocess(random_raw(n, s, seed), degree)


@pytest.fixture
def small_design() -> GroupedDesign:
    """n = 50, S = 4 groups of size 2 (degree-2 basis)."""
    return random_design(50, 4, 2, seed=11)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(202)
