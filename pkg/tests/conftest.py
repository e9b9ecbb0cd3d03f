from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from delayhet.heterogeneity import rescale_to_assumption

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_B(rng: np.random.Generator, m: int, scale: float = 1.0) -> np.ndarray:
    """Symmetric, non-negative, zero-diagonal matrix."""
    U = rng.uniform(0, scale, size=(m, m))
    B = np.triu(U, 1)
    return B + B.T


def random_instance(rng: np.random.Generator, m: int, assumption: str = "set"):
    """Sorted delays and a B already rescaled into the requested assumption."""
    tau = np.sort(rng.uniform(1.0, 100.0, size=m))
    B = rescale_to_assumption(random_B(rng, m, 2.0), 0.05, assumption)
    return tau, B


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
