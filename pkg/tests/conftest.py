import numpy as np
import pytest

from verigeo.dataset import DesignSpec, SpatialDataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def linear_dataset(rng, n=60, beta=(1.0, 0.5), noise=0.1, side=10.0):
    coords = rng.uniform(0.0, side, size=(n, 2))
    design = DesignSpec(("intercept", "coord_x"))
    X = design.build(coords)
    z = X @ np.asarray(beta) + noise * rng.standard_normal(n)
    return SpatialDataset(coords, z, X, design.terms, design)
