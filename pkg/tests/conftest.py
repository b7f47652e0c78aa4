import numpy as np
import pytest

from liftmix import Dataset, ModelSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_models(K=3, dim=1):
    """One model of each kind with non-uniform alpha."""
    alpha = np.linspace(0.5, 2.0, K)
    return {
        "prior": ModelSpec.prior_only(alpha),
        "gauss": ModelSpec.gaussian(alpha, theta0=0.3, sigma2=0.7, sigma02=1.9, dim=dim),
        "poisson": ModelSpec.poisson(alpha, 2.0, 0.5),
    }


def data_for(model, n, seed=0):
    rng = np.random.default_rng(seed)
    if model.kind.name == "PRIOR_ONLY":
        return Dataset.empty(n)
    if model.kind.name == "GAUSSIAN_ISO":
        return Dataset(rng.normal(0.0, 1.5, size=(n, model.dim)))
    return Dataset(rng.poisson(3.0, size=(n, 1)).astype(float))
