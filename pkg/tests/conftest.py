import numpy as np
import pytest

from jafar.config import MCMCSettings, ModelConfig, RankBounds
from jafar.data import MultiviewDataset, standardize
from jafar.rng import RngStream


def tiny_config(**overrides):
    base = dict(
        ranks=RankBounds(K_max=2, K_m_max=(1,)),
        mcmc=MCMCSettings(T_mcmc=30, T_burnin=10, T_thin=2, seed=3, progress_every=10),
    )
    base.update(overrides)
    return ModelConfig(**base).validate()


def tiny_dataset(seed=0, n=6, p=(3, 4), response=True):
    gen = np.random.default_rng(seed)
    eta = gen.standard_normal((n, 2))
    views = []
    for p_m in p:
        lam = gen.standard_normal((p_m, 2))
        views.append(eta @ lam.T + 0.5 * gen.standard_normal((n, p_m)))
    y = eta @ np.array([1.0, -0.5]) + 0.3 * gen.standard_normal(n) if response else None
    return MultiviewDataset(
        views=tuple(views),
        masks=tuple(np.ones_like(x, dtype=bool) for x in views),
        response=y,
    )


@pytest.fixture
def config():
    return tiny_config()


@pytest.fixture
def dataset():
    return tiny_dataset()


@pytest.fixture
def standardized(dataset):
    return standardize(dataset)[0]


@pytest.fixture
def rng():
    return RngStream(11, ("test",))
