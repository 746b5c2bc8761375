import numpy as np
import pytest

from dean.data import make_synthetic
from dean.ensemble import EnsembleConfig, train_ensemble
from dean.nn import TrainConfig


def small_config(n_submodels=4, master_seed=9, threads=2, **tconfig_kw):
    kw = dict(epochs=6, patience=6, learning_rate=0.01, batch_size=64, seed=0)
    kw.update(tconfig_kw)
    return EnsembleConfig(n_submodels=n_submodels, bag_size=200,
                          hidden=(12, 12), power=9,
                          tconfig=TrainConfig(**kw),
                          master_seed=master_seed, threads=threads)


@pytest.fixture(scope="session")
def blob_data():
    return make_synthetic("gauss-blob", 240, 40, 4, seed=21)


@pytest.fixture(scope="session")
def small_ensemble(blob_data):
    return train_ensemble(blob_data, small_config())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
