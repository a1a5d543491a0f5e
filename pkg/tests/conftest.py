import numpy as np
import pytest

import concreteness as vc

# one shared Gaussian fixture keeps the expensive exact scan to a single run
ACCEPT_SEED = 20240817


@pytest.fixture(scope="session")
def gauss10k():
    rng = np.random.default_rng(ACCEPT_SEED)
    data = rng.normal(size=(10000, 64))
    return vc.FeatureMatrix(data, tuple(f"img{i:05d}" for i in range(10000)))


@pytest.fixture(scope="session")
def gauss10k_exact(gauss10k):
    index = vc.build_index(gauss10k, vc.KnnConfig(k=50, metric="cosine", mode="exact"))
    return index.all_neighbors(threads=4)


@pytest.fixture(scope="session")
def benchmark():
    return vc.make_dataset(vc.SynthConfig(seed=13, kind="benchmark"))


@pytest.fixture(scope="session")
def linear():
    return vc.make_dataset(vc.SynthConfig(seed=5, kind="linear"))
