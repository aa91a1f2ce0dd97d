import numpy as np
import pytest

from intentsim import datasetgen, transport


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """Ten-image labeled corpus shared across the suite."""
    path = tmp_path_factory.mktemp("corpus")
    datasetgen.make_dataset(str(path), n_images=10, size=160, seed=7)
    return str(path)


@pytest.fixture(scope="session")
def corpus(corpus_dir):
    return transport.load_dataset(corpus_dir)


@pytest.fixture(scope="session")
def textured_image():
    rng = np.random.default_rng(3)
    return datasetgen.make_image([1, 4], 224, rng)
