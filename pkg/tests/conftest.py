import numpy as np
import pytest

from saccadet.dataset import GeneratorConfig, generate


@pytest.fixture(scope="session")
def small_config():
    return GeneratorConfig(images=24, regions_per_image=(14, 18), seed=7)


@pytest.fixture(scope="session")
def small_dataset(small_config):
    return generate(small_config)


@pytest.fixture(scope="session")
def default_dataset():
    return generate(GeneratorConfig(seed=0))


def rng_for(*key):
    return np.random.default_rng(key)
