import numpy as np
import pytest

from kgbirkhoff import SphereParams, build_sphere_spectrum


@pytest.fixture(scope="session")
def spec4():
    return build_sphere_spectrum(SphereParams(d=1, m=1.0), 4)


@pytest.fixture(scope="session")
def spec6():
    return build_sphere_spectrum(SphereParams(d=1, m=1.0), 6)


@pytest.fixture(scope="session")
def spec8():
    return build_sphere_spectrum(SphereParams(d=1, m=1.0), 8)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
