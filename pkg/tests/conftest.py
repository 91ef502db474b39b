import pytest

from zdx import driver as drv


@pytest.fixture(scope="session")
def lazy1():
    return drv.lazy_1d()


@pytest.fixture(scope="session")
def lazy2():
    return drv.lazy_2d()


@pytest.fixture(scope="session")
def markov3():
    return drv.markov_3state()
