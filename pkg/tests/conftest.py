import numpy as np
import pytest

from ctmceq.twostate import builtin


@pytest.fixture(scope="session")
def eg41():
    model, manifest = builtin("eg41")
    return model, manifest


@pytest.fixture(scope="session")
def eg41_spec(eg41):
    return eg41[0].to_model_spec()


@pytest.fixture(scope="session")
def eg42_spec():
    return builtin("eg42")[0].to_model_spec()


@pytest.fixture(scope="session")
def eg43():
    model, manifest = builtin("eg43")
    return model, manifest


@pytest.fixture(scope="session")
def eg43_spec(eg43):
    return eg43[0].to_model_spec()


@pytest.fixture(scope="session")
def eg51_spec():
    return builtin("eg51", k=1.0)[0].to_model_spec()


@pytest.fixture()
def rng():
    return np.random.default_rng(20250810)
