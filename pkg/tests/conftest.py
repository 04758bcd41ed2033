import numpy as np
import pytest

from memflow.kernels import parse_kernel

TEST_KERNELS = {
    "one": "1",
    "exp": "exp(-1*t)",
    "sin": "sin(1*t)",
    "texp": "t*exp(-0.5*t)",
}


@pytest.fixture(scope="session")
def kernels4():
    return {name: parse_kernel(s) for name, s in TEST_KERNELS.items()}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
