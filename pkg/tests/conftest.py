import numpy as np
import pytest

from vpwm import FrameCodec, generate_periods, normalize_template

FS = 24000.0


@pytest.fixture(scope="session")
def fs():
    return FS


@pytest.fixture(scope="session")
def codec():
    return FrameCodec()


@pytest.fixture(scope="session")
def symbol():
    return generate_periods(42, 1.0)


@pytest.fixture(scope="session")
def template(symbol):
    return normalize_template(symbol, FS)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
