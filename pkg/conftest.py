import numpy as np
import pytest

from dynamics import GOLDEN_THETA, MinimalMap
from matalg import MatrixFunction, TrigPolynomial


@pytest.fixture
def golden():
    return MinimalMap.rotation(GOLDEN_THETA)


@pytest.fixture
def rotation03():
    return MinimalMap.rotation(0.3)


@pytest.fixture
def furstenberg():
    return MinimalMap.furstenberg(GOLDEN_THETA, [1])


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def z():
    return MatrixFunction.scalar(TrigPolynomial.coordinate(1))


@pytest.fixture
def golden_tests():
    """{z, z², 1}"""
    return [
        MatrixFunction.scalar(TrigPolynomial.coordinate(1)),
        MatrixFunction.scalar(TrigPolynomial.coordinate(1, power=2)),
        MatrixFunction.scalar(TrigPolynomial.constant(1, 1.0)),
    ]
