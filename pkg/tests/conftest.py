import numpy as np
import pytest

from drsaddle.exactsolve import dense_materialize
from drsaddle.linops import normal_apply


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_T(shape, c):
    h, w = shape
    return dense_materialize(lambda u: normal_apply(u, c), w, h)


def dense_grad(shape):
    from drsaddle.linops import grad
    h, w = shape
    return dense_materialize(grad, w, h)
