import numpy as np
import pytest

from loopkahler.kahler import make_model
from loopkahler.loops import LoopGrid


@pytest.fixture
def rng():
    return np.random.default_rng(20260417)


@pytest.fixture(params=["flat-cn", "fubini-study-p1", "fubini-study-pn", "perturbed-hermitian"])
def any_model(request):
    dim = {"flat-cn": 2, "fubini-study-pn": 4}.get(request.param)
    return make_model(request.param, dim)


@pytest.fixture(params=["flat-cn", "fubini-study-p1", "fubini-study-pn"])
def kahler_model(request):
    dim = {"flat-cn": 2, "fubini-study-pn": 3}.get(request.param)
    return make_model(request.param, dim)


@pytest.fixture
def p1():
    return make_model("fubini-study-p1")


@pytest.fixture
def perturbed():
    return make_model("perturbed-hermitian")


@pytest.fixture
def grid64():
    return LoopGrid(64)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
