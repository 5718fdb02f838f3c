import pytest

from oracles import SQRT2
from orbitlab.potential import depth1_potential
from orbitlab.sft_core import full_shift, golden_mean


@pytest.fixture
def full2():
    return full_shift(2)


@pytest.fixture
def golden():
    return golden_mean()


@pytest.fixture
def nonlattice(full2):
    return depth1_potential(full2, [1.0, SQRT2], "nonlattice")

