import pytest

from twentyq.channel import BinarySymmetricChannel, HFunction


def bsc(q):
    return BinarySymmetricChannel(HFunction.constant(q))


@pytest.fixture
def affine_channel():
    return BinarySymmetricChannel(HFunction.affine(0.1, 0.3))
