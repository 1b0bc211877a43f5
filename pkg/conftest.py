import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def complex_gaussian(rng, rows, cols):
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)


@pytest.fixture
def random_channel(rng):
    """Factory for i.i.d. CN(0, 1) composite channels of shape (rows, cols)"""
    def draw(rows, cols):
        return complex_gaussian(rng, rows, cols)
    return draw
