import numpy as np
import pytest

from filmhom import EnergyDensity, Profile


@pytest.fixture
def product2():
    return Profile.builtin("sin2-product", dim=2)


@pytest.fixture
def stripe2():
    return Profile.builtin("sin2-stripe", dim=2)


@pytest.fixture
def stripe1():
    return Profile.builtin("sin2-stripe", dim=1)


@pytest.fixture
def checker2():
    return Profile.builtin("checkerboard", dim=2)


@pytest.fixture
def flat2():
    return Profile.constant(2)


@pytest.fixture
def W2():
    return EnergyDensity.p_norm_power(2.0, 1, 2)


@pytest.fixture
def W3():
    return EnergyDensity.p_norm_power(2.0, 1, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


def stripe_mask(n, lo=0.25, hi=0.75):
    """Occupied iff the first coordinate's cell center lies in (lo, hi)."""
    centers = (np.arange(n) + 0.5) / n
    band = (centers > lo) & (centers < hi)
    return band[:, None] & np.ones(n, bool)[None, :]
