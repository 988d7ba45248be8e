import numpy as np
import pytest

from noidkit.config import Settings
from noidkit.core.weierstrass import jorge_meeks


@pytest.fixture
def settings():
    """Settings with a small truncation for fast kernels."""
    return Settings(truncation=4, rho=2.0, log_config=None)


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(20240607)


@pytest.fixture
def trinoid(settings):
    """Jorge-Meeks trinoid parameters, constant in lambda."""
    return jorge_meeks(3, 1.0, settings.truncation, settings.rho, settings)
