import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hermitian(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


def random_upper(rng, k, min_im=0.1):
    """Random k×k matrix with Im ≥ min_im·I."""
    h = random_hermitian(rng, k)
    b = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    pos = b @ b.conj().T / k + min_im * np.eye(k)
    return h + 1j * pos
