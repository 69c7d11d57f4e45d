import numpy as np
import pytest

from bbgky_bose import dimer


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_state(rng, N: int) -> dimer.FockState:
    c = rng.normal(size=N + 1) + 1j * rng.normal(size=N + 1)
    return dimer.FockState(c / np.linalg.norm(c))


def random_hermitian(rng, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


def random_density(rng, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real
