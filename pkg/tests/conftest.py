import pytest

from clobs.acceptance import ReferenceRuns


@pytest.fixture(scope="session")
def runs():
    """Shared cache of the expensive reference simulations."""
    return ReferenceRuns()


@pytest.fixture(scope="session")
def nf_run(runs):
    """Noise-free preset, RK4 integrator, full trace kept."""
    return runs.noise_free()


@pytest.fixture(scope="session")
def euler_run(runs):
    """Noise-free preset on the forward-Euler integrator (dual-form fixture)."""
    return runs.noise_free_euler()
