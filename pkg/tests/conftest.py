import pytest
from hypothesis import HealthCheck, settings

from optomech.model import reference_params, threshold_amplitude

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def pstar():
    return reference_params()


@pytest.fixture(scope="session")
def amp_th(pstar):
    return threshold_amplitude(pstar)
