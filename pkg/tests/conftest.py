import pytest

from rooftemp.radiometry import LWIR_DEVICE, LWIR_IMAGER, build_planck_table
from rooftemp.spectra import reference_table


@pytest.fixture(scope="session")
def imager_table():
    return build_planck_table(LWIR_IMAGER)


@pytest.fixture(scope="session")
def device_table():
    return build_planck_table(LWIR_DEVICE)


@pytest.fixture(scope="session")
def materials():
    return reference_table()
