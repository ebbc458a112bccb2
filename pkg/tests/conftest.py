import numpy as np
import pytest

from resetfra.config import load_case
from resetfra.element import LoopConfig, make_element
from resetfra.lti import TransferFunction


@pytest.fixture(scope='session')
def case1():
    return load_case('case1').loop


@pytest.fixture(scope='session')
def case2():
    return load_case('case2').loop


@pytest.fixture(scope='session')
def case3():
    return load_case('case3').loop


@pytest.fixture(scope='session')
def pci_pid():
    return load_case('pp-pci-pid').loop


@pytest.fixture(scope='session')
def pci_bad():
    return load_case('pci-bad').loop


@pytest.fixture
def clegg_loop():
    """Clegg integrator on 1/(s+2), full reset."""
    return LoopConfig(make_element('clegg', {}, 0.0), TransferFunction([1], [1, 2]))


def hz(f):
    return 2 * np.pi * f
