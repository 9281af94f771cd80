# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

import logging
import sys

import numpy as np
import pytest

from async_sgld.potentials import Potential, QuadraticSpec, make_quadratic

logger = logging.getLogger(__name__)


def pytest_collection_modifyitems(items):
    # every test here runs at acceptance scale
    for item in items:
        item.add_marker(pytest.mark.slow)


@pytest.fixture(scope="module")
def gaussian2() -> Potential:
    """A = diag(1, 4), b = (1, 1); the target at sigma is N(A^-1 b, sigma A^-1)."""
    return make_quadratic(QuadraticSpec(A=np.diag([1.0, 4.0]), b=np.array([1.0, 1.0])))


@pytest.fixture(scope="module")
def isotropic4() -> Potential:
    return make_quadratic(QuadraticSpec(A=np.eye(4), b=np.zeros(4)))


@pytest.fixture
def fast_switching():
    previous = sys.getswitchinterval()
    sys.setswitchinterval(1e-5)
    yield
    sys.setswitchinterval(previous)
