# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

import logging
import sys

import numpy as np
import pytest

from async_sgld.potentials import Potential, QuadraticSpec, make_quadratic

logger = logging.getLogger(__name__)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def quadratic() -> Potential:
    """U(x) = x'Ax/2 - b'x with A = diag(1, 4), mode (1, 0.25)."""
    return make_quadratic(QuadraticSpec(A=np.diag([1.0, 4.0]), b=np.array([1.0, 1.0])))


@pytest.fixture
def quadratic4() -> Potential:
    return make_quadratic(QuadraticSpec(A=0.3 * np.eye(4), b=np.zeros(4)))


@pytest.fixture
def fast_switching():
    """Switch threads far more often than the interpreter default to force interleavings."""
    previous = sys.getswitchinterval()
    sys.setswitchinterval(1e-5)
    yield
    sys.setswitchinterval(previous)


@pytest.fixture
def run_dir(tmp_path):
    out = tmp_path / "run"
    logger.debug("run artifacts go to %s", out)
    return out
