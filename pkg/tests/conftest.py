"""Shared builders for the test suite.

Everything here is deliberately small: a grid on the unit interval, the
assembled constant-kernel operator, and the dipped-weight preset used
across the continuation and regularization tests.
"""

import numpy as np
import pytest

from dispersal import (
    Domain,
    KernelSpec,
    WeightSpec,
    assemble,
    build_grid,
    principal_eigenpair,
)

UNIT = Domain((0.0,), (1.0,))


def unit_grid(rule="trapezoid", resolution=65):
    return build_grid(UNIT, rule, resolution)


def const_weight(p=1.0, value=1.0):
    return WeightSpec.constant(value, p=p)


def dip_weight(p=1.0):
    # 3 - |x - 1/2|^0.4, independent of y
    return WeightSpec.polynomial_dip(
        h=(1.0,), g=(0.0,), points=(0.5,), exponents=(0.4,), level=3.0, p=p
    )


@pytest.fixture
def grid65():
    return unit_grid()


@pytest.fixture
def const_op(grid65):
    return assemble(KernelSpec.constant(1.0), grid65)


@pytest.fixture
def const_eigen(const_op):
    return principal_eigenpair(const_op)


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)
