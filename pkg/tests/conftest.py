"""Shared fixtures."""

import numpy as np
import pytest

from dyadic_bellman import StepFunction, build_uniform, linearize


@pytest.fixture
def binary2():
    """Complete binary tree of depth 2: root 0, children 1 and 2, leaves 3..6."""
    return build_uniform(2, 2)


@pytest.fixture
def worked_phi(binary2):
    """(4, 0, 0, 0) on the leaves of binary2."""
    return StepFunction(binary2, [4.0, 0.0, 0.0, 0.0])


@pytest.fixture
def worked_lin(worked_phi):
    return linearize(worked_phi, 2.0)


@pytest.fixture
def two_valued_phi(binary2):
    """(3, 1, 8, 8): S_phi = {0, 2} with one partial leaf in the root's block."""
    return StepFunction(binary2, [3.0, 1.0, 8.0, 8.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
