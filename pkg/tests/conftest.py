"""Shared fixtures: default parameter sets and their eigensystems."""

import pytest

from snspin.params import ground_defaults, excited_defaults, reference_field
from snspin.spinmodel import manifold_eigensystem


@pytest.fixture(scope="session")
def ground():
    return ground_defaults()


@pytest.fixture(scope="session")
def excited():
    return excited_defaults()


@pytest.fixture(scope="session")
def field():
    return reference_field()


@pytest.fixture(scope="session")
def ground_system(ground, field):
    return manifold_eigensystem(ground, field)


@pytest.fixture(scope="session")
def excited_system(excited, field):
    return manifold_eigensystem(excited, field)
