"""Shared fixtures for the laboratory test-suite."""
import pytest

from .factories import builtin_weight, curved_surface, flat_surface, unit_weight


@pytest.fixture
def flat32():
    return flat_surface(32)


@pytest.fixture
def flat64():
    return flat_surface(64)


@pytest.fixture
def curved64():
    return curved_surface(64, seed=3)


@pytest.fixture
def half_cos64(flat64):
    return builtin_weight(flat64)


@pytest.fixture
def unit_weight64(flat64):
    return unit_weight(flat64)
