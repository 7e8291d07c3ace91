"""Shared grids and random instances"""
import numpy as np
import pytest

from SublinearDirichlet.domain import build_domain, shape_from_name
from SublinearDirichlet.green import BoundaryData, build_green
from SublinearDirichlet.measure import GridMeasure


@pytest.fixture(scope="session")
def square8():
    """unit square, h = 1/8 (49 unknowns)"""
    return build_domain(shape_from_name("square"), 1 / 8)


@pytest.fixture(scope="session")
def square16():
    """unit square, h = 1/16 (225 unknowns)"""
    return build_domain(shape_from_name("square"), 1 / 16)


@pytest.fixture(scope="session")
def disk16():
    """unit disk, h = 1/16"""
    return build_domain(shape_from_name("disk"), 1 / 16)


@pytest.fixture(scope="session")
def green8(square8):
    return build_green(square8)


@pytest.fixture(scope="session")
def green16(square16):
    return build_green(square16)


@pytest.fixture(scope="session")
def green_disk16(disk16):
    return build_green(disk16)


def random_measure(domain, rng, sparsity=0.3, scale=1.0):
    """Nonnegative density masses with some empty nodes"""
    density = rng.random(domain.n_interior) * scale
    density[rng.random(domain.n_interior) < sparsity] = 0.0
    return GridMeasure(domain, density * domain.cell_volume)


def random_data(domain, rng, scale=1.0):
    """Nonnegative boundary data"""
    return BoundaryData(domain, rng.random(domain.n_boundary) * scale)
