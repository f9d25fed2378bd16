import math

import numpy as np
import pytest

from core.halfspace_grid import HalfSpaceGrid
from services import chart_service


@pytest.fixture
def grid():
    return HalfSpaceGrid(nx=64, nz=64, length_x=2.0 * math.pi, length_z=2.0 * math.pi)


@pytest.fixture
def small_grid():
    return HalfSpaceGrid(nx=32, nz=32, length_x=2.0 * math.pi, length_z=2.0 * math.pi)


@pytest.fixture(scope="session")
def rough_domain():
    """K = 0.05 cosine strip on a 64 x 64 grid, shared across tests."""
    grid = HalfSpaceGrid(nx=64, nz=64, length_x=2.0 * math.pi, length_z=2.0 * math.pi)
    boundary = chart_service.cosine_boundary(0.05, grid)
    return chart_service.build_rough_domain(boundary, grid, charts=4, overlap=2)


@pytest.fixture(scope="session")
def flat_domain():
    grid = HalfSpaceGrid(nx=64, nz=64, length_x=2.0 * math.pi, length_z=2.0 * math.pi)
    boundary = chart_service.cosine_boundary(0.0, grid)
    return chart_service.build_rough_domain(boundary, grid, charts=4, overlap=2)


def relative_l2(grid, error, reference):
    axes = tuple(range(error.ndim - 2))
    err = np.sum(error ** 2, axis=axes) if axes else error ** 2
    ref = np.sum(reference ** 2, axis=axes) if axes else reference ** 2
    return float(np.sqrt(grid.integrate(err, physical_only=True) / grid.integrate(ref, physical_only=True)))
