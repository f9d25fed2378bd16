import math

import numpy as np
import pytest

from core.halfspace_grid import HalfSpaceGrid, Parity, ParityField, jet_orders


@pytest.fixture
def fine_grid():
    return HalfSpaceGrid(nx=8, nz=256, length_x=2.0 * math.pi, length_z=2.0 * math.pi)


def test_jet_orders_follow_the_parity():
    assert jet_orders(Parity.EVEN, 6) == [0, 2, 4, 6]
    assert jet_orders(Parity.ODD, 5) == [1, 3, 5]
    assert jet_orders(Parity.ODD, 0) == []


def test_jets_read_boundary_derivatives(fine_grid):
    # (1 + z) exp(-z^2) = 1 + z - z^2 - z^3 + ...
    X, Z = fine_grid.mesh()
    values = np.cos(X) * (1.0 + Z) * np.exp(-Z ** 2)
    jets = fine_grid.jets(values, [0, 1, 3])
    cos = np.cos(fine_grid.x)
    assert np.array_equal(jets[0], values[:, 0])
    assert np.allclose(jets[1], cos, atol=1e-8)
    assert np.allclose(jets[2], -6.0 * cos, atol=1e-5)


def test_jet_lift_carries_the_jets(fine_grid):
    profile = np.sin(fine_grid.x)
    lift = fine_grid.jet_lift({1: profile, 3: 2.0 * profile})
    jets = fine_grid.jets(lift, [1, 3])
    assert np.allclose(lift[:, 0], 0.0)
    assert np.allclose(jets[0], profile, atol=1e-8)
    assert np.allclose(jets[1], 2.0 * profile, atol=1e-5)


def test_split_keeps_values_and_differentiates_smoothly():
    grid = HalfSpaceGrid(nx=16, nz=128, length_x=2.0 * math.pi, length_z=2.0 * math.pi)
    X, Z = grid.mesh()
    g = np.exp(-Z ** 2)
    values = np.cos(X) * (1.0 + Z) * g
    exact_dz = np.cos(X) * (1.0 - 2.0 * Z - 2.0 * Z ** 2) * g

    field = ParityField.split(grid, values, Parity.ODD)
    assert np.allclose(field.values, values, atol=1e-12)
    assert grid.physical_max(field.dz().values - exact_dz) < 1e-6

    # a plain odd reflection of a field with a trace jumps at z = 0
    naive = ParityField.of(grid, values, Parity.ODD)
    assert grid.physical_max(naive.dz().values - exact_dz) > 1e-2
