import math

import numpy as np
import pytest

from core import spectral
from core.exceptions import DataError, PaddingError
from core.halfspace_grid import HalfSpaceGrid, Parity, ParityField
from models import PARITY_TABLE, GridField, Rank, half_field
from services import fixtures_service, halfspace_service
from tests.conftest import relative_l2


def _torus_field(values, rank):
    n = values.shape[-1]
    return GridField(extent=(2.0 * math.pi, 2.0 * math.pi), nodes=(n, n), rank=rank, values=values)


# Whole space
def test_whole_space_single_modes_match_symbols():
    n = 32
    x = 2.0 * math.pi * np.arange(n) / n
    X, Z = np.meshgrid(x, x, indexing="ij")
    G = np.zeros((2, 2, n, n))
    G[0, 0] = np.cos(X)
    G[0, 1] = np.cos(Z)

    w, q = halfspace_service.solve_whole_space(_torus_field(G, Rank.TENSOR))

    # Div G = (-sin x - sin z, 0): the x-mode is pure gradient, the z-mode is solenoidal
    assert np.allclose(w.values[0], -np.sin(Z), atol=1e-12)
    assert np.allclose(w.values[1], 0.0, atol=1e-12)
    assert np.allclose(q.values, np.cos(X), atol=1e-12)


def test_whole_space_velocity_is_divergence_free_for_random_data():
    n = 64
    rng = np.random.default_rng(7)
    G = rng.standard_normal((2, 2, n, n))
    w, _ = halfspace_service.solve_whole_space(_torus_field(G, Rank.TENSOR))

    extent = (2.0 * math.pi, 2.0 * math.pi)
    div = spectral.derivative(w.values[0], extent, 0) + spectral.derivative(w.values[1], extent, 1)
    grad = np.array([[spectral.derivative(w.values[i], extent, j) for j in range(2)] for i in range(2)])
    assert np.linalg.norm(div) <= 1e-12 * np.linalg.norm(grad)


def test_leray_projection_is_idempotent():
    n = 64
    extent = (2.0 * math.pi, 2.0 * math.pi)
    v = np.random.default_rng(11).standard_normal((2, n, n))
    once = spectral.leray_project(v, extent)
    twice = spectral.leray_project(once, extent)
    assert np.allclose(twice, once, atol=1e-12)
    assert not np.allclose(once, v)


def test_torus_solution_keeps_the_velocity_parities(grid):
    X, Z = grid.mesh()
    g = np.exp(-Z ** 2)
    force = np.array([np.cos(X) * (1.0 - Z ** 2) * g, np.sin(2.0 * X) * Z * g])
    f_torus = np.array([grid.reflect(force[i], PARITY_TABLE.force[i]) for i in range(2)])
    w, q, _ = halfspace_service._torus_stokes(None, f_torus, grid.torus_nodes, grid.torus_extent)

    def mirrored(values):
        return values[..., 1:][..., ::-1]

    assert np.allclose(mirrored(w[0]), w[0][..., 1:], atol=1e-12)
    assert np.allclose(mirrored(w[1]), -w[1][..., 1:], atol=1e-12)
    assert np.allclose(mirrored(q), q[..., 1:], atol=1e-12)


def test_whole_space_rejects_vector_data():
    with pytest.raises(DataError):
        halfspace_service.solve_whole_space(_torus_field(np.zeros((2, 16, 16)), Rank.VECTOR))


# Reflection
def test_reflect_data_has_tensor_parities(grid):
    rng = np.random.default_rng(3)
    F = rng.standard_normal((2, 2) + grid.shape)
    G = halfspace_service.reflect_data(half_field(grid, F, Rank.TENSOR), grid).values
    nz = grid.nz
    mirrored = G[..., nz + 1:][..., ::-1]
    assert np.allclose(mirrored[0, 0], F[0, 0][:, 1:])
    assert np.allclose(mirrored[1, 1], F[1, 1][:, 1:])
    assert np.allclose(mirrored[0, 1], -F[0, 1][:, 1:])
    assert np.allclose(mirrored[1, 0], -F[1, 0][:, 1:])


# Lifts
def test_lift_divergence_matches_divergence_and_normal_data(grid):
    _, exact = fixtures_service.halfspace_general(grid)
    h = exact.grad[0, 0] + exact.grad[1, 1]
    g_normal = -exact.u[1][:, 0]
    lift = halfspace_service.lift_divergence(half_field(grid, h, Rank.SCALAR), g_normal, grid).values

    _, pieces = halfspace_service._divergence_lift(grid, h, g_normal, True)
    div = (pieces[0].dx() + pieces[1].dz()).values
    assert grid.physical_max(div - h) <= 1e-6 * grid.physical_max(h)
    assert np.max(np.abs(-lift[1][:, 0] - g_normal)) <= 1e-8 * np.max(np.abs(g_normal))


def test_lift_traction_carries_the_defect_and_no_normal_flow(grid):
    defect = np.cos(grid.x) + 0.5 * np.sin(2.0 * grid.x)
    c = halfspace_service.lift_traction(defect, grid).values

    cx = ParityField.of(grid, c[0], Parity.ODD)
    assert np.max(np.abs(c[1][:, 0])) <= 1e-12
    assert np.max(np.abs(-cx.dz().trace() - defect)) <= 1e-7


# Solve
@pytest.mark.parametrize("builder", [fixtures_service.halfspace_parity, fixtures_service.halfspace_general])
@pytest.mark.parametrize("friction", [0.0, 1.0])
def test_manufactured_solutions_are_recovered(grid, builder, friction):
    problem, exact = builder(grid, friction)
    solution = halfspace_service.solve_halfspace(problem)

    assert relative_l2(grid, solution.u.values - exact.u, exact.u) < 1e-5
    assert solution.residual_interior < 1e-6
    assert solution.residual_bc < 1e-6


def _arrays(problem):
    return (problem.F.values, problem.f.values, problem.h.values, problem.g_normal, problem.G_tangential)


def test_solve_is_linear_in_the_data(grid):
    first, _ = fixtures_service.halfspace_general(grid, 0.5)
    second, _ = fixtures_service.halfspace_parity(grid, 0.5)
    a, b = 2.0, -0.7
    combined = [a * p + b * q for p, q in zip(_arrays(first), _arrays(second))]

    u1 = halfspace_service.solve_halfspace_arrays(grid, *_arrays(first), friction=0.5).u.values
    u2 = halfspace_service.solve_halfspace_arrays(grid, *_arrays(second), friction=0.5).u.values
    u = halfspace_service.solve_halfspace_arrays(grid, *combined, friction=0.5).u.values
    expected = a * u1 + b * u2
    assert np.max(np.abs(u - expected)) <= 1e-10 * np.max(np.abs(expected))


def test_zero_data_give_zero_solution(grid):
    zeros = np.zeros((2, 2) + grid.shape)
    solution = halfspace_service.solve_halfspace_arrays(grid, zeros, zeros[0], zeros[0, 0], np.zeros(grid.nx), np.zeros(grid.nx), friction=1.0)
    assert np.all(solution.u.values == 0.0)
    assert np.all(solution.pi.values == 0.0)


@pytest.mark.parametrize("friction", [0.0, 1.0])
def test_fine_grid_recovers_the_general_solution(friction):
    fine = HalfSpaceGrid(nx=256, nz=256, length_x=2.0 * math.pi, length_z=2.0 * math.pi)
    problem, exact = fixtures_service.halfspace_general(fine, friction)
    solution = halfspace_service.solve_halfspace(problem)
    assert relative_l2(fine, solution.u.values - exact.u, exact.u) < 1e-6


def test_force_form_agrees_with_divergence_form(grid):
    problem, exact = fixtures_service.halfspace_parity(grid, 0.5, form="force")
    solution = halfspace_service.solve_halfspace(problem)
    assert relative_l2(grid, solution.u.values - exact.u, exact.u) < 1e-5


def test_error_drops_under_refinement(grid):
    coarse = HalfSpaceGrid(nx=16, nz=16, length_x=grid.length_x, length_z=grid.length_z)
    errors = []
    for g in (coarse, grid):
        problem, exact = fixtures_service.halfspace_general(g)
        solution = halfspace_service.solve_halfspace(problem)
        errors.append(relative_l2(g, solution.u.values - exact.u, exact.u))
    assert errors[1] < errors[0]


def test_data_in_the_pad_are_rejected(grid):
    problem, _ = fixtures_service.halfspace_parity(grid)
    bumped = problem.model_copy(update={"h": half_field(grid, np.ones(grid.shape), Rank.SCALAR)})
    with pytest.raises(PaddingError):
        halfspace_service.solve_halfspace(bumped)


def test_estimate_norms_are_reported_when_an_index_is_given(grid):
    problem, _ = fixtures_service.halfspace_parity(grid)
    solution = halfspace_service.solve_halfspace(problem)
    assert solution.norms
    assert all(report.value >= 0.0 for report in solution.norms.values())
