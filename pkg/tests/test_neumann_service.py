import math

import numpy as np
import pytest

from core.exceptions import CompatibilityError
from core.halfspace_grid import HalfSpaceGrid
from models import NeumannProblem, Rank, half_field
from services import chart_service, fixtures_service, neumann_service
from tests.conftest import relative_l2


def test_flat_cosine_solution_is_recovered(grid):
    f, chi, exact = fixtures_service.neumann_cosine(grid)
    solution = neumann_service.halfspace_neumann(grid, f=f, chi=chi, check_padding=True)

    grad = np.array([solution.u.dx().values, solution.u.dz().values])
    assert relative_l2(grid, solution.u.values - exact.u, exact.u) < 1e-8
    assert relative_l2(grid, grad - exact.grad, exact.grad) < 1e-8
    assert solution.residual_interior < 1e-8
    assert solution.residual_bc < 1e-8


def test_flat_flux_data_enter_through_the_lift(grid):
    # u = z g(z) cos x has -u_z(0) = -cos x
    X, Z = grid.mesh()
    g = np.exp(-Z ** 2 / 0.64)
    u = Z * g * np.cos(X)
    u_zz = (-6.0 * Z / 0.64 + 4.0 * Z ** 3 / 0.64 ** 2) * g * np.cos(X)
    f = u_zz - u
    chi = -np.cos(grid.x)

    solution = neumann_service.halfspace_neumann(grid, f=f, chi=chi)
    assert relative_l2(grid, solution.u.values - u, u) < 1e-6
    assert solution.residual_bc < 1e-8


def test_flat_incompatible_data_raise_when_strict(grid):
    f = np.exp(-grid.mesh()[1] ** 2)
    with pytest.raises(CompatibilityError):
        neumann_service.halfspace_neumann(grid, f=f, strict=True)


def test_flat_incompatible_data_are_projected_otherwise(grid):
    f = np.exp(-grid.mesh()[1] ** 2)
    solution = neumann_service.halfspace_neumann(grid, f=f)
    assert solution.compatibility_defect > 0.0


def test_rough_solution_converges_and_is_recovered(rough_domain):
    problem, exact = fixtures_service.rough_neumann_manufactured(rough_domain)
    solution = neumann_service.solve_neumann_rough(problem, tol=1e-10, max_iter=40)
    grid = rough_domain.grid

    assert solution.converged
    assert solution.factors and max(solution.factors) < 0.5
    assert relative_l2(grid, solution.u.values - exact.u, exact.u) < 1e-2
    assert relative_l2(grid, solution.grad - exact.grad, exact.grad) < 1e-2


def test_flat_strip_converges_in_one_sweep(flat_domain):
    problem, exact = fixtures_service.rough_neumann_manufactured(flat_domain)
    solution = neumann_service.solve_neumann_rough(problem)

    assert solution.sweeps == 1
    assert relative_l2(flat_domain.grid, solution.u.values - exact.u, exact.u) < 1e-6


def test_rough_incompatible_data_are_rejected(rough_domain):
    grid = rough_domain.grid
    source = half_field(grid, np.exp(-grid.mesh()[1] ** 2), Rank.SCALAR)
    problem = NeumannProblem(domain=rough_domain, f=source, chi=np.zeros(grid.nx))
    with pytest.raises(CompatibilityError):
        neumann_service.solve_neumann_rough(problem)


def _cosine_domain(n, lipschitz):
    grid = HalfSpaceGrid(nx=n, nz=n, length_x=2.0 * math.pi, length_z=2.0 * math.pi)
    return chart_service.build_rough_domain(chart_service.cosine_boundary(lipschitz, grid), grid, charts=4, overlap=2)


def test_contraction_factor_grows_with_the_lipschitz_constant():
    factors = []
    for lipschitz in (0.02, 0.05, 0.1):
        problem, _ = fixtures_service.rough_neumann_manufactured(_cosine_domain(64, lipschitz))
        solution = neumann_service.solve_neumann_rough(problem, tol=1e-10)
        assert solution.converged
        factors.append(max(solution.factors))
    assert factors[0] <= factors[1] <= factors[2] < 1.0


def test_gradient_error_drops_under_refinement():
    errors = []
    for n in (32, 64):
        domain = _cosine_domain(n, 0.05)
        problem, exact = fixtures_service.rough_neumann_manufactured(domain)
        solution = neumann_service.solve_neumann_rough(problem, tol=1e-10)
        errors.append(relative_l2(domain.grid, solution.grad - exact.grad, exact.grad))
    assert errors[1] <= 0.5 * errors[0] or errors[1] < 1e-8


def test_flat_solve_is_linear_in_the_data(grid):
    X, Z = grid.mesh()
    g = np.exp(-Z ** 2)
    first = (np.cos(X) * (1.0 - 2.0 * Z ** 2) * g, np.zeros(grid.nx))
    second = (np.sin(2.0 * X) * Z * g, np.cos(2.0 * grid.x))

    def run(f, chi):
        return neumann_service.halfspace_neumann(grid, f=f, chi=chi).u.values

    expected = 3.0 * run(*first) - run(*second)
    combined = run(3.0 * first[0] - second[0], 3.0 * first[1] - second[1])
    assert np.max(np.abs(combined - expected)) <= 1e-10 * np.max(np.abs(expected))
