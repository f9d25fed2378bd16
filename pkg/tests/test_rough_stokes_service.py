import math

import numpy as np
import pytest

from core.exceptions import ChartRejectedError, CompatibilityError, DataError, UnsupportedIndexError
from core.halfspace_grid import HalfSpaceGrid
from models import Rank, StokesProblem, half_field
from schemas import SobolevIndex
from services import chart_service, fixtures_service, rough_stokes_service
from tests.conftest import relative_l2


def _alpha(domain, value):
    return np.full(domain.grid.nx, value)


# Coefficients
def test_flat_strip_has_identity_coefficients(flat_domain):
    coeffs = rough_stokes_service.assemble_coeffs(flat_domain)
    eye = np.eye(2)[:, :, None, None]
    assert np.allclose(coeffs.A, eye)
    assert np.allclose(coeffs.B, eye)
    assert np.allclose(coeffs.det, 1.0)


def test_coefficients_stay_close_to_identity_for_small_lipschitz(rough_domain):
    coeffs = rough_stokes_service.assemble_coeffs(rough_domain)
    deviation = np.max(np.abs(coeffs.A - np.eye(2)[:, :, None, None]))
    assert 0.0 < deviation < 0.2


def test_window_chart_coefficients_match_the_global_ones_on_the_core(rough_domain):
    global_coeffs = rough_stokes_service.assemble_coeffs(rough_domain)
    local = rough_stokes_service.assemble_coeffs(rough_domain, chart_index=2)
    core = rough_domain.partition.cutoffs[2][:, 0] > 1.0 - 1e-12

    assert local.chart_index == 2
    assert np.any(core) and not np.all(core)
    assert np.allclose(local.det[:, 0], 1.0, atol=1e-12)
    assert np.allclose(local.A[..., 0][..., core], global_coeffs.A[..., 0][..., core], atol=1e-4)
    assert rough_stokes_service.chart_deviation(rough_domain, global_coeffs) < 1e-4


def test_chart_index_out_of_range_is_rejected(rough_domain):
    with pytest.raises(DataError):
        rough_stokes_service.assemble_coeffs(rough_domain, chart_index=rough_domain.partition.count)


def test_piola_identity_holds(rough_domain):
    assert rough_stokes_service.piola_residual(rough_domain) < 1e-6


def test_steep_charts_are_rejected():
    grid = HalfSpaceGrid(nx=32, nz=32, length_x=2.0 * math.pi, length_z=2.0 * math.pi)
    domain = chart_service.build_rough_domain(chart_service.cosine_boundary(2.0, grid), grid)
    with pytest.raises(ChartRejectedError, match="chart-"):
        rough_stokes_service.assemble_coeffs(domain)


# Perturbation and localization
def test_perturbation_vanishes_on_a_flat_strip(flat_domain):
    grid = flat_domain.grid
    rng = np.random.default_rng(0)
    v = rng.standard_normal((2,) + grid.shape)
    v_grad = rng.standard_normal((2, 2) + grid.shape)
    theta = rng.standard_normal(grid.shape)
    coeffs = rough_stokes_service.assemble_coeffs(flat_domain)
    slope = flat_domain.boundary_slope

    S, s_div, g_bc, G_bc = rough_stokes_service.perturbation_terms(
        v, v_grad, theta, coeffs, slope, _alpha(flat_domain, 0.7), implicit_friction=0.7
    )
    assert np.allclose(S, 0.0)
    assert np.allclose(s_div, 0.0)
    assert np.allclose(g_bc, 0.0)
    assert np.allclose(G_bc, 0.0)


def test_localized_data_sum_back_to_the_global_data(rough_domain):
    grid = rough_domain.grid
    rng = np.random.default_rng(1)
    flux = rng.standard_normal((2, 2) + grid.shape)
    force = rng.standard_normal((2,) + grid.shape)
    h = rng.standard_normal(grid.shape)
    g_normal, G_tangential = rng.standard_normal(grid.nx), rng.standard_normal(grid.nx)
    v = rng.standard_normal((2,) + grid.shape)
    v_grad = rng.standard_normal((2, 2) + grid.shape)
    theta = rng.standard_normal(grid.shape)

    charts = rough_stokes_service.localize(rough_domain.partition, flux, force, h, g_normal, G_tangential, v, v_grad, theta)

    assert len(charts) == rough_domain.partition.count
    assert np.allclose(sum(c.F for c in charts), flux)
    assert np.allclose(sum(c.f for c in charts), force, atol=1e-9)
    assert np.allclose(sum(c.h for c in charts), h, atol=1e-9)
    assert np.allclose(sum(c.g_normal for c in charts), g_normal)
    assert np.allclose(sum(c.G_tangential for c in charts), G_tangential, atol=1e-9)


# Sweeps
def test_flat_strip_converges_in_one_sweep(flat_domain):
    F = fixtures_service.rough_strip_data(flat_domain)
    problem = StokesProblem(domain=flat_domain, F=F, alpha=_alpha(flat_domain, 1.0))
    solution = rough_stokes_service.picard_solve(problem)
    assert solution.converged
    assert solution.sweeps == 1


@pytest.mark.parametrize("friction", [0.0, 1.0])
def test_rough_strip_sweeps_contract(rough_domain, friction):
    F = fixtures_service.rough_strip_data(rough_domain)
    problem = StokesProblem(domain=rough_domain, F=F, alpha=_alpha(rough_domain, friction))
    solution = rough_stokes_service.picard_solve(problem, tol=1e-10, max_iter=40)

    assert solution.converged and not solution.partial
    assert solution.sweeps >= 2
    assert max(solution.factors) < 0.5
    assert max(solution.residuals[k] for k in ("divergence", "normal", "slip")) < 1e-6
    assert solution.residuals["momentum"] < 1e-4
    assert solution.residuals["interior"] >= solution.residuals["divergence"]
    assert solution.history[-1].momentum_residual == pytest.approx(solution.residuals["momentum"])
    assert solution.estimate is not None and math.isfinite(solution.estimate.ratio)


def test_manufactured_rough_solution_is_recovered(rough_domain):
    problem, exact = fixtures_service.rough_stokes_manufactured(rough_domain, _alpha(rough_domain, 0.5))
    solution = rough_stokes_service.picard_solve(problem, tol=1e-10)
    grid = rough_domain.grid

    assert relative_l2(grid, solution.u.values - exact.u, exact.u) < 1e-2
    assert relative_l2(grid, solution.grad - exact.grad, exact.grad) < 1e-2


def _cosine_domain(n, lipschitz):
    grid = HalfSpaceGrid(nx=n, nz=n, length_x=2.0 * math.pi, length_z=2.0 * math.pi)
    return chart_service.build_rough_domain(chart_service.cosine_boundary(lipschitz, grid), grid, charts=4, overlap=2)


def test_recovery_error_drops_under_refinement():
    errors = []
    for n in (32, 64):
        domain = _cosine_domain(n, 0.05)
        problem, exact = fixtures_service.rough_stokes_manufactured(domain, _alpha(domain, 0.5))
        solution = rough_stokes_service.picard_solve(problem, tol=1e-10)
        errors.append(relative_l2(domain.grid, solution.grad - exact.grad, exact.grad))
    assert errors[1] <= 0.5 * errors[0] or errors[1] < 1e-8


def test_sweeps_are_linear_in_the_data(rough_domain):
    grid = rough_domain.grid
    first = fixtures_service.rough_strip_data(rough_domain).values
    second = fixtures_service.random_band_limited(grid, Rank.TENSOR, seed=3).values
    alpha = _alpha(rough_domain, 0.5)

    def run(F):
        problem = StokesProblem(domain=rough_domain, F=half_field(grid, F, Rank.TENSOR), alpha=alpha)
        return rough_stokes_service.picard_solve(problem, tol=1e-30, max_iter=5).u.values

    expected = 2.0 * run(first) - 0.5 * run(second)
    combined = run(2.0 * first - 0.5 * second)
    assert np.max(np.abs(combined - expected)) <= 1e-8 * np.max(np.abs(expected))


def test_nonnegative_friction_without_data_gives_rest(rough_domain):
    alpha = 1.0 + 0.5 * np.cos(rough_domain.grid.x)
    solution = rough_stokes_service.picard_solve(StokesProblem(domain=rough_domain, alpha=alpha))
    assert solution.converged
    assert np.allclose(solution.u.values, 0.0)
    assert np.allclose(solution.pi.values, 0.0)


def test_incompatible_divergence_data_are_rejected(rough_domain):
    grid = rough_domain.grid
    h = half_field(grid, np.exp(-grid.mesh()[1] ** 2), Rank.SCALAR)
    problem = StokesProblem(domain=rough_domain, h=h, alpha=_alpha(rough_domain, 0.0))
    with pytest.raises(CompatibilityError):
        rough_stokes_service.picard_solve(problem)


def test_force_form_matches_divergence_form(rough_domain):
    F, f, G = fixtures_service.rough_strip_force(rough_domain)
    alpha = _alpha(rough_domain, 0.0)
    divergence_form = rough_stokes_service.picard_solve(StokesProblem(domain=rough_domain, F=F, alpha=alpha), tol=1e-10)
    force_form = rough_stokes_service.nondivergence_solve(
        StokesProblem(domain=rough_domain, f=f, G_tangential=G, alpha=alpha), tol=1e-10
    )
    gap = relative_l2(rough_domain.grid, force_form.u.values - divergence_form.u.values, divergence_form.u.values)
    assert gap < 1e-6


# Estimates
def test_estimate_is_degenerate_for_zero_data(rough_domain):
    problem = StokesProblem(domain=rough_domain, alpha=_alpha(rough_domain, 0.0))
    solution = rough_stokes_service.picard_solve(problem)
    assert np.allclose(solution.u.values, 0.0)
    assert solution.estimate.degenerate
    assert solution.estimate.ratio is None


def test_estimate_second_order_and_unsupported_index(rough_domain):
    F = fixtures_service.rough_strip_data(rough_domain)
    problem = StokesProblem(domain=rough_domain, F=F, alpha=_alpha(rough_domain, 0.0))
    solution = rough_stokes_service.picard_solve(problem)

    report = rough_stokes_service.verify_estimate(problem, solution, SobolevIndex(s=2.0, p=2.0))
    assert report.ratio is not None and report.ratio > 0.0
    assert set(report.constituents) >= {"hess_u", "grad_pi", "grad_F"}
    with pytest.raises(UnsupportedIndexError):
        rough_stokes_service.verify_estimate(problem, solution, SobolevIndex(s=1.5, p=2.0))


def test_estimate_spread_is_reproducible(rough_domain):
    alpha = _alpha(rough_domain, 0.0)
    index = SobolevIndex(s=1.0, p=2.0)
    first = rough_stokes_service.estimate_spread(rough_domain, alpha, index, samples=2, seed=5)
    second = rough_stokes_service.estimate_spread(rough_domain, alpha, index, samples=2, seed=5)
    assert first.min_ratio == second.min_ratio
    assert first.max_ratio == second.max_ratio
    assert first.spread >= 1.0
