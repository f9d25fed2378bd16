"""
Laplace equation with Neumann data: the half-space solver by even
reflection, and the localized fixed-point solver on rough strips.

Flat form:   Δu = f - Div F in z > 0,   -(∂_z u + F_z) = chi on z = 0.
Rough form:  Div(∇u + F) = f in Ω,      (∇u + F)·n = chi on ∂Ω.
"""
import logging
from typing import Dict, Optional

import numpy as np

from config import settings
from core import spectral
from core.exceptions import CompatibilityError, PaddingError
from core.halfspace_grid import HalfSpaceGrid, Parity, ParityField, jet_orders
from core.sweep_utils import SweepMonitor, map_charts, relative_increment
from models import FlatNeumannSolution, GridField, NeumannProblem, NeumannSolution, Rank, half_field

logger = logging.getLogger(__name__)

TINY = 1e-300


def _solve_torus_poisson(grid: HalfSpaceGrid, rhs: np.ndarray) -> np.ndarray:
    """Δu = rhs on the torus for zero-mean rhs; modes with |ξ|^2 = 0 are set to zero."""
    kx, kz = spectral.frequency_grid(grid.torus_nodes, grid.torus_extent)
    k2 = kx ** 2 + kz ** 2
    spectrum = spectral.forward(rhs, 2)
    safe = np.where(k2 > 0.0, k2, 1.0)
    return spectral.backward(np.where(k2 > 0.0, -spectrum / safe, 0.0), 2)


def _neumann_jets(grid: HalfSpaceGrid, source: np.ndarray, flux: np.ndarray) -> Dict[int, np.ndarray]:
    """Odd z-derivatives at z = 0 of u with Δu = source and ∂_z u = -flux on z = 0."""
    orders = jet_orders(Parity.ODD, settings.jet_order - 2)
    s = dict(zip(orders, grid.jets(source, orders)))
    jets = {1: -np.asarray(flux, dtype=float)}
    for j in orders:
        jets[j + 2] = s[j] - spectral.derivative(jets[j], (grid.length_x,), 0, 2)
    return jets


def halfspace_neumann(
    grid: HalfSpaceGrid,
    F: Optional[np.ndarray] = None,
    f: Optional[np.ndarray] = None,
    chi: Optional[np.ndarray] = None,
    strict: bool = False,
    check_padding: bool = False,
    report: bool = True,
) -> FlatNeumannSolution:
    """
    Even reflection solve of Δu = f - Div F, -(∂_z u + F_z) = chi.

    The odd z-derivatives of u at z = 0 (the boundary flux and what the
    equation makes of it) go into an odd jet piece; what is left has
    homogeneous Neumann data, reflects evenly without a kink and is solved
    spectrally on the torus. The discrete compatibility defect is removed
    from the source and reported; with strict=True a defect above the
    compatibility tolerance raises instead. The solution is normalized to
    zero mean.
    """
    nx, nz = grid.shape
    F = np.zeros((2, nx, nz)) if F is None else np.asarray(F, dtype=float)
    f = np.zeros((nx, nz)) if f is None else np.asarray(f, dtype=float)
    chi = np.zeros(nx) if chi is None else np.asarray(chi, dtype=float)

    if check_padding:
        for name, values in (("F", F), ("f", f)):
            level = grid.pad_max(values)
            if level > settings.pad_tolerance * max(1.0, float(np.max(np.abs(values)))):
                logger.error(f"Neumann data {name} reaches {level:.3e} in the pad.")
                raise PaddingError(f"{name} does not vanish in the pad zone (max {level:.3e})")

    Fx = ParityField.split(grid, F[0], Parity.EVEN)
    Fz = ParityField.split(grid, F[1], Parity.ODD)
    source = f - (Fx.dx() + Fz.dz()).values

    flux = chi + F[1][:, 0]
    lift = ParityField.jet_piece(grid, _neumann_jets(grid, source, flux))

    rest = source - lift.lap().values
    rhs = grid.reflect(rest, Parity.EVEN)
    mean = float(np.mean(rhs))
    defect = mean * grid.length_x * grid.length_z
    scale = grid.integrate(np.abs(source)) + grid.boundary_integral(np.abs(flux))
    relative = abs(defect) / max(scale, TINY)
    if relative > settings.compatibility_tol:
        if strict:
            logger.error(f"Neumann data incompatible: defect {defect:.3e} (relative {relative:.3e}).")
            raise CompatibilityError(f"compatibility defect {defect:.3e} exceeds tolerance", defect=defect)
        log = logger.warning if report else logger.debug
        log(f"Removing Neumann compatibility defect {defect:.3e} (relative {relative:.3e}).")

    bulk = ParityField(grid, _solve_torus_poisson(grid, rhs - mean))
    u = bulk + lift
    gauge = grid.integrate(u.values) / (grid.length_x * grid.length_z)
    u = ParityField(grid, u.full - gauge)

    residual = u.lap().values - source
    interior = grid.physical_max(residual - (-mean)) / max(grid.physical_max(source), TINY)
    bc = -(u.dz().trace() + F[1][:, 0]) - chi
    bc_scale = float(np.max(np.abs(chi) + np.abs(F[1][:, 0]))) + grid.physical_max(np.array([u.dx().values, u.dz().values]))
    boundary = float(np.max(np.abs(bc))) / max(bc_scale, TINY)
    return FlatNeumannSolution(u=u, compatibility_defect=defect, residual_interior=interior, residual_bc=boundary)


# Rough strips
def _flat_data(coeffs, slope, v_grad, F, f, chi):
    """Flux F_flat = B^T F + (A - I)∇v, source det J f and conormal data √(1+a^2) chi."""
    A, B, det = coeffs.A, coeffs.B, coeffs.det
    eye = np.eye(2)[:, :, None, None]
    H = np.einsum("jk...,j...->k...", B, F)
    flux = H + np.einsum("jk...,k...->j...", A - eye, v_grad)
    return flux, det * f, np.sqrt(1.0 + slope ** 2) * chi


def _chart_data(partition, j, v, v_grad, flux, source, conormal):
    xi = partition.cutoffs[j]
    dxi = partition.gradients[j]
    lap_xi = partition.laplacians[j]
    F_j = xi * flux
    f_j = xi * source + np.sum(flux * dxi, axis=0) + 2.0 * np.sum(v_grad * dxi, axis=0) + v * lap_xi
    chi_j = xi[:, 0] * conormal - v[:, 0] * dxi[1][:, 0]
    return F_j, f_j, chi_j


def solve_neumann_rough(
    problem: NeumannProblem,
    tol: float = 1e-8,
    max_iter: int = 40,
    threads: Optional[int] = None,
) -> NeumannSolution:
    """
    Fixed-point solve on a rough strip.

    Each sweep freezes (A - I)∇v at the current iterate, localizes the flat
    data with the partition of unity, solves one half-space Neumann problem
    per chart in parallel and sums the chart solutions.
    """
    from services import rough_stokes_service

    domain = problem.domain
    grid = domain.grid
    nx, nz = grid.shape
    coeffs = rough_stokes_service.assemble_coeffs(domain)
    slope = domain.boundary_slope
    F = np.zeros((2, nx, nz)) if problem.F is None else grid_values(problem.F, grid) * grid.pad_taper
    f = np.zeros((nx, nz)) if problem.f is None else grid_values(problem.f, grid) * grid.pad_taper
    chi = problem.chi

    volume = grid.integrate(coeffs.det * f)
    surface = grid.boundary_integral(np.sqrt(1.0 + slope ** 2) * chi)
    defect = volume - surface
    scale = max(grid.integrate(np.abs(coeffs.det * f)) + grid.boundary_integral(np.abs(chi)), TINY)
    if abs(defect) / scale > settings.compatibility_tol:
        logger.error(f"Rough Neumann data incompatible: ∫f - ∫chi = {defect:.3e}.")
        raise CompatibilityError(f"∫f - ∫chi = {defect:.3e} violates compatibility", defect=defect)

    partition = domain.partition
    monitor = SweepMonitor(tol, max_iter, "neumann", domain.atlas.delta, settings.residual_tol)
    v = np.zeros((nx, nz))
    v_grad = np.zeros((2, nx, nz))
    u_field = ParityField(grid)
    converged = False

    for sweep in range(1, max_iter + 1):
        flux, source, conormal = _flat_data(coeffs, slope, v_grad, F, f, chi)
        flux = flux * grid.pad_taper

        def solve_chart(j: int) -> ParityField:
            F_j, f_j, chi_j = _chart_data(partition, j, v, v_grad, flux, source, conormal)
            return halfspace_neumann(grid, F_j, f_j, chi_j, report=False).u

        pieces = map_charts(solve_chart, list(range(partition.count)), threads)
        u_new = ParityField(grid)
        for piece in pieces:
            u_new = u_new + piece
        weighted_mean = grid.integrate(coeffs.det * u_new.values) / grid.integrate(coeffs.det)
        u_new = ParityField(grid, u_new.full - weighted_mean)

        new_values = u_new.values
        new_grad = np.array([u_new.dx().values, u_new.dz().values])
        increment = relative_increment(new_values * grid.physical_mask, v * grid.physical_mask)
        residuals = _rough_residuals(grid, coeffs, slope, u_new, F, f, chi)
        v, v_grad, u_field = new_values, new_grad, u_new
        if monitor.record(sweep, increment, residuals, partition.count):
            converged = not monitor.stalled
            break

    if not converged:
        logger.warning(f"Rough Neumann solve stopped after {max_iter} sweeps without meeting tol={tol:g}.")

    grad_ref = np.array([u_field.dx().values, u_field.dz().values])
    hess_ref = np.array([[u_field.d(j).d(k).values for k in range(2)] for j in range(2)])
    physical_grad = _physical_gradient(coeffs, grad_ref)
    return NeumannSolution(
        u=half_field(grid, v, Rank.SCALAR),
        grad=physical_grad,
        hessian=hess_ref,
        residuals=_rough_residuals(grid, coeffs, slope, u_field, F, f, chi),
        compatibility_defect=defect,
        sweeps=monitor.accepted_sweeps if converged else len(monitor.history),
        factors=monitor.factors,
        history=monitor.history,
        converged=converged,
    )


def _physical_gradient(coeffs, grad_ref: np.ndarray) -> np.ndarray:
    """∇_y u∘Phi = J^{-T} ∇v, with J^{-T} = B / det J."""
    return np.einsum("ij...,j...->i...", coeffs.B, grad_ref) / coeffs.det


def _rough_residuals(grid, coeffs, slope, u: ParityField, F, f, chi) -> dict:
    """Transformed interior residual Div(A∇v + B^T F) - det J f and the conormal residual."""
    grad = [u.dx(), u.dz()]
    A, B = coeffs.A, coeffs.B
    H = np.einsum("jk...,j...->k...", B, F)
    flux = [
        ParityField.split(grid, A[0, 0] * grad[0].values + A[0, 1] * grad[1].values + H[0], Parity.EVEN),
        ParityField.split(grid, A[1, 0] * grad[0].values + A[1, 1] * grad[1].values + H[1], Parity.ODD),
    ]
    interior = (flux[0].dx() + flux[1].dz()).values - coeffs.det * f
    scale = max(grid.physical_max(coeffs.det * f) + grid.physical_max(u.lap().values), TINY)
    conormal = -flux[1].trace() - np.sqrt(1.0 + slope ** 2) * chi
    bc_scale = max(
        float(np.max(np.abs(chi))) + float(np.max(np.abs(H[1][:, 0]))) + grid.physical_max(np.array([g.values for g in grad])),
        TINY,
    )
    return {
        "interior": grid.physical_max(interior) / scale,
        "divergence": grid.physical_max(interior) / scale,
        "normal": float(np.max(np.abs(conormal))) / bc_scale,
        "slip": 0.0,
    }


def grid_values(field: GridField, grid: HalfSpaceGrid) -> np.ndarray:
    if tuple(field.nodes) != grid.shape:
        raise ValueError(f"field on {field.nodes} nodes does not match the grid {grid.shape}")
    return np.array(field.values)
