"""
Stokes problem with Navier slip on a rough strip.

The flattening turns the problem into

    -Div(∇v A - θ B + H) = det J f,   B:∇v = det J h       in z > 0

with A = det J J^{-1} J^{-T}, B = det J J^{-T} and H = (F∘Phi) B. Each sweep
freezes the perturbation S = ∇v (A - I) - θ (B - I) and the boundary
coupling at the current iterate, localizes with the partition of unity,
solves one flat half-space problem per chart and sums the chart solutions.
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import settings
from core.exceptions import ChartRejectedError, CompatibilityError, DataError, UnsupportedIndexError
from core.halfspace_grid import ParityField
from core.sweep_utils import SweepMonitor, map_charts, relative_increment
from models import (
    PARITY_TABLE,
    ChartData,
    FlatteningMap,
    IterationState,
    NeumannProblem,
    PartitionOfUnity,
    Rank,
    RoughDomain,
    StokesProblem,
    StokesSolution,
    TransformedCoeffs,
    half_field,
)
from schemas import EstimateReport, SobolevIndex, SpreadReport
from services import chart_service, fixtures_service, halfspace_service, neumann_service

logger = logging.getLogger(__name__)

TINY = 1e-300
EIGEN_RANGE = (0.25, 4.0)
PIOLA_TOL = 1e-6


# Coefficients
def _coefficient_arrays(a: np.ndarray, d: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    one, zero = np.ones_like(a), np.zeros_like(a)
    A = np.array([[d, -a], [-a, (1.0 + a ** 2) / d]])
    B = np.array([[d, -a], [zero, one]])
    return A, B


def _check_eigenvalues(domain: RoughDomain, A: np.ndarray, charts: List[int]) -> None:
    eigen = np.linalg.eigvalsh(np.moveaxis(A, (0, 1), (-2, -1)))
    low, high = EIGEN_RANGE
    partition = domain.partition
    for j in charts:
        support = (partition.cutoffs[j] > 0.0) & domain.grid.physical_mask
        if not np.any(support):
            continue
        smallest = float(np.min(eigen[..., 0][support]))
        largest = float(np.max(eigen[..., 1][support]))
        if smallest < low or largest > high:
            label = partition.labels[j]
            logger.error(f"Chart {label}: eigenvalues of A in [{smallest:.4f}, {largest:.4f}], outside [{low}, {high}].")
            raise ChartRejectedError(
                f"chart {label} rejected: eigenvalues of A span [{smallest:.4f}, {largest:.4f}], "
                f"admissible range is [{low}, {high}] (Lipschitz constant {domain.boundary.lipschitz:.4g})"
            )


def window_flattening(domain: RoughDomain, chart_index: int) -> Tuple[FlatteningMap, int]:
    """
    Flattening of window chart `chart_index` in its own frame, on a copy of
    the grid whose nodes sit at x - center. Returns the map and the roll that
    carries its node columns back onto the global ones.
    """
    grid = domain.grid
    chart = domain.atlas.charts[chart_index - 1]
    L, dx = grid.length_x, grid.dx
    center = float(chart.anchor[0])
    origin = ((grid.origin_x - center + 0.5 * L) % dx) - 0.5 * L
    local = grid.model_copy(update={"origin_x": origin})
    shift = int(round((origin + center - grid.origin_x) / dx)) % grid.nx
    return chart_service.build_flattening(chart, local), shift


def assemble_coeffs(domain: RoughDomain, chart_index: int = 0) -> TransformedCoeffs:
    """
    A and B from the Jacobian J = [[1, 0], [a, d]] of a flattening:
    A = [[d, -a], [-a, (1 + a^2)/d]] and B = [[d, -a], [0, 1]].

    Index 0 uses the global strip flattening and checks the eigenvalues of
    A on every chart support. Index j >= 1 flattens window chart j in its
    own frame and checks them on the support of xi_j only.
    """
    partition = domain.partition
    if not 0 <= chart_index < partition.count:
        raise DataError(f"chart index {chart_index} outside [0, {partition.count - 1}]")

    if chart_index == 0:
        fmap = domain.flattening
        A, B = _coefficient_arrays(fmap.slope, fmap.stretch)
        _check_eigenvalues(domain, A, list(range(1, partition.count)))
        residual = piola_residual(domain)
        if residual > PIOLA_TOL:
            logger.warning(f"Piola residual {residual:.3e} above {PIOLA_TOL:g}; the boundary may be too rough for the grid.")
        logger.debug(f"Assembled coefficients: |I - A| <= {float(np.max(np.abs(A - np.eye(2)[:, :, None, None]))):.3e}")
        return TransformedCoeffs(A=A, B=B, det=fmap.det_jacobian)

    fmap, shift = window_flattening(domain, chart_index)
    slope, stretch, det = (np.roll(arr, shift, axis=-2) for arr in (fmap.slope, fmap.stretch, fmap.det_jacobian))
    A, B = _coefficient_arrays(slope, stretch)
    _check_eigenvalues(domain, A, [chart_index])
    logger.debug(f"Assembled {partition.labels[chart_index]} coefficients with N={fmap.scaling:g}.")
    return TransformedCoeffs(A=A, B=B, det=det, chart_index=chart_index)


def chart_deviation(domain: RoughDomain, global_coeffs: Optional[TransformedCoeffs] = None) -> float:
    """
    Largest |A_j - A| on the boundary row where xi_j is the only chart
    cutoff, over all window charts. Both flattenings reduce to the boundary
    slope there.
    """
    if global_coeffs is None:
        global_coeffs = assemble_coeffs(domain)
    partition = domain.partition
    worst = 0.0
    for j in range(1, partition.count):
        core = partition.cutoffs[j][:, 0] > 1.0 - 1e-12
        if not np.any(core):
            continue
        local = assemble_coeffs(domain, j)
        worst = max(worst, float(np.max(np.abs(local.A[..., 0][..., core] - global_coeffs.A[..., 0][..., core]))))
    return worst


def piola_residual(domain: RoughDomain) -> float:
    """max |Div B| = max |∂_x d - ∂_z a| away from the boundary row, where both sides are smooth."""
    fmap = domain.flattening
    grid = domain.grid
    eps = 1e-5
    t = grid.z / fmap.scaling
    kernel = fmap.mollifier
    _, _, Tt_right = chart_service._extension(fmap.chart, grid.x + eps, t, kernel)
    _, _, Tt_left = chart_service._extension(fmap.chart, grid.x - eps, t, kernel)
    dx_d = (Tt_right - Tt_left) / (2.0 * eps * fmap.scaling)
    residual = dx_d - chart_service.slope_z_derivative(fmap, eps)
    return float(np.max(np.abs(residual[:, 1:])))


# Perturbation and localization
def perturbation_terms(
    v: np.ndarray,
    v_grad: np.ndarray,
    theta: np.ndarray,
    coeffs: TransformedCoeffs,
    slope: np.ndarray,
    alpha: np.ndarray,
    H: Optional[np.ndarray] = None,
    implicit_friction: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Returns (S, s_div, g_bc, G_bc) at the iterate (v, θ):

        S     = ∇v (A - I) - θ (B - I)
        s_div = (I - B):∇v
        g_bc  = v·e_n - v·ν                        (e_n = -e_z, ν the outward unit normal)
        G_bc  = -(√(1+a^2) α v·τ̃ - ᾱ v_x) - a c_z  (τ̃ = (1, a), c the conormal flux at z = 0)

    ᾱ = implicit_friction is the part of the friction the half-space
    solver imposes itself.
    """
    A, B = coeffs.A, coeffs.B
    eye = np.eye(2)[:, :, None, None]
    S = np.einsum("ij...,jk...->ik...", v_grad, A - eye) - theta * (B - eye)
    s_div = np.einsum("ij...,ij...->...", eye - B, v_grad)

    vx, vz = v[0][:, 0], v[1][:, 0]
    stretch = np.sqrt(1.0 + slope ** 2)
    g_bc = -vz - (slope * vx - vz) / stretch

    H_zz = np.zeros_like(slope) if H is None else H[1, 1][:, 0]
    flux_z = np.einsum("j...,j...->...", v_grad[1, :, :, 0], A[:, 1, :, 0])
    c_z = -(flux_z - theta[:, 0] + H_zz)
    G_bc = -(stretch * alpha * (vx + slope * vz) - implicit_friction * vx) - slope * c_z
    return S, s_div, g_bc, G_bc


def localize(
    partition: PartitionOfUnity,
    flux: np.ndarray,
    force: np.ndarray,
    h: np.ndarray,
    g_normal: np.ndarray,
    G_tangential: np.ndarray,
    v: np.ndarray,
    v_grad: np.ndarray,
    theta: np.ndarray,
) -> List[ChartData]:
    """
    Chart data for ξ_j v, ξ_j θ. Commutators enter as forces:

        F_j = ξ flux
        f_j = ξ force - flux ∇ξ - v Δξ - 2 ∇v ∇ξ + θ ∇ξ
        h_j = ξ h + v·∇ξ
        g_j = ξ g_normal,  G_j = ξ G_tangential - ∂_z ξ v_x   at z = 0

    Summed over j the cutoff derivatives cancel and the global data return.
    """
    charts = []
    for j in range(partition.count):
        xi = partition.cutoffs[j]
        dxi = partition.gradients[j]
        lap_xi = partition.laplacians[j]
        f_j = (
            xi * force
            - np.einsum("ij...,j...->i...", flux, dxi)
            - v * lap_xi
            - 2.0 * np.einsum("ij...,j...->i...", v_grad, dxi)
            + theta * dxi
        )
        charts.append(
            ChartData(
                chart_index=j,
                F=xi * flux,
                f=f_j,
                h=xi * h + np.einsum("i...,i...->...", v, dxi),
                g_normal=xi[:, 0] * g_normal,
                G_tangential=xi[:, 0] * G_tangential - dxi[1][:, 0] * v[0][:, 0],
            )
        )
    return charts


# Sweeps
def _problem_arrays(problem: StokesProblem):
    grid = problem.domain.grid
    nx, nz = grid.shape
    taper = grid.pad_taper
    F = np.zeros((2, 2, nx, nz)) if problem.F is None else neumann_service.grid_values(problem.F, grid) * taper
    f = np.zeros((2, nx, nz)) if problem.f is None else neumann_service.grid_values(problem.f, grid) * taper
    h = np.zeros((nx, nz)) if problem.h is None else neumann_service.grid_values(problem.h, grid) * taper
    g = np.zeros(nx) if problem.g_normal is None else np.array(problem.g_normal)
    G = np.zeros(nx) if problem.G_tangential is None else np.array(problem.G_tangential)
    return F, f, h, g, G


def _check_compatibility(grid, coeffs, slope, h, g) -> float:
    volume = grid.integrate(coeffs.det * h)
    surface = grid.boundary_integral(np.sqrt(1.0 + slope ** 2) * g)
    defect = float(volume - surface)
    scale = max(float(grid.integrate(np.abs(coeffs.det * h))) + grid.boundary_integral(np.abs(g)), TINY)
    if abs(defect) / scale > settings.compatibility_tol:
        logger.error(f"Stokes data incompatible: ∫h - ∫g = {defect:.3e}.")
        raise CompatibilityError(f"∫h - ∫g_normal = {defect:.3e} violates compatibility", defect=defect)
    return defect


def _row_divergence(grid, T: np.ndarray) -> np.ndarray:
    """(Div T)_i = ∂_x T_ix + ∂_z T_iz, the z-derivative taken on split pieces."""
    return np.array([
        grid.derivative(T[i, 0], PARITY_TABLE.tensor[i][0], 0)
        + ParityField.split(grid, T[i, 1], PARITY_TABLE.tensor[i][1]).dz().values
        for i in range(2)
    ])


def _residuals(grid, coeffs, slope, alpha, v, v_grad, theta, H, force, h, g, G) -> Dict[str, float]:
    """
    Residuals of the transformed system, relative:

        momentum    Div(∇v A - θ B + H) + det J f
        divergence  B:∇v - det J h
        normal      v·ν - g_normal,  slip  (conormal flux)·τ + α v·τ - G   at z = 0
    """
    B, A = coeffs.B, coeffs.A
    flux = np.einsum("ij...,jk...->ik...", v_grad, A) - theta * B
    div_flux = _row_divergence(grid, flux)
    div_H = _row_divergence(grid, H)
    momentum = div_flux + div_H + force
    mom_scale = max(grid.physical_max(div_flux) + grid.physical_max(div_H) + grid.physical_max(force), TINY)

    div_res = np.einsum("ij...,ij...->...", B, v_grad) - coeffs.det * h
    div_scale = max(grid.physical_max(v_grad) + grid.physical_max(coeffs.det * h), TINY)

    stretch = np.sqrt(1.0 + slope ** 2)
    vx, vz = v[0][:, 0], v[1][:, 0]
    normal = (slope * vx - vz) / stretch - g

    c = -(flux + H)[:, 1, :, 0]
    slip = (c[0] + slope * c[1]) / stretch ** 2 + alpha * (vx + slope * vz) / stretch - G
    bc_scale = max(
        float(np.max(np.abs(v_grad[:, :, :, 0]))) + float(np.max(np.abs(g))) + float(np.max(np.abs(G))),
        TINY,
    )
    return {
        "momentum": grid.physical_max(momentum) / mom_scale,
        "divergence": grid.physical_max(div_res) / div_scale,
        "normal": float(np.max(np.abs(normal))) / bc_scale,
        "slip": float(np.max(np.abs(slip))) / bc_scale,
    }


def picard_solve(
    problem: StokesProblem,
    tol: float = 1e-8,
    max_iter: int = 40,
    threads: Optional[int] = None,
) -> StokesSolution:
    """
    Fixed-point sweeps starting from v = 0, θ = 0.

    The constant mean friction is imposed implicitly by every chart solve;
    the rest of the friction and the curvature coupling are lagged. The
    pressure is normalized to zero det J-weighted mean after each sweep.
    """
    domain = problem.domain
    grid = domain.grid
    nx, nz = grid.shape
    coeffs = assemble_coeffs(domain)
    slope = domain.boundary_slope
    alpha = np.array(problem.alpha)
    mean_friction = float(np.mean(alpha))
    F, f, h, g, G = _problem_arrays(problem)
    _check_compatibility(grid, coeffs, slope, h, g)

    H = np.einsum("ij...,jk...->ik...", F, coeffs.B)
    force = coeffs.det * f
    partition = domain.partition
    monitor = SweepMonitor(tol, max_iter, "stokes", domain.atlas.delta, settings.residual_tol)
    state = IterationState(
        velocity=np.zeros((2, nx, nz)),
        pressure=np.zeros((nx, nz)),
        velocity_grad=np.zeros((2, 2, nx, nz)),
        velocity_hessian=np.zeros((2, 2, 2, nx, nz)),
    )
    pressure_grad = np.zeros((2, nx, nz))
    weight = grid.integrate(coeffs.det)
    converged = False

    for sweep in range(1, max_iter + 1):
        v, v_grad, theta = state.velocity, state.velocity_grad, state.pressure
        S, s_div, g_bc, G_bc = perturbation_terms(v, v_grad, theta, coeffs, slope, alpha, H, mean_friction)
        flux = (H + S) * grid.pad_taper
        h_flat = coeffs.det * h + s_div
        g_flat = g + g_bc
        G_flat = (1.0 + slope ** 2) * G + G_bc
        charts = localize(partition, flux, force, h_flat, g_flat, G_flat, v, v_grad, theta)

        def solve_chart(data: ChartData):
            return halfspace_service.solve_halfspace_arrays(
                grid, data.F, data.f, data.h, data.g_normal, data.G_tangential,
                friction=mean_friction, check_padding=False, strict=False,
            )

        pieces = map_charts(solve_chart, charts, threads)
        new_v = sum(piece.u.values for piece in pieces)
        new_theta = sum(piece.pi.values for piece in pieces)
        new_theta = new_theta - grid.integrate(coeffs.det * new_theta) / weight
        new_grad = sum(piece.grad for piece in pieces)
        new_hess = sum(piece.hessian for piece in pieces)
        pressure_grad = sum(piece.pressure_grad for piece in pieces)

        mask = grid.physical_mask
        increment = relative_increment(
            np.concatenate([(new_v * mask).ravel(), (new_theta * mask).ravel()]),
            np.concatenate([(v * mask).ravel(), (theta * mask).ravel()]),
        )
        residuals = _residuals(grid, coeffs, slope, alpha, new_v, new_grad, new_theta, H, force, h, g, G)
        state.velocity, state.pressure = new_v, new_theta
        state.velocity_grad, state.velocity_hessian = new_grad, new_hess
        state.chart_fields = [piece.u.values for piece in pieces]
        if monitor.record(sweep, increment, residuals, partition.count):
            converged = not monitor.stalled
            break

    state.history, state.factors = monitor.history, monitor.factors
    if not converged:
        logger.warning(f"Rough Stokes solve stopped after {max_iter} sweeps without meeting tol={tol:g}; result is partial.")

    residuals = _residuals(
        grid, coeffs, slope, alpha, state.velocity, state.velocity_grad, state.pressure, H, force, h, g, G
    )
    residuals["increment"] = monitor.history[-1].increment if monitor.history else 0.0
    residuals["interior"] = max(residuals["momentum"], residuals["divergence"])
    physical_grad = np.einsum("ik...,jk...->ij...", state.velocity_grad, coeffs.B) / coeffs.det
    solution = StokesSolution(
        u=half_field(grid, state.velocity, Rank.VECTOR),
        pi=half_field(grid, state.pressure, Rank.SCALAR),
        grad=physical_grad,
        hessian=state.velocity_hessian,
        pressure_grad=pressure_grad,
        residuals=residuals,
        sweeps=monitor.accepted_sweeps if converged else len(monitor.history),
        factors=state.factors,
        history=state.history,
        converged=converged,
        partial=not converged,
        delta=domain.atlas.delta,
    )
    if problem.index.s not in (1.0, 2.0):
        return solution
    return solution.model_copy(update={"estimate": verify_estimate(problem, solution)})


def nondivergence_solve(
    problem: StokesProblem,
    tol: float = 1e-8,
    max_iter: int = 40,
    threads: Optional[int] = None,
) -> StokesSolution:
    """
    Folds the force f into divergence form, F' = F + ∇ϕ with Δϕ_i = f_i,
    and runs the sweeps on F'. The Neumann data of ϕ_i are the constant
    χ_i = ∫f_i / |∂Ω|, so the slip data pick up τ·χ.
    """
    domain = problem.domain
    grid = domain.grid
    if problem.f is None or not np.any(problem.f.values):
        return picard_solve(problem.model_copy(update={"f": None}), tol, max_iter, threads)

    f = neumann_service.grid_values(problem.f, grid) * grid.pad_taper
    slope = domain.boundary_slope
    stretch = np.sqrt(1.0 + slope ** 2)
    det = domain.flattening.det_jacobian
    length = grid.boundary_integral(stretch)

    potential = np.zeros((2, 2) + grid.shape)
    chi = np.zeros(2)
    for i in range(2):
        chi[i] = float(grid.integrate(det * f[i])) / length
        neumann = neumann_service.solve_neumann_rough(
            NeumannProblem(domain=domain, f=half_field(grid, f[i], Rank.SCALAR), chi=np.full(grid.nx, chi[i])),
            tol=tol,
            max_iter=max_iter,
            threads=threads,
        )
        potential[i] = neumann.grad
        logger.info(f"Force component {i} folded into divergence form in {neumann.sweeps} sweeps.")

    F = potential if problem.F is None else neumann_service.grid_values(problem.F, grid) + potential
    G = np.zeros(grid.nx) if problem.G_tangential is None else np.array(problem.G_tangential)
    G = G + (chi[0] + slope * chi[1]) / stretch
    folded = problem.model_copy(
        update={"F": half_field(grid, F, Rank.TENSOR), "f": None, "G_tangential": G}
    )
    return picard_solve(folded, tol, max_iter, threads)


# Estimates
def _lp_domain(grid, det, values: np.ndarray, p: float) -> float:
    axes = tuple(range(values.ndim - 2))
    magnitude = np.sqrt(np.sum(values ** 2, axis=axes)) if axes else np.abs(values)
    return float(grid.integrate(det * magnitude ** p, physical_only=True) ** (1.0 / p))


def _lp_curve(grid, stretch, values: np.ndarray, p: float, order: int = 0) -> float:
    total = grid.boundary_integral(stretch * np.abs(values) ** p)
    if order >= 1:
        total += grid.boundary_integral(stretch * np.abs(np.gradient(values, grid.dx)) ** p)
    return float(total ** (1.0 / p))


def _spatial_gradient(grid, values: np.ndarray) -> np.ndarray:
    """Finite-difference gradient as a new leading component axis."""
    dx_part, dz_part = np.gradient(values, grid.dx, grid.dz, axis=(-2, -1))
    return np.stack([dx_part, dz_part])


def verify_estimate(
    problem: StokesProblem,
    solution: StokesSolution,
    index: Optional[SobolevIndex] = None,
) -> EstimateReport:
    """
    Both sides of the maximal-regularity estimate on the chart pullback.

    s = 1: ‖∇u‖ + ‖π‖ against ‖F‖ + ‖f‖ + ‖h‖ + ‖g‖ + ‖G‖.
    s = 2: ‖∇²v‖ + ‖∇θ‖ against ‖f‖ + ‖∇F‖ + ‖∇h‖ + boundary W^{1,p} norms.
    Zero data give a degenerate report instead of a ratio.
    """
    index = index or problem.index
    s, p = index.s, index.p
    domain = problem.domain
    grid = domain.grid
    det = domain.flattening.det_jacobian
    stretch = np.sqrt(1.0 + domain.boundary_slope ** 2)
    F, f, h, g, G = _problem_arrays(problem)

    if s == 1.0:
        parts = {
            "grad_u": _lp_domain(grid, det, solution.grad, p),
            "pi": _lp_domain(grid, det, solution.pi.values, p),
            "F": _lp_domain(grid, det, F, p),
            "f": _lp_domain(grid, det, f, p),
            "h": _lp_domain(grid, det, h, p),
            "g_normal": _lp_curve(grid, stretch, g, p),
            "G_tangential": _lp_curve(grid, stretch, G, p),
        }
        lhs = parts["grad_u"] + parts["pi"]
        rhs = parts["F"] + parts["f"] + parts["h"] + parts["g_normal"] + parts["G_tangential"]
    elif s == 2.0:
        pressure_grad = solution.pressure_grad if solution.pressure_grad is not None else _spatial_gradient(grid, solution.pi.values)
        parts = {
            "hess_u": _lp_domain(grid, det, solution.hessian, p),
            "grad_pi": _lp_domain(grid, det, pressure_grad, p),
            "f": _lp_domain(grid, det, f, p),
            "grad_F": _lp_domain(grid, det, _spatial_gradient(grid, F), p),
            "grad_h": _lp_domain(grid, det, _spatial_gradient(grid, h), p),
            "g_normal": _lp_curve(grid, stretch, g, p, 1),
            "G_tangential": _lp_curve(grid, stretch, G, p, 1),
        }
        lhs = parts["hess_u"] + parts["grad_pi"]
        rhs = parts["f"] + parts["grad_F"] + parts["grad_h"] + parts["g_normal"] + parts["G_tangential"]
    else:
        raise UnsupportedIndexError(f"estimate sides are assembled for s in {{1, 2}}, got s={s}")

    if rhs <= TINY:
        logger.info(f"Estimate at (s, p)=({s}, {p}) is degenerate: data norm vanishes.")
        return EstimateReport(s=s, p=p, lhs=lhs, rhs=rhs, ratio=None, degenerate=True, constituents=parts)
    return EstimateReport(s=s, p=p, lhs=lhs, rhs=rhs, ratio=lhs / rhs, constituents=parts)


def estimate_spread(
    domain: RoughDomain,
    alpha: np.ndarray,
    index: SobolevIndex,
    samples: int = 20,
    seed: int = 0,
    tol: float = 1e-8,
    max_iter: int = 40,
    threads: Optional[int] = None,
) -> SpreadReport:
    """Estimate ratios over seeded random divergence-form data on a fixed domain."""
    ratios: List[float] = []
    for k in range(samples):
        F = fixtures_service.random_band_limited(domain.grid, Rank.TENSOR, seed + k)
        problem = StokesProblem(domain=domain, F=F, alpha=alpha, index=index)
        solution = picard_solve(problem, tol, max_iter, threads)
        report = solution.estimate or verify_estimate(problem, solution, index)
        if report.ratio is not None:
            ratios.append(report.ratio)
    if not ratios:
        return SpreadReport(samples=samples, min_ratio=None, max_ratio=None, spread=None)
    low, high = min(ratios), max(ratios)
    logger.info(f"Estimate ratios over {len(ratios)} samples in [{low:.4g}, {high:.4g}]")
    return SpreadReport(samples=samples, min_ratio=low, max_ratio=high, spread=high / max(low, TINY))
