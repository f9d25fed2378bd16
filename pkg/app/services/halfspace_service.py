"""
Stokes problem with slip data on the truncated half space.

    -Δu + ∇π = f + Div F,  Div u = h       in z > 0
    -u_z = g_normal,  -∂_z u_x - F_xz + friction u_x = G_tangential   on z = 0

The boundary data are taken by lifts (divergence, tangential traction).
What is left is a force with homogeneous slip conditions; jet pieces carry
the z-derivatives at z = 0 of the solution that the reflection parities
would kink, and the rest is reflected to the torus, solved by the Leray
symbol and restricted.
"""
import logging
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import settings
from core import spectral
from core.exceptions import DataError, PaddingError, ResidualError
from core.halfspace_grid import (
    HalfSpaceGrid,
    Parity,
    ParityField,
    divergence,
    gradient,
    hessian,
    jet_orders,
    row_divergence,
)
from models import PARITY_TABLE, GridField, HalfSpaceProblem, HalfSpaceSolution, Rank, half_field
from schemas import NormKind, NormReport, SobolevIndex
from services import neumann_service

logger = logging.getLogger(__name__)

TINY = 1e-300
Vector = List[ParityField]


# Whole space
def _torus_stokes(
    G: Optional[np.ndarray], f: Optional[np.ndarray], nodes, extent, h: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    -Δw + ∇q = Div G + f, Div w = h on the torus.

    The divergence enters as w += ∇Δ^{-1}h, q += h, which leaves the
    momentum balance unchanged. Returns w, q and the removed mean of f (the
    net force, which no periodic solution can balance).
    """
    kx, kz = spectral.frequency_grid(nodes, extent)
    k = (kx, kz)
    k2 = kx ** 2 + kz ** 2
    rhs = np.zeros((2,) + tuple(nodes), dtype=complex)
    if G is not None:
        Gh = spectral.forward(G, 2)
        for i in range(2):
            rhs[i] += 1j * (Gh[i, 0] * kx + Gh[i, 1] * kz)
    net = np.zeros(2)
    if f is not None:
        fh = spectral.forward(f, 2)
        net = fh[:, 0, 0].real / np.prod(nodes)
        rhs += fh
    if not np.all(np.isfinite(rhs)):
        raise DataError("whole-space data have a non-finite spectrum")

    nonzero = k2 > 0.0
    safe = np.where(nonzero, k2, 1.0)
    k_dot = kx * rhs[0] + kz * rhs[1]
    w_hat = np.where(nonzero, spectral.project_spectrum(rhs, k) / safe, 0.0)
    q_hat = np.where(nonzero, -1j * k_dot / safe, 0.0)
    if h is not None:
        hh = spectral.forward(h, 2)
        w_hat = w_hat + np.array([np.where(nonzero, -1j * k[i] * hh / safe, 0.0) for i in range(2)])
        q_hat = q_hat + np.where(nonzero, hh, 0.0)
    return spectral.backward(w_hat, 2), spectral.backward(q_hat, 2), net


def solve_whole_space(G: GridField, f: Optional[GridField] = None) -> Tuple[GridField, GridField]:
    """
    Leray solve on a periodic grid: ŵ = P(iĜξ + f̂)/|ξ|^2 and
    q̂ = (ξᵀĜξ - iξ·f̂)/|ξ|^2; modes with |ξ| = 0 are set to zero.
    """
    if G.rank is not Rank.TENSOR:
        raise DataError("solve_whole_space expects a tensor field G")
    mean = G.values.mean(axis=(-2, -1))
    if np.max(np.abs(mean)) > 0.0:
        logger.debug(f"Whole-space data mean {mean.ravel()} does not enter Div G; ignored.")
    w, q, net = _torus_stokes(G.values, None if f is None else f.values, G.nodes, G.extent)
    if np.max(np.abs(net)) > 0.0:
        logger.warning(f"Removed net force {net} from whole-space data.")
    return G.with_values(w, Rank.VECTOR), G.with_values(q, Rank.SCALAR)


def reflect_data(F: GridField, grid: HalfSpaceGrid) -> GridField:
    """Reflects a half-space tensor field to the torus with the tensor parities."""
    if F.rank is not Rank.TENSOR or tuple(F.nodes) != grid.shape:
        raise DataError("reflect_data expects a tensor field on the half-space grid")
    G = np.array(
        [[grid.reflect(F.values[i, j], PARITY_TABLE.tensor[i][j]) for j in range(2)] for i in range(2)]
    )
    return GridField(extent=grid.torus_extent, nodes=grid.torus_nodes, rank=Rank.TENSOR, values=G, origin=(grid.origin_x, 0.0))


# Lifts
def _divergence_lift(grid: HalfSpaceGrid, h: np.ndarray, g_normal: np.ndarray, strict: bool):
    theta = neumann_service.halfspace_neumann(grid, f=h, chi=g_normal, strict=strict, report=strict)
    return theta, [theta.u.dx(), theta.u.dz()]


def lift_divergence(h: GridField, g_normal: np.ndarray, grid: HalfSpaceGrid, strict: bool = True) -> GridField:
    """
    ∇ϑ for Δϑ = h, ∂_n ϑ = g_normal; subtracting it from u removes the
    divergence and normal-trace data.
    """
    _, v = _divergence_lift(grid, np.asarray(h.values), np.asarray(g_normal, dtype=float), strict)
    return half_field(grid, np.array([v[0].values, v[1].values]), Rank.VECTOR)


def _lift_profile(grid: HalfSpaceGrid) -> np.ndarray:
    """m(z) = z^2/2 g(z): m(0) = m'(0) = 0, m''(0) = 1."""
    Z = grid.mesh()[1]
    return 0.5 * Z ** 2 * grid.gaussian()


def _traction_lift(grid: HalfSpaceGrid, defect: np.ndarray) -> Vector:
    """Divergence-free c = curl(defect m) with c_z(0) = 0 and -∂_z c_x(0) = defect."""
    stream = ParityField.of(grid, defect[:, None] * _lift_profile(grid), Parity.EVEN)
    return [-stream.dz(), stream.dx()]


def lift_traction(traction_defect: np.ndarray, grid: HalfSpaceGrid) -> GridField:
    c = _traction_lift(grid, np.asarray(traction_defect, dtype=float))
    return half_field(grid, np.array([c[0].values, c[1].values]), Rank.VECTOR)


# Reduction
def _data_fields(grid: HalfSpaceGrid, F: np.ndarray, f: np.ndarray):
    """Data as torus pieces, every entry split against its natural parity."""
    Fp = [[ParityField.split(grid, F[i, j], PARITY_TABLE.tensor[i][j]) for j in range(2)] for i in range(2)]
    fp = [ParityField.split(grid, f[i], PARITY_TABLE.force[i]) for i in range(2)]
    return Fp, fp


def _stokes_jets(grid: HalfSpaceGrid, force: np.ndarray):
    """
    Wrong-parity z-derivatives at z = 0 of the solution of

        -Δu + ∇π = force,  Div u = 0,  u_z = ∂_z u_x = 0 on z = 0

    up to jet_order: odd orders of u_x and π, even orders of u_z. They follow
    from the equations differentiated in z at the boundary, starting from
    the two boundary conditions.
    """
    top = settings.jet_order
    odd, even = jet_orders(Parity.ODD, top - 2), jet_orders(Parity.EVEN, top - 1)
    fx = dict(zip(odd, grid.jets(force[0], odd)))
    fz = dict(zip(even, grid.jets(force[1], even)))

    def dx(values: np.ndarray, order: int = 1) -> np.ndarray:
        return spectral.derivative(values, (grid.length_x,), 0, order)

    zero = np.zeros(grid.nx)
    ux: Dict[int, np.ndarray] = {1: zero}
    uz: Dict[int, np.ndarray] = {0: zero}
    pi: Dict[int, np.ndarray] = {}
    for j in jet_orders(Parity.ODD, top):
        uz[j + 1] = -dx(ux[j])
        pi[j] = fz[j - 1] + dx(uz[j - 1], 2) + uz[j + 1]
        if j + 2 <= top:
            ux[j + 2] = -dx(ux[j], 2) + dx(pi[j]) - fx[j]
    return ux, uz, pi


def _parity_lift(grid: HalfSpaceGrid, force: np.ndarray) -> Tuple[Vector, ParityField]:
    """Jet pieces (W, Π) so that u - W, π - Π reflect with the solution parities."""
    ux, uz, pi = _stokes_jets(grid, force)
    return [ParityField.jet_piece(grid, ux), ParityField.jet_piece(grid, uz)], ParityField.jet_piece(grid, pi)


def _solve_reduced(grid, F, f, h, g_normal, G_tangential, strict: bool):
    """
    Frictionless pipeline. Returns velocity and pressure as torus pieces
    plus diagnostics.

    The divergence lift and the traction lift take the boundary data; the
    data and lift forces are summed into one force; its jet pieces are
    lifted off; the rest reflects smoothly and is solved on the torus.
    """
    Fp, fp = _data_fields(grid, F, f)
    div_F = row_divergence(Fp)
    fp = [fp[i] + div_F[i] for i in range(2)]
    velocity: List[Vector] = []
    defect_div = 0.0

    traction = np.array(G_tangential, dtype=float) + F[0, 1][:, 0]
    if np.any(h) or np.any(g_normal):
        theta, lift = _divergence_lift(grid, h, g_normal, strict)
        defect_div = theta.compatibility_defect
        fp = [fp[i] + lift[i].lap() for i in range(2)]
        traction = traction + lift[0].dz().trace()
        velocity.append(lift)

    if np.any(traction):
        c = _traction_lift(grid, traction)
        fp = [fp[i] + c[i].lap() for i in range(2)]
        velocity.append(c)

    force = np.array([fp[0].values, fp[1].values])
    W, beta = _parity_lift(grid, force)
    rest = [fp[0] + W[0].lap() - beta.dx(), fp[1] + W[1].lap() - beta.dz()]
    f_torus = np.array([grid.reflect(rest[i].values, PARITY_TABLE.force[i]) for i in range(2)])
    h_torus = grid.reflect(-divergence(W).values, Parity.EVEN)
    w, q, net = _torus_stokes(None, f_torus, grid.torus_nodes, grid.torus_extent, h_torus)

    velocity += [W, [ParityField(grid, w[0]), ParityField(grid, w[1])]]
    u = [ParityField(grid), ParityField(grid)]
    for piece_u in velocity:
        u = [u[i] + piece_u[i] for i in range(2)]
    pi = beta + ParityField(grid, q)
    net_force = float(net[0]) * grid.length_x * grid.length_z
    return u, pi, {"net_force": net_force, "compatibility": defect_div}


@lru_cache(maxsize=16)
def _traction_response(grid: HalfSpaceGrid) -> np.ndarray:
    """Symbol r(k): boundary tangential velocity per unit traction mode."""
    nx, nz = grid.shape
    impulse = np.zeros(nx)
    impulse[0] = 1.0
    zeros_t, zeros_v, zeros_s = np.zeros((2, 2, nx, nz)), np.zeros((2, nx, nz)), np.zeros((nx, nz))
    u, _, _ = _solve_reduced(grid, zeros_t, zeros_v, zeros_s, np.zeros(nx), impulse, strict=False)
    logger.debug(f"Computed traction response symbol on {grid.shape}")
    return np.fft.fft(u[0].trace())


def _friction_correction(grid: HalfSpaceGrid, slip_defect: np.ndarray, friction: float) -> np.ndarray:
    """Traction δ with δ + friction * r * δ = -slip_defect, mode by mode."""
    response = _traction_response(grid)
    denominator = 1.0 + friction * response
    good = np.abs(denominator) >= settings.friction_floor
    if not np.all(good):
        logger.warning(f"Friction correction skipped on {int(np.sum(~good))} modes with |1 + a r| below the floor.")
    spectrum = np.fft.fft(slip_defect)
    delta = np.where(good, -spectrum / np.where(good, denominator, 1.0), 0.0)
    return np.fft.ifft(delta).real


# Solve
def _check_padding(grid: HalfSpaceGrid, fields: Dict[str, np.ndarray]) -> None:
    for name, values in fields.items():
        level = grid.pad_max(values)
        if level > settings.pad_tolerance * max(1.0, float(np.max(np.abs(values)))):
            logger.error(f"Half-space data {name} reaches {level:.3e} in the pad zone.")
            raise PaddingError(f"{name} does not vanish in the pad zone (max {level:.3e} beyond z={grid.pad_start:.4g})")


def _lp_half(grid: HalfSpaceGrid, values: np.ndarray, p: float) -> float:
    axes = tuple(range(values.ndim - 2))
    magnitude = np.sqrt(np.sum(values ** 2, axis=axes)) if axes else np.abs(values)
    return float(grid.integrate(magnitude ** p, physical_only=True) ** (1.0 / p))


def _lp_boundary(grid: HalfSpaceGrid, values: np.ndarray, p: float, order: int = 0) -> float:
    total = grid.boundary_integral(np.abs(values) ** p)
    if order >= 1:
        slope = spectral.derivative(values, (grid.length_x,), 0)
        total += grid.boundary_integral(np.abs(slope) ** p)
    return float(total ** (1.0 / p))


def _estimate_norms(grid, index: SobolevIndex, u, pi, F, f, h, g_normal, G_tangential) -> Dict[str, NormReport]:
    """Both sides of the half-space estimate at s = 1 (flux form) or s = 2."""
    p = index.p
    if index.s == 1.0:
        lhs = _lp_half(grid, gradient(u), p) + _lp_half(grid, pi.values, p)
        rhs = (
            _lp_half(grid, F, p) + _lp_half(grid, f, p) + _lp_half(grid, h, p)
            + _lp_boundary(grid, g_normal, p) + _lp_boundary(grid, G_tangential, p)
        )
        regime = "flux-form"
    elif index.s == 2.0:
        Fp, _ = _data_fields(grid, F, np.zeros((2,) + grid.shape))
        grad_F = np.array([[[Fp[i][j].d(k).values for k in range(2)] for j in range(2)] for i in range(2)])
        h_field = ParityField.of(grid, h, Parity.EVEN)
        lhs = _lp_half(grid, hessian(u), p) + _lp_half(grid, np.array([pi.dx().values, pi.dz().values]), p)
        rhs = (
            _lp_half(grid, f, p) + _lp_half(grid, grad_F, p)
            + _lp_half(grid, np.array([h_field.dx().values, h_field.dz().values]), p)
            + _lp_boundary(grid, g_normal, p, 1) + _lp_boundary(grid, G_tangential, p, 1)
        )
        regime = "second-order"
    else:
        logger.info(f"Half-space estimate sides are reported for s in {{1, 2}}; skipping s={index.s}.")
        return {}
    params = {"s": index.s, "p": p}
    return {
        "lhs": NormReport(value=lhs, kind=NormKind.SOBOLEV, regime=regime, parameters=params),
        "rhs": NormReport(value=rhs, kind=NormKind.SOBOLEV, regime=regime, parameters=params),
    }


def solve_halfspace_arrays(
    grid: HalfSpaceGrid,
    F: np.ndarray,
    f: np.ndarray,
    h: np.ndarray,
    g_normal: np.ndarray,
    G_tangential: np.ndarray,
    friction: float = 0.0,
    index: Optional[SobolevIndex] = None,
    check_padding: bool = True,
    strict: bool = True,
    tol: Optional[float] = None,
) -> HalfSpaceSolution:
    """
    Array-level entry point. With check_padding the data must vanish in the
    pad; otherwise they are multiplied by the pad taper.
    """
    F, f, h = (np.asarray(a, dtype=float) for a in (F, f, h))
    g_normal = np.asarray(g_normal, dtype=float)
    G_tangential = np.asarray(G_tangential, dtype=float)
    if check_padding:
        _check_padding(grid, {"F": F, "f": f, "h": h})
    else:
        taper = grid.pad_taper
        F, f, h = F * taper, f * taper, h * taper

    u, pi, info = _solve_reduced(grid, F, f, h, g_normal, G_tangential, strict)

    def slip_of(vel: Vector) -> np.ndarray:
        return -vel[0].dz().trace() - F[0, 1][:, 0] + friction * vel[0].trace() - G_tangential

    if friction > 0.0:
        delta = _friction_correction(grid, slip_of(u), friction)
        zeros = np.zeros((2, 2) + grid.shape)
        du, dpi, _ = _solve_reduced(grid, zeros, zeros[0], zeros[0, 0], np.zeros(grid.nx), delta, strict=False)
        u = [u[i] + du[i] for i in range(2)]
        pi = pi + dpi

    Fp, fp = _data_fields(grid, F, f)
    div_F = row_divergence(Fp)
    grad_u = gradient(u)
    hess_u = hessian(u)
    grad_pi = np.array([pi.dx().values, pi.dz().values])
    lap_u = np.array([u[i].lap().values for i in range(2)])

    momentum = -lap_u + grad_pi - np.array([fp[i].values + div_F[i].values for i in range(2)])
    momentum[0] += info["net_force"] / (grid.length_x * grid.length_z)
    div_res = divergence(u).values - h
    normal = -u[1].trace() - g_normal
    slip = slip_of(u)

    mom_scale = max(grid.physical_max(lap_u) + grid.physical_max(grad_pi) + grid.physical_max(f), TINY)
    div_scale = max(grid.physical_max(grad_u) + grid.physical_max(h), TINY)
    bc_scale = max(
        float(np.max(np.abs(grad_u[:, :, :, 0]))) + float(np.max(np.abs(g_normal))) + float(np.max(np.abs(G_tangential))),
        TINY,
    )
    residuals = {
        "momentum": grid.physical_max(momentum) / mom_scale,
        "divergence": grid.physical_max(div_res) / div_scale,
        "normal": float(np.max(np.abs(normal))) / bc_scale,
        "slip": float(np.max(np.abs(slip))) / bc_scale,
    }
    residual_interior = max(residuals["momentum"], residuals["divergence"])
    residual_bc = max(residuals["normal"], residuals["slip"])
    if abs(info["net_force"]) > 0.0:
        logger.debug(f"Net tangential force defect {info['net_force']:.3e}")

    if tol is not None:
        stage = next((name for name, value in residuals.items() if value > tol), None)
        if stage is not None:
            logger.error(f"Half-space solve: {stage} residual {residuals[stage]:.3e} above tol={tol:g}.")
            raise ResidualError(f"{stage} residual {residuals[stage]:.3e} exceeds {tol:g}", stage=stage)

    norms = _estimate_norms(grid, index, u, pi, F, f, h, g_normal, G_tangential) if index is not None else {}
    return HalfSpaceSolution(
        u=half_field(grid, np.array([u[0].values, u[1].values]), Rank.VECTOR),
        pi=half_field(grid, pi.values, Rank.SCALAR),
        grad=grad_u,
        hessian=hess_u,
        pressure_grad=grad_pi,
        residual_interior=residual_interior,
        residual_bc=residual_bc,
        residuals=residuals,
        norms=norms,
        net_force_defect=info["net_force"],
        compatibility_defect=info["compatibility"],
    )


def solve_halfspace(problem: HalfSpaceProblem, check_padding: bool = True, tol: Optional[float] = None) -> HalfSpaceSolution:
    grid = problem.grid
    solution = solve_halfspace_arrays(
        grid,
        problem.F.values,
        problem.f.values,
        problem.h.values,
        problem.g_normal,
        problem.G_tangential,
        friction=problem.friction,
        index=problem.index,
        check_padding=check_padding,
        strict=check_padding,
        tol=tol,
    )
    logger.info(
        f"Solved half-space problem on {grid.shape}: interior residual {solution.residual_interior:.2e}, "
        f"boundary residual {solution.residual_bc:.2e}"
    )
    return solution
