"""
Corner singularities of perfect-slip Stokes flow in wedges.

w = r^κ sin(κθ) with κ = π/θ_wedge vanishes with its Laplacian on both
edges, so u = (-∂_y w, ∂_x w) is a Stokes flow with perfect slip. Near the
corner |∇u| ~ r^(κ-2) and |∇²u| ~ r^(κ-3); the fitted exponents decide
whether ∇²u is p-integrable at the corner.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.fft import dctn, idctn
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator

from config import settings
from core.exceptions import SharpnessError
from core.resource_utils import get_fixture
from models import BoundaryChart, GridField, Rank, WedgeDomain
from schemas import SharpnessRow

logger = logging.getLogger(__name__)

THRESHOLD_ANGLES = (math.pi / 2.0, 3.0 * math.pi / 4.0, 7.0 * math.pi / 8.0)
THRESHOLD_EXPONENTS = (1.02, 1.5, 2.5)
ANGLE_SAMPLES = 96


# Grid
def wedge_grid(cells: int = 512, half_width: Optional[float] = None) -> GridField:
    """
    Zero field on the square [-R, R]^2 with nodes offset by half a spacing,
    so the corner at the origin is never sampled.
    """
    R = half_width if half_width is not None else float(get_fixture("sharpness").get("half_width", 1.0))
    h = 2.0 * R / cells
    origin = (-R + 0.5 * h, -R + 0.5 * h)
    return GridField(extent=(2.0 * R, 2.0 * R), nodes=(cells, cells), values=np.zeros((cells, cells)), origin=origin)


def _polar(field: GridField):
    X, Y = field.mesh()
    return np.hypot(X, Y), np.mod(np.arctan2(Y, X), 2.0 * math.pi)


def _edge_distance(r: np.ndarray, angle: np.ndarray, theta: float) -> np.ndarray:
    """Distance to the nearer of the two edge rays at angles 0 and theta."""
    distances = []
    for edge in (0.0, theta):
        delta = np.abs(np.mod(angle - edge + math.pi, 2.0 * math.pi) - math.pi)
        distances.append(np.where(delta <= math.pi / 2.0, r * np.sin(delta), r))
    return np.minimum(*distances)


def interior_window(domain: WedgeDomain, field: GridField, margin_cells: float = 3.0, inner_radius: Optional[float] = None) -> np.ndarray:
    """Nodes inside the wedge, at least margin_cells spacings from both edges and outside the inner ball."""
    h = field.spacing[0]
    r, angle = _polar(field)
    inner = inner_radius if inner_radius is not None else margin_cells * h
    inside = angle < domain.theta
    return inside & (_edge_distance(r, angle, domain.theta) >= margin_cells * h) & (r >= inner)


# Stream function and velocity
def wedge_stream(domain: WedgeDomain, grid: GridField) -> GridField:
    """w = r^κ sin(κθ) inside the wedge, zero outside."""
    r, angle = _polar(grid)
    kappa = domain.kappa
    w = np.where(angle <= domain.theta, r ** kappa * np.sin(kappa * np.minimum(angle, domain.theta)), 0.0)
    return grid.with_values(w, Rank.SCALAR)


def edge_values(domain: WedgeDomain, w: GridField, radii: Sequence[float]) -> float:
    """
    Largest |w| on both edge rays at the given radii, interpolated from the
    grid. The edges fall between nodes, so a field that vanishes there reads
    O(h) here.
    """
    radii = np.asarray(radii, dtype=float)
    interpolator = RegularGridInterpolator((w.coordinates(0), w.coordinates(1)), w.values)
    worst = 0.0
    for edge in (0.0, domain.theta):
        points = np.column_stack([radii * math.cos(edge), radii * math.sin(edge)])
        worst = max(worst, float(np.max(np.abs(interpolator(points)))))
    return worst


def velocity_from_stream(w: GridField) -> GridField:
    """u = (-∂_y w, ∂_x w) with centered differences."""
    hx, hy = w.spacing
    wx, wy = np.gradient(w.values, hx, hy)
    return w.with_values(np.array([-wy, wx]), Rank.VECTOR)


def divergence(u: GridField) -> np.ndarray:
    hx, hy = u.spacing
    return np.gradient(u.values[0], hx, axis=0) + np.gradient(u.values[1], hy, axis=1)


def _jacobian(values: np.ndarray, spacing) -> np.ndarray:
    """d_j of every component, appended as a new axis after the component axes."""
    hx, hy = spacing
    dx, dy = np.gradient(values, hx, hy, axis=(-2, -1))
    return np.stack([dx, dy], axis=-3)


# Pressure
def _laplacian5(values: np.ndarray, h: float) -> np.ndarray:
    """Five-point Laplacian on interior nodes; the outer ring is left at zero."""
    out = np.zeros_like(values)
    out[..., 1:-1, 1:-1] = (
        values[..., 2:, 1:-1] + values[..., :-2, 1:-1] + values[..., 1:-1, 2:] + values[..., 1:-1, :-2]
        - 4.0 * values[..., 1:-1, 1:-1]
    ) / h ** 2
    return out


def reconstruct_pressure(lap_u: np.ndarray, h: float) -> np.ndarray:
    """
    Solves ∇π = Δu in the least-squares sense on a box: Δπ = Div(Δu) with
    Neumann data Δu·n, as a cell-centered finite-volume problem diagonalized
    by the type-II cosine transform. Zero mean.
    """
    lx, ly = lap_u
    nx, ny = lx.shape
    rhs = np.zeros((nx, ny))
    face_x = 0.5 * (lx[1:, :] + lx[:-1, :])
    face_y = 0.5 * (ly[:, 1:] + ly[:, :-1])
    rhs[:-1, :] += face_x / h
    rhs[1:, :] -= face_x / h
    rhs[:, :-1] += face_y / h
    rhs[:, 1:] -= face_y / h
    rhs[0, :] -= lx[0, :] / h
    rhs[-1, :] += lx[-1, :] / h
    rhs[:, 0] -= ly[:, 0] / h
    rhs[:, -1] += ly[:, -1] / h

    eig_x = (2.0 * np.cos(math.pi * np.arange(nx) / nx) - 2.0) / h ** 2
    eig_y = (2.0 * np.cos(math.pi * np.arange(ny) / ny) - 2.0) / h ** 2
    symbol = eig_x[:, None] + eig_y[None, :]
    spectrum = dctn(rhs, type=2, norm="ortho")
    spectrum[0, 0] = 0.0
    symbol[0, 0] = 1.0
    pressure = idctn(spectrum / symbol, type=2, norm="ortho")
    return pressure - np.mean(pressure)


def momentum_residual(domain: WedgeDomain, u: GridField, inner_radius: Optional[float] = None) -> Dict[str, float]:
    """
    Reconstructs π on the largest box of the first quadrant inside the
    wedge window and evaluates -Δu + ∇π there, relative to max |Δu| + max |∇u|.
    """
    h = u.spacing[0]
    if domain.theta < math.pi / 2.0:
        raise SharpnessError(f"the pressure check needs an opening of at least pi/2, got {domain.theta:.4f}")
    lo = 16.0 * h if inner_radius is None else inner_radius
    hi = 0.5 * float(np.max(u.coordinates(0)))
    rows = np.flatnonzero((u.coordinates(0) >= lo) & (u.coordinates(0) <= hi))
    cols = np.flatnonzero((u.coordinates(1) >= lo) & (u.coordinates(1) <= hi))
    if rows.size < 8 or cols.size < 8:
        raise SharpnessError(f"box [{lo:.4g}, {hi:.4g}]^2 is too small for the pressure check")
    box = np.ix_(rows, cols)

    values = u.values[:, rows[0] - 1: rows[-1] + 2, cols[0] - 1: cols[-1] + 2]
    lap_u = _laplacian5(values, h)[:, 1:-1, 1:-1]
    pressure = reconstruct_pressure(lap_u, h)
    grad_pi = np.array(np.gradient(pressure, h, h))
    residual = -lap_u + grad_pi
    scale = max(float(np.max(np.abs(lap_u))) + float(np.max(np.abs(_jacobian(u.values, u.spacing)[..., box[0], box[1]]))), 1e-300)
    return {
        "momentum": float(np.max(np.abs(residual[:, 1:-1, 1:-1]))) / scale,
        "pressure_range": float(np.ptp(pressure)),
    }


# Exponents
def default_radii(field: GridField, count: int = 8) -> np.ndarray:
    fixture = get_fixture("sharpness")
    h = field.spacing[0]
    inner = float(fixture.get("inner_radius_cells", 16)) * h
    outer = float(fixture.get("outer_radius_fraction", 0.4)) * 0.5 * field.extent[0]
    return np.geomspace(inner, outer, count)


def _circle_sup(domain: WedgeDomain, field: GridField, magnitude: np.ndarray, radius: float, margin_cells: float) -> float:
    h = field.spacing[0]
    margin = math.asin(min(1.0, margin_cells * h / radius))
    if domain.theta - 2.0 * margin <= 0.0:
        raise SharpnessError(f"radius {radius:.4g} too small for the wedge stencil margin")
    angles = np.linspace(margin, domain.theta - margin, ANGLE_SAMPLES)
    points = np.column_stack([radius * np.cos(angles), radius * np.sin(angles)])
    interpolator = RegularGridInterpolator((field.coordinates(0), field.coordinates(1)), magnitude)
    return float(np.max(interpolator(points)))


def _fit_exponent(radii: np.ndarray, sups: np.ndarray) -> float:
    slope, _ = np.polyfit(np.log(radii), np.log(sups), 1)
    return float(slope)


def measure_exponent(
    domain: WedgeDomain,
    u: GridField,
    radii: Optional[Sequence[float]] = None,
    order: int = 1,
    margin_cells: float = 4.0,
) -> float:
    """
    Least-squares slope of log sup_{|x|=r} |∇^order u| against log r over
    the given radii; the corner sits at the origin.
    """
    radii = default_radii(u) if radii is None else np.asarray(radii, dtype=float)
    if radii.size < 4:
        raise SharpnessError(f"exponent fit needs at least 4 radii, got {radii.size}")
    if np.min(radii) < 4.0 * u.spacing[0]:
        raise SharpnessError(f"smallest radius {np.min(radii):.4g} is closer than 4 spacings to the corner")

    derivative = u.values
    for _ in range(order):
        derivative = _jacobian(derivative, u.spacing)
    axes = tuple(range(derivative.ndim - 2))
    magnitude = np.sqrt(np.sum(derivative ** 2, axis=axes))
    sups = np.array([_circle_sup(domain, u, magnitude, float(r), margin_cells + order) for r in radii])
    if np.max(sups) <= 1e-8 * max(float(np.max(np.abs(u.values))), 1.0):
        logger.info(f"Derivative of order {order} vanishes near the corner for theta={domain.theta:.4f}.")
        return 0.0
    exponent = _fit_exponent(radii, sups)
    logger.debug(f"theta={domain.theta:.4f}, order {order}: exponent {exponent:.4f} (analytic {domain.kappa - 1 - order:.4f})")
    return exponent


def derivative_vanishes(domain: WedgeDomain, u: GridField, radii: Optional[Sequence[float]] = None, order: int = 2) -> bool:
    """True when ∇^order u is zero to rounding on every radius, as for integer κ <= order."""
    radii = default_radii(u) if radii is None else np.asarray(radii, dtype=float)
    derivative = u.values
    for _ in range(order):
        derivative = _jacobian(derivative, u.spacing)
    magnitude = np.sqrt(np.sum(derivative ** 2, axis=tuple(range(derivative.ndim - 2))))
    sups = [_circle_sup(domain, u, magnitude, float(r), 4.0 + order) for r in radii]
    return max(sups) <= 1e-8 * max(float(np.max(np.abs(u.values))), 1.0)


# Boundary identities
def tangential_identity_check(w: GridField, chart: BoundaryChart, floor: Optional[float] = None) -> Dict[str, float]:
    """
    Along the graph y = φ(x) where w vanishes: ∂_x w + ∂_y w φ' = 0. Where
    ∂_y w exceeds the positivity floor, the slope is also recovered as
    -∂_x w / ∂_y w and compared with φ'. Nodes below the floor are skipped
    and counted.
    """
    floor = settings.hopf_floor if floor is None else floor
    x_nodes, y_nodes = w.coordinates(0), w.coordinates(1)
    spline = RectBivariateSpline(x_nodes, y_nodes, w.values)

    nodes = chart.sample_nodes
    nodes = nodes[(nodes > x_nodes[2]) & (nodes < x_nodes[-3])]
    heights = chart.evaluate(nodes)
    keep = (heights > y_nodes[2]) & (heights < y_nodes[-3])
    nodes, heights = nodes[keep], heights[keep]
    if nodes.size == 0:
        raise SharpnessError("the chart graph does not cross the sampled box")
    slope = chart.evaluate(nodes, derivative=1)

    wx = spline.ev(nodes, heights, dx=1)
    wy = spline.ev(nodes, heights, dy=1)
    identity = wx + wy * slope

    positive = wy > floor
    skipped = int(np.sum(~positive))
    if not np.any(positive):
        logger.error(f"Normal derivative below the floor {floor:g} at all {nodes.size} boundary nodes.")
        raise SharpnessError(f"normal derivative below {floor:g} at every boundary node")
    recovered = -wx[positive] / wy[positive]
    if skipped:
        logger.warning(f"Skipped {skipped} of {nodes.size} boundary nodes below the positivity floor {floor:g}.")
    scale = max(float(np.max(np.abs(wx))) + float(np.max(np.abs(wy))), 1e-300)
    return {
        "identity": float(np.max(np.abs(identity))) / scale,
        "slope_error": float(np.max(np.abs(recovered - slope[positive]))),
        "skipped": float(skipped),
        "evaluated": float(nodes.size),
    }


def biharmonic_check(domain: WedgeDomain, w: GridField, inner_radius: Optional[float] = None) -> Dict[str, float]:
    """13-point bilaplacian inside the wedge window, w on the edges and Δw next to the edges."""
    h = w.spacing[0]
    inner = 16.0 * h if inner_radius is None else inner_radius
    lap = _laplacian5(w.values, h)
    bilap = _laplacian5(lap, h)
    window = interior_window(domain, w, 3.0, inner)
    r, angle = _polar(w)
    distance = _edge_distance(r, angle, domain.theta)
    near_edge = (angle < domain.theta) & (distance >= 2.0 * h) & (distance <= 3.0 * h) & (r >= inner)
    scale = max(float(np.max(np.abs(w.values[window]))) if np.any(window) else 0.0, 1e-300)
    radii = np.geomspace(inner, 0.4 * 0.5 * w.extent[0], 8)
    return {
        "bilaplacian": float(np.max(np.abs(bilap[window]))) * h ** 4 / scale if np.any(window) else 0.0,
        "boundary_w": edge_values(domain, w, radii) / scale,
        "boundary_laplacian": float(np.max(np.abs(lap[near_edge]))) * h ** 2 / scale if np.any(near_edge) else 0.0,
    }


# Threshold table
def predicted_bounded(kappa: float, p: float) -> bool:
    """‖∇²u‖_{L^p} stays bounded at the corner iff κ is an integer or p(3 - κ) < 2."""
    if abs(kappa - round(kappa)) < 1e-12:
        return True
    return p * (3.0 - kappa) < 2.0


def threshold_table(
    angles: Sequence[float] = THRESHOLD_ANGLES,
    exponents: Sequence[float] = THRESHOLD_EXPONENTS,
    cells: int = 512,
    radii_count: int = 8,
) -> List[SharpnessRow]:
    """
    For every opening angle: fits the exponents of ∇u and ∇²u, then for
    every p decides boundedness from p β + 2 > 0, β the second exponent.
    """
    rows: List[SharpnessRow] = []
    grid = wedge_grid(cells)
    radii = default_radii(grid, radii_count)
    for theta in angles:
        domain = WedgeDomain(theta=theta)
        u = velocity_from_stream(wedge_stream(domain, grid))
        first = measure_exponent(domain, u, radii, order=1)
        vanishing = derivative_vanishes(domain, u, radii, order=2)
        second = 0.0 if vanishing else measure_exponent(domain, u, radii, order=2)
        for p in exponents:
            bounded = vanishing or p * second + 2.0 > 0.0
            rows.append(
                SharpnessRow(
                    theta=theta,
                    kappa=domain.kappa,
                    p=p,
                    measured_exponent=first,
                    analytic_exponent=domain.kappa - 2.0,
                    second_exponent=second,
                    bounded=bounded,
                    predicted_bounded=predicted_bounded(domain.kappa, p),
                )
            )
        logger.info(f"theta={theta:.4f}: grad exponent {first:.4f} (analytic {domain.kappa - 2.0:.4f}), hessian exponent {second:.4f}")
    return rows
