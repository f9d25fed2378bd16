"""
Boundary charts, the mollifier extension T, the flattening Phi and its
inverse, strip atlases and the partition of unity.
"""
import logging
import math
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.special import roots_legendre

from config import settings
from core.exceptions import CoverageError, FlatteningError, OutOfRangeError
from core.halfspace_grid import HalfSpaceGrid, Parity
from core.resource_utils import get_fixture, get_profile, load_yaml_file
from models import (
    Atlas,
    BoundaryChart,
    ClosedFormProfile,
    FlatteningMap,
    InteriorPatch,
    MollifierKernel,
    PartitionOfUnity,
    ProfileKind,
    RoughDomain,
    SupportKind,
    half_field,
    GridField,
    Rank,
)
from schemas import AtlasFile, ChartFile

logger = logging.getLogger(__name__)


# Mollifier
def mollifier_density(y) -> np.ndarray:
    """Unnormalized bump exp(-1/(1-y^2)) on (-1, 1)."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - y[inside] ** 2))
    return out


@lru_cache(maxsize=8)
def mollifier(order: Optional[int] = None) -> MollifierKernel:
    """
    Gauss-Legendre form of the normalized mollifier.

    Weights are divided by their discrete sum, so the rule integrates
    constants exactly; the nodes are symmetric, so odd moments vanish.
    """
    n = order or settings.mollifier_nodes
    nodes, weights = roots_legendre(n)
    raw = weights * mollifier_density(nodes)
    mass = float(np.sum(raw))
    return MollifierKernel(nodes=nodes, weights=raw / mass, mass=mass)


@lru_cache(maxsize=1)
def _step_table() -> CubicSpline:
    y = np.linspace(-1.0, 1.0, 4097)
    cdf = cumulative_trapezoid(mollifier_density(y), y, initial=0.0)
    cdf /= cdf[-1]
    return CubicSpline(0.5 * (y + 1.0), cdf)


def smooth_step(t) -> np.ndarray:
    """Mollified Heaviside: 0 for t <= 0, 1 for t >= 1, the mollifier CDF in between."""
    t = np.asarray(t, dtype=float)
    out = np.clip(_step_table()(np.clip(t, 0.0, 1.0)), 0.0, 1.0)
    out = np.where(t <= 0.0, 0.0, out)
    return np.where(t >= 1.0, 1.0, out)


# Charts
def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def chart_from_profile(
    profile: ClosedFormProfile,
    r: float,
    h: float,
    support: SupportKind = SupportKind.COMPACT,
    nodes: int = 257,
    rotation_angle: float = 0.0,
    anchor: Sequence[float] = (0.0, 0.0),
    lipschitz: Optional[float] = None,
) -> BoundaryChart:
    """
    Samples a closed-form profile onto a chart grid and keeps the closed form
    as backing. The Lipschitz bound defaults to max|phi'| on a fine grid.
    """
    if support is SupportKind.PERIODIC:
        y = -r + (2.0 * r / nodes) * np.arange(nodes)
    else:
        y = np.linspace(-r, r, nodes)
    samples = profile.value(y)
    if support is SupportKind.COMPACT:
        samples[0] = samples[-1] = 0.0
    if lipschitz is None:
        fine = np.linspace(-r, r, 16 * nodes + 1)
        slope = float(np.max(np.abs(profile.derivative(fine)))) if profile.kind is not ProfileKind.ZERO else 0.0
        quotient = float(np.max(np.abs(np.diff(samples)) / (y[1] - y[0]))) if nodes > 1 else 0.0
        lipschitz = max(slope * (1.0 + 1e-6), quotient)
    return BoundaryChart(
        phi=samples,
        r=r,
        h=h,
        rotation=_rotation(rotation_angle),
        anchor=np.asarray(anchor, dtype=float),
        lipschitz=lipschitz,
        support=support,
        profile=profile,
    )


def chart_from_samples(
    samples: Sequence[float],
    r: float,
    h: float,
    support: SupportKind = SupportKind.COMPACT,
    rotation_angle: float = 0.0,
    anchor: Sequence[float] = (0.0, 0.0),
    lipschitz: Optional[float] = None,
) -> BoundaryChart:
    samples = np.asarray(samples, dtype=float)
    if lipschitz is None:
        values = np.append(samples, samples[0]) if support is SupportKind.PERIODIC else samples
        spacing = 2.0 * r / (samples.size if support is SupportKind.PERIODIC else samples.size - 1)
        lipschitz = float(np.max(np.abs(np.diff(values)))) / spacing
    return BoundaryChart(
        phi=samples,
        r=r,
        h=h,
        rotation=_rotation(rotation_angle),
        anchor=np.asarray(anchor, dtype=float),
        lipschitz=lipschitz,
        support=support,
    )


def catalog_profile(name: str) -> ClosedFormProfile:
    entry = get_profile(name)
    return ClosedFormProfile(kind=ProfileKind(entry["kind"]), params=entry.get("params", {}))


def chart_from_spec(spec: ChartFile) -> BoundaryChart:
    support = SupportKind(spec.support)
    if spec.profile is not None:
        profile = ClosedFormProfile(kind=ProfileKind(spec.profile.kind), params=spec.profile.params)
        return chart_from_profile(
            profile, spec.r, spec.h, support, spec.nodes, spec.rotation_angle, spec.anchor, spec.lipschitz
        )
    return chart_from_samples(spec.samples, spec.r, spec.h, support, spec.rotation_angle, spec.anchor, spec.lipschitz)


def load_chart(path: str) -> BoundaryChart:
    chart = chart_from_spec(ChartFile(**load_yaml_file(path)))
    logger.info(f"Loaded chart from {path}: r={chart.r}, K={chart.lipschitz:.4g}, support={chart.support.value}")
    return chart


def load_atlas_spec(path: str) -> AtlasFile:
    return AtlasFile(**load_yaml_file(path))


# Extension operator
def _extension(chart: BoundaryChart, zp: np.ndarray, t: np.ndarray, kernel: MollifierKernel):
    """T, d_z' T and d_t T at every (zp[i], t[k])."""
    y, w = kernel.nodes, kernel.weights
    T = np.empty((zp.size, t.size))
    Tx = np.empty_like(T)
    Tt = np.empty_like(T)
    for k, tk in enumerate(t):
        points = zp[:, None] - tk * y[None, :]
        phi = chart.evaluate(points)
        dphi = chart.evaluate(points, derivative=1)
        T[:, k] = phi @ w
        Tx[:, k] = dphi @ w
        Tt[:, k] = dphi @ (-y * w)
    return T, Tx, Tt


def mollifier_extend(chart: BoundaryChart, grid: HalfSpaceGrid) -> GridField:
    """
    Samples (T phi)(z', t) = ∫ zeta(y) phi(z' - t y) dy at the grid nodes,
    with t the grid height.
    """
    T, _, _ = _extension(chart, grid.x, grid.z, mollifier())
    return half_field(grid, T, Rank.SCALAR)


def _scan(chart: BoundaryChart, grid: HalfSpaceGrid, scaling: float, kernel: MollifierKernel):
    T, Tx, Tt = _extension(chart, grid.x, grid.z / scaling, kernel)
    det = 1.0 + Tt / scaling
    image = grid.z[None, :] + T
    bad_det = ~((det > 0.5) & (det <= 2.0))
    bad_mono = np.zeros_like(bad_det)
    bad_mono[:, 1:] = np.diff(image, axis=1) <= 0.0
    return T, Tx, det, bad_det | bad_mono


def build_flattening(chart: BoundaryChart, grid: HalfSpaceGrid, scaling: Optional[float] = None) -> FlatteningMap:
    """
    Builds Phi(z', z) = (z', z + T(z', z/N)) on the grid.

    Without an explicit N the smallest integer >= 2K + 2 passing the
    determinant and monotonicity scan is used. An explicit N that fails
    raises FlatteningError naming the first bad node and the N that works.
    """
    kernel = mollifier()
    K = chart.lipschitz
    first = max(1, math.ceil(2.0 * K + 2.0))
    if scaling is not None:
        T, Tx, det, bad = _scan(chart, grid, float(scaling), kernel)
        if np.any(bad):
            i, k = np.argwhere(bad)[0]
            required = _required_scaling(chart, grid, kernel, max(first, math.ceil(scaling) + 1))
            node = (float(grid.x[i]), float(grid.z[k]))
            logger.error(f"Flattening with N={scaling} fails at node {node}; N={required} needed.")
            raise FlatteningError(
                f"det J or monotonicity violated at node {node} with N={scaling}; use N >= {required}",
                node=node,
                required_scaling=required,
            )
        N = float(scaling)
    else:
        N = float(_required_scaling(chart, grid, kernel, first))
        T, Tx, det, _ = _scan(chart, grid, N, kernel)

    jacobian = np.zeros((2, 2) + grid.shape)
    jacobian[0, 0] = 1.0
    jacobian[1, 0] = Tx
    jacobian[1, 1] = det
    logger.info(f"Built flattening with N={N:g}, K={K:.4g}, det J in [{det.min():.4f}, {det.max():.4f}]")
    return FlatteningMap(
        chart=chart, grid=grid, scaling=N, extension=T, jacobian=jacobian, det_jacobian=det, mollifier=kernel
    )


def slope_z_derivative(fmap: FlatteningMap, eps: float = 1e-5) -> np.ndarray:
    """∂_z of the bottom-left Jacobian entry by a central difference in t = z/N."""
    grid = fmap.grid
    t = grid.z / fmap.scaling
    _, ahead, _ = _extension(fmap.chart, grid.x, t + eps, fmap.mollifier)
    _, behind, _ = _extension(fmap.chart, grid.x, t - eps, fmap.mollifier)
    return (ahead - behind) / (2.0 * eps * fmap.scaling)


def _required_scaling(chart: BoundaryChart, grid: HalfSpaceGrid, kernel: MollifierKernel, start: int) -> int:
    for N in range(start, start + 64):
        *_, bad = _scan(chart, grid, float(N), kernel)
        if not np.any(bad):
            return N
    raise FlatteningError(f"no admissible scaling found in [{start}, {start + 63}]")


def _column_value(fmap: FlatteningMap, x1: float, z: float) -> Tuple[float, float]:
    """Phi_2(x1, z) and its z-derivative."""
    T, _, Tt = _extension(fmap.chart, np.array([x1]), np.array([z / fmap.scaling]), fmap.mollifier)
    return z + float(T[0, 0]), 1.0 + float(Tt[0, 0]) / fmap.scaling


def evaluate_map(fmap: FlatteningMap, points) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty_like(points)
    for m, (x1, z) in enumerate(points):
        out[m] = (x1, _column_value(fmap, x1, z)[0])
    return out


def invert_flattening(fmap: FlatteningMap, points) -> np.ndarray:
    """
    Preimages under Phi, one column at a time: bracketing root find on the
    monotone map z -> Phi_2(x1, z), then safeguarded Newton steps.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    K, N = fmap.chart.lipschitz, fmap.scaling
    tol = settings.inversion_tol
    out = np.empty_like(points)
    for m, (x1, x2) in enumerate(points):
        base = float(fmap.chart.evaluate(np.array([x1]))[0])
        if x2 < base - tol:
            raise OutOfRangeError(f"point ({x1:.6g}, {x2:.6g}) lies below the boundary in column x = {x1:.6g}", column=x1)
        if x2 <= base:
            out[m] = (x1, 0.0)
            continue

        def residual(z):
            return _column_value(fmap, x1, z)[0] - x2

        hi = (x2 - base) / max(1.0 - K / N, 1e-3) + tol
        while residual(hi) < 0.0:
            hi *= 2.0
        z = brentq(residual, 0.0, hi, xtol=tol * 1e-2, rtol=4.0 * np.finfo(float).eps)
        for _ in range(settings.newton_steps):
            value, slope = _column_value(fmap, x1, z)
            step = (value - x2) / slope
            if abs(step) <= tol * 1e-3 or not 0.0 <= z - step <= hi:
                break
            z -= step
        out[m] = (x1, z)
    return out


# Atlas and partition
def window_chart(boundary: BoundaryChart, center: float, r: float, h: float) -> BoundaryChart:
    """
    Graph-aligned chart of the boundary around x = center:
    phi_j(y) = omega(y) (phi(center + y) - phi(center)), omega = 1 on |y| <= r/2.
    """
    y = np.linspace(-r, r, 257)
    omega = smooth_step((r - np.abs(y)) / (0.5 * r))
    base = float(boundary.evaluate(np.array([center]))[0])
    samples = omega * (boundary.evaluate(center + y) - base)
    samples[0] = samples[-1] = 0.0
    return chart_from_samples(samples, r, h, SupportKind.COMPACT, 0.0, (center, base))


def build_strip_atlas(
    boundary: BoundaryChart,
    grid: HalfSpaceGrid,
    charts: int = 4,
    overlap: int = 2,
    chart_height: Optional[float] = None,
    interior_height: Optional[float] = None,
) -> Atlas:
    strip = get_fixture("strip")
    chart_height = chart_height or strip.get("chart_height_fraction", 0.3) * grid.length_z
    interior_height = interior_height or strip.get("interior_height_fraction", 0.15) * grid.length_z
    transition = strip.get("transition_fraction", 0.1) * grid.length_z
    spacing = grid.length_x / charts
    inner = 0.75 * spacing
    centers = grid.origin_x + spacing * (np.arange(charts) + 0.5)
    windows = [window_chart(boundary, float(c), 2.0 * inner, chart_height) for c in centers]
    logger.info(f"Built strip atlas with {charts} charts, inner radius {inner:.4g}, height {chart_height:.4g}")
    return Atlas(
        charts=windows,
        overlap=overlap,
        interior_patch=InteriorPatch(height=interior_height, transition=transition),
        boundary=boundary,
    )


def _chart_weight(chart: BoundaryChart, grid: HalfSpaceGrid, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    inner = 0.5 * chart.r
    L = grid.length_x
    d = np.mod(X - chart.anchor[0] + 0.5 * L, L) - 0.5 * L
    across = smooth_step((inner - np.abs(d)) / (0.5 * inner))
    up = smooth_step((chart.h - Z) / (0.5 * chart.h))
    return across * up


def build_partition(atlas: Atlas, grid: HalfSpaceGrid) -> PartitionOfUnity:
    """
    Mollified indicators of the interior patch and of each chart window in
    reference coordinates, divided by their sum.
    """
    X, Z = grid.mesh()
    patch = atlas.interior_patch
    weights = [smooth_step((Z - patch.height) / patch.transition)]
    weights += [_chart_weight(chart, grid, X, Z) for chart in atlas.charts]
    weights = np.array(weights)
    total = np.sum(weights, axis=0)

    uncovered = np.argwhere(total <= 1e-12)
    if uncovered.size:
        i, k = uncovered[0]
        point = (float(grid.x[i]), float(grid.z[k]))
        logger.error(f"Partition: point {point} is covered by no chart.")
        raise CoverageError(f"point {point} is covered by no chart", coordinates=point)
    multiplicity = np.sum(weights[1:, :, 0] > 0.0, axis=0)
    if np.max(multiplicity) > atlas.overlap:
        i = int(np.argmax(multiplicity))
        point = (float(grid.x[i]), 0.0)
        raise CoverageError(
            f"boundary point {point} lies in {int(multiplicity[i])} charts, more than the overlap {atlas.overlap}",
            coordinates=point,
        )

    cutoffs = weights / total
    gradients = np.empty((cutoffs.shape[0], 2) + grid.shape)
    laplacians = np.empty_like(cutoffs)
    for j, xi in enumerate(cutoffs):
        gradients[j, 0] = grid.derivative(xi, Parity.EVEN, 0)
        gradients[j, 1] = grid.derivative(xi, Parity.EVEN, 1)
        laplacians[j] = grid.derivative(xi, Parity.EVEN, 0, 2) + grid.derivative(xi, Parity.EVEN, 1, 2)
    bound = float(np.max(np.sqrt(np.sum(gradients ** 2, axis=1))))
    labels = ["interior"] + [f"chart-{j}" for j in range(1, cutoffs.shape[0])]
    return PartitionOfUnity(cutoffs=cutoffs, gradients=gradients, laplacians=laplacians, gradient_bound=bound, labels=labels)


def strip_boundary(profile: ClosedFormProfile, grid: HalfSpaceGrid, nodes: Optional[int] = None) -> BoundaryChart:
    """Periodic chart of the whole strip boundary y = phi(x), period = length_x."""
    half = 0.5 * grid.length_x
    chart = chart_from_profile(profile, half, grid.length_z, SupportKind.PERIODIC, nodes or max(256, 4 * grid.nx))
    return chart


def cosine_boundary(lipschitz: float, grid: HalfSpaceGrid, frequency: int = 1) -> BoundaryChart:
    """phi(x) = (K/k) cos(k x) with k = 2*pi*frequency/length_x, so max|phi'| = K."""
    k = 2.0 * math.pi * frequency / grid.length_x
    if lipschitz == 0.0:
        profile = ClosedFormProfile(kind=ProfileKind.ZERO)
    else:
        profile = ClosedFormProfile(kind=ProfileKind.COSINE, params={"amplitude": lipschitz / k, "frequency": k})
    return strip_boundary(profile, grid)


def build_rough_domain(
    boundary: BoundaryChart,
    grid: HalfSpaceGrid,
    charts: int = 4,
    overlap: int = 2,
    chart_height: Optional[float] = None,
    interior_height: Optional[float] = None,
) -> RoughDomain:
    flattening = build_flattening(boundary, grid)
    atlas = build_strip_atlas(boundary, grid, charts, overlap, chart_height, interior_height)
    partition = build_partition(atlas, grid)
    return RoughDomain(grid=grid, boundary=boundary, flattening=flattening, atlas=atlas, partition=partition)


def domain_from_atlas_file(path: str, grid: HalfSpaceGrid) -> RoughDomain:
    spec = load_atlas_spec(path)
    boundary = chart_from_spec(spec.boundary)
    return build_rough_domain(boundary, grid, spec.charts, spec.overlap, spec.chart_height, spec.interior_height)


def certify_atlas(atlas: Atlas, s: float, p: float) -> Atlas:
    """Stores the largest chart multiplier bound as the atlas delta."""
    from services import norm_service

    bounds: List[float] = [norm_service.multiplier_bound(chart, s, p).value for chart in atlas.charts]
    delta = float(max(bounds))
    logger.info(f"Certified atlas multiplier bound delta={delta:.4g} at (s, p)=({s}, {p})")
    return atlas.model_copy(update={"delta": delta})
