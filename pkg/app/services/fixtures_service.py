"""
Closed-form manufactured solutions and seeded random data.

All profiles decay like exp(-z^2/sigma^2), so with the default sigma they
vanish in the pad zone to well below the padding tolerance.
"""
import logging
import math
from typing import Tuple

import numpy as np

from core.halfspace_grid import HalfSpaceGrid
from core.resource_utils import get_fixture
from models import (
    GridField,
    HalfSpaceProblem,
    ManufacturedSolution,
    NeumannProblem,
    Rank,
    RoughDomain,
    StokesProblem,
    half_field,
)

logger = logging.getLogger(__name__)


def _wavenumber(grid: HalfSpaceGrid, mode: int) -> float:
    return 2.0 * math.pi * mode / grid.length_x


def _gaussian(z: np.ndarray, sigma: float):
    """g, g', g'' and g''' of exp(-z^2/sigma^2)."""
    s = sigma ** 2
    g = np.exp(-z ** 2 / s)
    g1 = -2.0 * z / s * g
    g2 = (4.0 * z ** 2 / s ** 2 - 2.0 / s) * g
    g3 = (-8.0 * z ** 3 / s ** 3 + 12.0 * z / s ** 2) * g
    return g, g1, g2, g3


def _halfspace_problem(grid, F, f, h, g_normal, G_tangential, friction) -> HalfSpaceProblem:
    return HalfSpaceProblem(
        grid=grid,
        F=half_field(grid, F, Rank.TENSOR),
        f=half_field(grid, f, Rank.VECTOR),
        h=half_field(grid, h, Rank.SCALAR),
        g_normal=g_normal,
        G_tangential=G_tangential,
        friction=friction,
    )


# Half space
def halfspace_parity(grid: HalfSpaceGrid, friction: float = 0.0, form: str = "divergence") -> Tuple[HalfSpaceProblem, ManufacturedSolution]:
    """
    Divergence-free flow from the stream function sin(mx) z g(z) with
    pressure cos(mx) g(z). All data have the reflection parities and the
    normal trace vanishes. form="divergence" puts everything into
    F = -∇u + πI; form="force" uses f = -Δu + ∇π instead.
    """
    params = get_fixture("halfspace_parity")
    sigma = float(params.get("sigma", 0.8))
    m = _wavenumber(grid, int(params.get("mode", 1)))
    X, Z = grid.mesh()
    g, g1, g2, g3 = _gaussian(Z, sigma)
    s, c = np.sin(m * X), np.cos(m * X)

    a = g + Z * g1
    a1 = 2.0 * g1 + Z * g2
    a2 = 3.0 * g2 + Z * g3
    b = Z * g
    u = np.array([s * a, -m * c * b])
    grad = np.array([[m * c * a, s * a1], [m ** 2 * s * b, -m * c * a]])
    pi = c * g

    zeros = np.zeros(grid.shape)
    G_tangential = friction * s[:, 0] * a[:, 0]
    if form == "divergence":
        F = -grad + pi * np.eye(2)[:, :, None, None]
        f = np.zeros((2,) + grid.shape)
    else:
        F = np.zeros((2, 2) + grid.shape)
        f = np.array([s * (m ** 2 * a - a2) - m * s * g, m * c * (-m ** 2 * b + a1) + c * g1])
        G_tangential = G_tangential - s[:, 0] * a1[:, 0]
    problem = _halfspace_problem(grid, F, f, zeros, np.zeros(grid.nx), G_tangential, friction)
    return problem, ManufacturedSolution(u=u, pi=pi, grad=grad)


def halfspace_general(grid: HalfSpaceGrid, friction: float = 0.0, form: str = "divergence") -> Tuple[HalfSpaceProblem, ManufacturedSolution]:
    """u = (sin(mx), cos(mx)) (1 + z) g(z), π = cos(mx) g(z): nonzero h, normal trace and slip data."""
    params = get_fixture("halfspace_general")
    sigma = float(params.get("sigma", 0.8))
    m = _wavenumber(grid, int(params.get("mode", 1)))
    X, Z = grid.mesh()
    g, g1, g2, _ = _gaussian(Z, sigma)
    s, c = np.sin(m * X), np.cos(m * X)

    q = (1.0 + Z) * g
    q1 = g + (1.0 + Z) * g1
    q2 = 2.0 * g1 + (1.0 + Z) * g2
    u = np.array([s * q, c * q])
    grad = np.array([[m * c * q, s * q1], [-m * s * q, c * q1]])
    pi = c * g
    h = c * (m * q + q1)
    g_normal = -c[:, 0] * q[:, 0]
    G_tangential = friction * s[:, 0] * q[:, 0]

    if form == "divergence":
        F = -grad + pi * np.eye(2)[:, :, None, None]
        f = np.zeros((2,) + grid.shape)
    else:
        F = np.zeros((2, 2) + grid.shape)
        f = np.array([s * (m ** 2 * q - q2) - m * s * g, c * (m ** 2 * q - q2) + c * g1])
        G_tangential = G_tangential - s[:, 0] * q1[:, 0]
    problem = _halfspace_problem(grid, F, f, h, g_normal, G_tangential, friction)
    return problem, ManufacturedSolution(u=u, pi=pi, grad=grad)


def neumann_cosine(grid: HalfSpaceGrid) -> Tuple[np.ndarray, np.ndarray, ManufacturedSolution]:
    """u = cos(mx) g(z) with f = Δu and zero Neumann data; u has zero mean."""
    params = get_fixture("neumann_cosine")
    sigma = float(params.get("sigma", 0.8))
    m = _wavenumber(grid, int(params.get("mode", 1)))
    X, Z = grid.mesh()
    g, g1, g2, _ = _gaussian(Z, sigma)
    c = np.cos(m * X)
    u = c * g
    f = c * (g2 - m ** 2 * g)
    grad = np.array([-m * np.sin(m * X) * g, c * g1])
    return f, np.zeros(grid.nx), ManufacturedSolution(u=u, grad=grad)


# Rough strips
def _physical_mesh(domain: RoughDomain):
    """Images (x, z + T) of the reference nodes."""
    X, Z = domain.grid.mesh()
    return X, Z + domain.flattening.extension


def rough_strip_data(domain: RoughDomain) -> GridField:
    """Smooth divergence-form data F sampled at the images of the reference nodes."""
    params = get_fixture("rough_data")
    amplitude = float(params.get("amplitude", 1.0))
    sigma = float(params.get("sigma", 0.8))
    grid = domain.grid
    m = _wavenumber(grid, int(params.get("mode", 1)))
    X, Y = _physical_mesh(domain)
    decay = np.exp(-Y ** 2 / sigma ** 2)
    s, c = np.sin(m * X), np.cos(m * X)
    F = amplitude * np.array([[s, c], [c, -s]]) * decay * grid.pad_taper
    return half_field(grid, F, Rank.TENSOR)


def rough_strip_force(domain: RoughDomain) -> Tuple[GridField, GridField, np.ndarray]:
    """
    The data of rough_strip_data together with f = Div F (physical) and
    the slip data -τ·Fν that make the force-form problem equal to the
    divergence-form one.
    """
    params = get_fixture("rough_data")
    amplitude = float(params.get("amplitude", 1.0))
    sigma = float(params.get("sigma", 0.8))
    grid = domain.grid
    m = _wavenumber(grid, int(params.get("mode", 1)))
    X, Y = _physical_mesh(domain)
    E = np.exp(-Y ** 2 / sigma ** 2)
    E1 = -2.0 * Y / sigma ** 2 * E
    s, c = np.sin(m * X), np.cos(m * X)
    F = amplitude * np.array([[s, c], [c, -s]]) * E
    f = amplitude * np.array([m * c * E + c * E1, -m * s * E - s * E1])

    slope = domain.boundary_slope
    stretch = np.sqrt(1.0 + slope ** 2)
    tau = np.array([np.ones_like(slope), slope]) / stretch
    nu = np.array([slope, -np.ones_like(slope)]) / stretch
    traction = np.einsum("i...,ij...,j...->...", tau, F[:, :, :, 0], nu)
    taper = grid.pad_taper
    return half_field(grid, F * taper, Rank.TENSOR), half_field(grid, f * taper, Rank.VECTOR), -traction


def rough_stokes_manufactured(domain: RoughDomain, alpha: np.ndarray) -> Tuple[StokesProblem, ManufacturedSolution]:
    """
    Stream function sin(mx) y exp(-y^2/sigma^2) in physical coordinates with
    pressure cos(mx) exp(-y^2/sigma^2); F = -∇u + πI, so the boundary data
    are the normal trace u·ν and the friction term α u·τ.
    """
    params = get_fixture("rough_data")
    sigma = float(params.get("sigma", 0.8))
    grid = domain.grid
    m = _wavenumber(grid, int(params.get("mode", 1)))
    X, Y = _physical_mesh(domain)
    sq = sigma ** 2
    E = np.exp(-Y ** 2 / sq)
    s, c = np.sin(m * X), np.cos(m * X)

    A = (1.0 - 2.0 * Y ** 2 / sq) * E
    A1 = (-6.0 * Y / sq + 4.0 * Y ** 3 / sq ** 2) * E
    u = np.array([s * A, -m * c * Y * E])
    grad = np.array([[m * c * A, s * A1], [m ** 2 * s * Y * E, -m * c * A]])
    pi = c * E
    F = -grad + pi * np.eye(2)[:, :, None, None]

    slope = domain.boundary_slope
    stretch = np.sqrt(1.0 + slope ** 2)
    ux, uz = u[0][:, 0], u[1][:, 0]
    g_normal = (slope * ux - uz) / stretch
    G_tangential = np.asarray(alpha) * (ux + slope * uz) / stretch
    problem = StokesProblem(
        domain=domain,
        F=half_field(grid, F * grid.pad_taper, Rank.TENSOR),
        g_normal=g_normal,
        G_tangential=G_tangential,
        alpha=alpha,
    )
    det = domain.flattening.det_jacobian
    gauge = grid.integrate(det * pi) / grid.integrate(det)
    return problem, ManufacturedSolution(u=u, pi=pi - gauge, grad=grad)


def rough_neumann_manufactured(domain: RoughDomain) -> Tuple[NeumannProblem, ManufacturedSolution]:
    """u = cos(mx) exp(-y^2/sigma^2) with F = -∇u, zero source and zero conormal data."""
    params = get_fixture("neumann_cosine")
    sigma = float(params.get("sigma", 0.8))
    grid = domain.grid
    m = _wavenumber(grid, int(params.get("mode", 1)))
    X, Y = _physical_mesh(domain)
    E = np.exp(-Y ** 2 / sigma ** 2)
    u = np.cos(m * X) * E
    grad = np.array([-m * np.sin(m * X) * E, np.cos(m * X) * (-2.0 * Y / sigma ** 2) * E])
    problem = NeumannProblem(domain=domain, F=half_field(grid, -grad * grid.pad_taper, Rank.VECTOR), chi=np.zeros(grid.nx))
    det = domain.flattening.det_jacobian
    gauge = grid.integrate(det * u) / grid.integrate(det)
    return problem, ManufacturedSolution(u=u - gauge, grad=grad)


# Random data
def random_band_limited(grid: HalfSpaceGrid, rank: Rank, seed: int, band_fraction: float = None) -> GridField:
    """
    Seeded data with x-modes up to a fraction of the resolved band, times
    z^l g(z) for l <= 2, normalized to unit maximum and tapered.
    """
    params = get_fixture("random_data")
    fraction = float(params.get("band_fraction", 0.25)) if band_fraction is None else band_fraction
    sigma = float(params.get("sigma", 0.8))
    rng = np.random.default_rng(seed)
    band = max(1, int(fraction * grid.nx / 2))
    m0 = _wavenumber(grid, 1)
    X, Z = grid.mesh()
    g = np.exp(-Z ** 2 / sigma ** 2)
    shape = {Rank.SCALAR: (), Rank.VECTOR: (2,), Rank.TENSOR: (2, 2)}[rank]

    values = np.zeros(shape + grid.shape)
    for index in np.ndindex(*shape):
        coeffs = rng.standard_normal((band + 1, 2, 3))
        component = np.zeros(grid.shape)
        for k in range(band + 1):
            for l in range(3):
                component += (coeffs[k, 0, l] * np.cos(k * m0 * X) + coeffs[k, 1, l] * np.sin(k * m0 * X)) * Z ** l * g
        values[index] = component
    peak = float(np.max(np.abs(values)))
    if peak > 0.0:
        values /= peak
    logger.debug(f"Random {rank.value} data with {band} modes, seed {seed}")
    return half_field(grid, values * grid.pad_taper, rank)
