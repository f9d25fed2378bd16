"""
Domain entities of the workbench.

Sampled objects (fields, charts, maps, partitions) carry numpy arrays and are
frozen after construction; construction logic lives in the services.
"""
import math
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator
from scipy.interpolate import CubicSpline

from core.exceptions import DomainCoverageError
from core.halfspace_grid import HalfSpaceGrid, Parity, ParityField
from schemas import EstimateReport, NormReport, SobolevIndex, SweepRecord


def _frozen_array(value) -> np.ndarray:
    array = np.array(value, dtype=float)
    array.setflags(write=False)
    return array


# Fields
class Rank(str, Enum):
    SCALAR = "scalar"
    VECTOR = "vector"
    TENSOR = "tensor"


class GridField(BaseModel):
    """
    Samples of a scalar, vector or tensor field on a uniform grid.

    Layout is components-first: a vector field on an (nx, ny) grid has shape
    (2, nx, ny), a tensor field (2, 2, nx, ny) with values[i, j] = T_ij.
    Node i along an axis sits at origin + i * spacing.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    extent: Tuple[float, ...]
    nodes: Tuple[int, ...]
    rank: Rank = Rank.SCALAR
    values: np.ndarray
    origin: Optional[Tuple[float, ...]] = None

    @field_validator("values", mode="before")
    @classmethod
    def as_float_array(cls, value):
        return _frozen_array(value)

    @field_validator("nodes")
    @classmethod
    def power_of_two(cls, nodes: Tuple[int, ...]) -> Tuple[int, ...]:
        for n in nodes:
            if n <= 0 or n & (n - 1):
                raise ValueError(f"node count {n} is not a power of two")
        return nodes

    @model_validator(mode="after")
    def consistent(self):
        ndim = len(self.nodes)
        if ndim not in (1, 2) or len(self.extent) != ndim:
            raise ValueError("fields live on 1D or 2D grids with one extent per axis")
        expected = self.component_shape + tuple(self.nodes)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} does not match {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field samples must be finite")
        if self.origin is not None and len(self.origin) != ndim:
            raise ValueError("origin needs one coordinate per axis")
        return self

    @property
    def ndim(self) -> int:
        return len(self.nodes)

    @property
    def component_shape(self) -> Tuple[int, ...]:
        d = len(self.nodes)
        return {Rank.SCALAR: (), Rank.VECTOR: (d,), Rank.TENSOR: (d, d)}[self.rank]

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extent, self.nodes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    def coordinates(self, axis: int) -> np.ndarray:
        start = 0.0 if self.origin is None else self.origin[axis]
        return start + self.spacing[axis] * np.arange(self.nodes[axis])

    def mesh(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*[self.coordinates(a) for a in range(self.ndim)], indexing="ij"))

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean (vector) or Frobenius (tensor) magnitude."""
        if self.rank is Rank.SCALAR:
            return np.abs(self.values)
        axes = tuple(range(len(self.component_shape)))
        return np.sqrt(np.sum(self.values ** 2, axis=axes))

    def with_values(self, values: np.ndarray, rank: Optional[Rank] = None) -> "GridField":
        return GridField(extent=self.extent, nodes=self.nodes, rank=rank or self.rank, values=values, origin=self.origin)

    def scaled(self, factor: float) -> "GridField":
        return self.with_values(factor * self.values)


def half_field(grid: HalfSpaceGrid, values: np.ndarray, rank: Rank) -> GridField:
    return GridField(extent=grid.extent, nodes=grid.shape, rank=rank, values=values, origin=(grid.origin_x, 0.0))


# Charts
class ProfileKind(str, Enum):
    ZERO = "zero"
    AFFINE = "affine"
    COSINE = "cosine"
    BUMP = "bump"


class SupportKind(str, Enum):
    COMPACT = "compact"
    PERIODIC = "periodic"
    WINDOW = "window"
    GLOBAL = "global"


class ClosedFormProfile(BaseModel):
    """
    Closed-form boundary profiles.

    affine: slope*y + offset; cosine: amplitude*cos(frequency*y + phase);
    bump: amplitude*exp(-1/(1-u^2)) with u = (y - center)/width.
    """
    model_config = ConfigDict(frozen=True)

    kind: ProfileKind
    params: Dict[str, float] = Field(default_factory=dict)

    def _p(self, name: str, default: float = 0.0) -> float:
        return float(self.params.get(name, default))

    def value(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind is ProfileKind.ZERO:
            return np.zeros_like(y)
        if self.kind is ProfileKind.AFFINE:
            return self._p("slope") * y + self._p("offset")
        if self.kind is ProfileKind.COSINE:
            return self._p("amplitude", 1.0) * np.cos(self._p("frequency", 1.0) * y + self._p("phase"))
        u = (y - self._p("center")) / self._p("width", 1.0)
        out = np.zeros_like(u)
        inside = np.abs(u) < 1.0
        out[inside] = self._p("amplitude", 1.0) * np.exp(-1.0 / (1.0 - u[inside] ** 2))
        return out

    def derivative(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind is ProfileKind.ZERO:
            return np.zeros_like(y)
        if self.kind is ProfileKind.AFFINE:
            return np.full_like(y, self._p("slope"))
        if self.kind is ProfileKind.COSINE:
            a, k = self._p("amplitude", 1.0), self._p("frequency", 1.0)
            return -a * k * np.sin(k * y + self._p("phase"))
        width = self._p("width", 1.0)
        u = (y - self._p("center")) / width
        out = np.zeros_like(u)
        inside = np.abs(u) < 1.0
        ui = u[inside]
        bump = self._p("amplitude", 1.0) * np.exp(-1.0 / (1.0 - ui ** 2))
        out[inside] = bump * (-2.0 * ui / (1.0 - ui ** 2) ** 2) / width
        return out


class BoundaryChart(BaseModel):
    """
    Local graph parametrization y_n = phi(y') of the boundary in the frame
    anchor + Q (y', y_n).

    `phi` holds samples on the chart grid; when `profile` is set it is the
    closed-form backing and evaluation uses it directly.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    phi: np.ndarray
    r: float = Field(..., gt=0.0)
    h: float = Field(..., gt=0.0)
    rotation: np.ndarray = Field(default_factory=lambda: np.eye(2))
    anchor: np.ndarray = Field(default_factory=lambda: np.zeros(2))
    lipschitz: float = Field(..., ge=0.0)
    support: SupportKind = SupportKind.COMPACT
    profile: Optional[ClosedFormProfile] = None

    _spline: Optional[CubicSpline] = PrivateAttr(default=None)

    @field_validator("phi", "rotation", "anchor", mode="before")
    @classmethod
    def as_float_array(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def check_invariants(self):
        if self.phi.ndim != 1 or self.phi.size < 4:
            raise ValueError("phi must be a 1D sample array with at least 4 nodes")
        if not np.all(np.isfinite(self.phi)):
            raise ValueError("phi samples must be finite")
        if self.rotation.shape != (2, 2) or self.anchor.shape != (2,):
            raise ValueError("rotation must be 2x2 and anchor a point in the plane")
        if np.max(np.abs(self.rotation.T @ self.rotation - np.eye(2))) > 1e-12:
            raise ValueError("rotation is not orthonormal within 1e-12")
        if self.support is SupportKind.GLOBAL and self.profile is None:
            raise ValueError("global support needs a closed-form profile")
        if self.support is SupportKind.COMPACT and max(abs(self.phi[0]), abs(self.phi[-1])) > 1e-12:
            raise ValueError("compactly supported phi must vanish at the grid ends")
        values = self.phi
        if self.support is SupportKind.PERIODIC:
            values = np.append(values, values[0])
        quotients = np.abs(np.diff(values)) / self.sample_spacing
        worst = float(np.max(quotients))
        if worst > self.lipschitz * (1.0 + 1e-9) + 1e-12:
            raise ValueError(f"difference quotient {worst:.6g} exceeds the Lipschitz bound {self.lipschitz:.6g}")
        return self

    @property
    def sample_spacing(self) -> float:
        n = self.phi.size
        if self.support is SupportKind.PERIODIC:
            return 2.0 * self.r / n
        return 2.0 * self.r / (n - 1)

    @property
    def sample_nodes(self) -> np.ndarray:
        return -self.r + self.sample_spacing * np.arange(self.phi.size)

    @property
    def rotation_angle(self) -> float:
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def _interpolant(self) -> CubicSpline:
        if self._spline is None:
            nodes, values = self.sample_nodes, self.phi
            if self.support is SupportKind.PERIODIC:
                nodes = np.append(nodes, self.r)
                values = np.append(values, values[0])
                self._spline = CubicSpline(nodes, values, bc_type="periodic")
            else:
                self._spline = CubicSpline(nodes, values, bc_type="natural")
        return self._spline

    def evaluate(self, y, derivative: int = 0) -> np.ndarray:
        """phi or phi' at arbitrary points, honoring the support kind."""
        y = np.asarray(y, dtype=float)
        if self.support is SupportKind.PERIODIC:
            y = np.mod(y + self.r, 2.0 * self.r) - self.r
        elif self.support is SupportKind.WINDOW:
            if np.any(np.abs(y) > self.r * (1.0 + 1e-12)):
                worst = float(np.max(np.abs(y)))
                raise DomainCoverageError(f"evaluation at |y'| = {worst:.6g} leaves the chart window [-{self.r}, {self.r}]")
        if self.profile is not None:
            out = self.profile.value(y) if derivative == 0 else self.profile.derivative(y)
        else:
            out = self._interpolant()(y, derivative)
        if self.support is SupportKind.COMPACT:
            out = np.where(np.abs(y) <= self.r, out, 0.0)
        return out


class InteriorPatch(BaseModel):
    """The interior set U^0: reference heights z > height carry the interior cutoff."""
    model_config = ConfigDict(frozen=True)

    height: float = Field(..., gt=0.0)
    transition: float = Field(..., gt=0.0)


class Atlas(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    charts: List[BoundaryChart] = Field(..., min_length=1)
    overlap: int = Field(..., ge=1)
    interior_patch: InteriorPatch
    delta: Optional[float] = None
    boundary: Optional[BoundaryChart] = None

    @property
    def centers(self) -> List[float]:
        return [float(chart.anchor[0]) for chart in self.charts]


class PartitionOfUnity(BaseModel):
    """
    Cutoffs xi_0 (interior) .. xi_l (boundary charts) on the reference grid,
    with their exact spectral gradients and Laplacians.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    cutoffs: np.ndarray
    gradients: np.ndarray
    laplacians: np.ndarray
    gradient_bound: float
    labels: List[str]

    @field_validator("cutoffs", "gradients", "laplacians", mode="before")
    @classmethod
    def as_float_array(cls, value):
        return _frozen_array(value)

    @property
    def count(self) -> int:
        return self.cutoffs.shape[0]


class MollifierKernel(BaseModel):
    """Quadrature form of zeta on [-1, 1]: nodes and mass-normalized weights."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    nodes: np.ndarray
    weights: np.ndarray
    mass: float
    support_radius: float = 1.0

    @field_validator("nodes", "weights", mode="before")
    @classmethod
    def as_float_array(cls, value):
        return _frozen_array(value)


class FlatteningMap(BaseModel):
    """
    Phi(z', z) = (z', z + T(z', z/N)) sampled on a half-space grid.

    jacobian[i, j] = dPhi_i/dz_j, so the top row is (1, 0) and the bottom
    row is (d_z' T, 1 + d_t T / N).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    chart: BoundaryChart
    grid: HalfSpaceGrid
    scaling: float = Field(..., gt=0.0)
    extension: np.ndarray
    jacobian: np.ndarray
    det_jacobian: np.ndarray
    mollifier: MollifierKernel

    @field_validator("extension", "jacobian", "det_jacobian", mode="before")
    @classmethod
    def as_float_array(cls, value):
        return _frozen_array(value)

    @property
    def slope(self) -> np.ndarray:
        return self.jacobian[1, 0]

    @property
    def stretch(self) -> np.ndarray:
        return self.jacobian[1, 1]


class RoughDomain(BaseModel):
    """Periodic strip above a rough graph, with its flattening, atlas and partition."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: HalfSpaceGrid
    boundary: BoundaryChart
    flattening: FlatteningMap
    atlas: Atlas
    partition: PartitionOfUnity

    @property
    def boundary_slope(self) -> np.ndarray:
        return self.flattening.slope[:, 0].copy()


# Half-space Stokes
class ParityTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    velocity: Tuple[Parity, Parity] = (Parity.EVEN, Parity.ODD)
    pressure: Parity = Parity.EVEN
    force: Tuple[Parity, Parity] = (Parity.EVEN, Parity.ODD)
    tensor: Tuple[Tuple[Parity, Parity], Tuple[Parity, Parity]] = (
        (Parity.EVEN, Parity.ODD),
        (Parity.ODD, Parity.EVEN),
    )


PARITY_TABLE = ParityTable()


class HalfSpaceProblem(BaseModel):
    """
    -Δu + ∇π = f + Div F, Div u = h in z > 0,
    -u_z = g_normal and -∂_z u_x - F_xz + friction*u_x = G_tangential on z = 0.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: HalfSpaceGrid
    F: GridField
    f: GridField
    h: GridField
    g_normal: np.ndarray
    G_tangential: np.ndarray
    index: SobolevIndex = SobolevIndex(s=1.0, p=2.0)
    friction: float = Field(0.0, ge=0.0)

    @field_validator("g_normal", "G_tangential", mode="before")
    @classmethod
    def as_float_array(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def shapes(self):
        nx, nz = self.grid.shape
        if self.F.rank is not Rank.TENSOR or self.f.rank is not Rank.VECTOR or self.h.rank is not Rank.SCALAR:
            raise ValueError("F must be a tensor, f a vector and h a scalar field")
        for field in (self.F, self.f, self.h):
            if tuple(field.nodes) != (nx, nz):
                raise ValueError("data fields must live on the problem grid")
        if self.g_normal.shape != (nx,) or self.G_tangential.shape != (nx,):
            raise ValueError("boundary data must have one sample per boundary node")
        return self


class HalfSpaceSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u: GridField
    pi: GridField
    grad: np.ndarray
    hessian: np.ndarray
    pressure_grad: np.ndarray
    residual_interior: float
    residual_bc: float
    residuals: Dict[str, float]
    norms: Dict[str, NormReport] = Field(default_factory=dict)
    net_force_defect: float = 0.0
    compatibility_defect: float = 0.0


# Neumann
class NeumannProblem(BaseModel):
    """Div(∇u + F) = f in Ω, (∇u + F)·n = chi on the boundary."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    domain: RoughDomain
    F: Optional[GridField] = None
    f: Optional[GridField] = None
    chi: np.ndarray
    index: SobolevIndex = SobolevIndex(s=1.0, p=2.0)

    @field_validator("chi", mode="before")
    @classmethod
    def as_float_array(cls, value):
        return _frozen_array(value)


class FlatNeumannSolution(BaseModel):
    """Half-space Neumann solution, kept on the reflected torus for exact derivatives."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u: ParityField
    compatibility_defect: float = 0.0
    residual_interior: float = 0.0
    residual_bc: float = 0.0


class NeumannSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u: GridField
    grad: np.ndarray
    hessian: np.ndarray
    residuals: Dict[str, float]
    compatibility_defect: float = 0.0
    sweeps: int = 1
    factors: List[float] = Field(default_factory=list)
    history: List[SweepRecord] = Field(default_factory=list)
    converged: bool = True


# Rough Stokes
class StokesProblem(BaseModel):
    """
    Navier-slip Stokes data on a rough strip, sampled at the images Phi(z) of
    the reference nodes. alpha holds boundary samples alpha(Phi(x, 0)).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    domain: RoughDomain
    F: Optional[GridField] = None
    f: Optional[GridField] = None
    h: Optional[GridField] = None
    g_normal: Optional[np.ndarray] = None
    G_tangential: Optional[np.ndarray] = None
    alpha: np.ndarray
    index: SobolevIndex = SobolevIndex(s=1.0, p=2.0)

    @field_validator("alpha", "g_normal", "G_tangential", mode="before")
    @classmethod
    def as_float_array(cls, value):
        return None if value is None else _frozen_array(value)

    @model_validator(mode="after")
    def friction_sign(self):
        if np.any(self.alpha < 0):
            raise ValueError("friction coefficient alpha must be nonnegative")
        if self.alpha.shape != (self.domain.grid.nx,):
            raise ValueError("alpha needs one sample per boundary node")
        return self


class TransformedCoeffs(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: np.ndarray
    B: np.ndarray
    det: np.ndarray
    chart_index: int = 0

    @field_validator("A", "B", "det", mode="before")
    @classmethod
    def as_float_array(cls, value):
        return _frozen_array(value)


class ChartData(BaseModel):
    """Localized half-space data of one chart (index 0 is the interior patch)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    chart_index: int
    F: np.ndarray
    f: np.ndarray
    h: np.ndarray
    g_normal: np.ndarray
    G_tangential: np.ndarray


class IterationState(BaseModel):
    """Single-writer bookkeeping of a sweep iteration."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    velocity: np.ndarray
    pressure: np.ndarray
    velocity_grad: np.ndarray
    velocity_hessian: np.ndarray
    chart_fields: List[np.ndarray] = Field(default_factory=list)
    history: List[SweepRecord] = Field(default_factory=list)
    factors: List[float] = Field(default_factory=list)


class StokesSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u: GridField
    pi: GridField
    grad: np.ndarray
    hessian: np.ndarray
    pressure_grad: Optional[np.ndarray] = None
    residuals: Dict[str, float]
    sweeps: int
    factors: List[float]
    history: List[SweepRecord]
    converged: bool
    partial: bool = False
    delta: Optional[float] = None
    estimate: Optional[EstimateReport] = None


class ManufacturedSolution(BaseModel):
    """Exact fields behind a fixture problem, on the same half-space grid."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u: np.ndarray
    pi: Optional[np.ndarray] = None
    grad: Optional[np.ndarray] = None


# Sharpness
class WedgeDomain(BaseModel):
    """Sector {0 < arg(x + iy) < theta} with its corner at the origin."""
    model_config = ConfigDict(frozen=True)

    theta: float = Field(..., gt=0.0, lt=2.0 * math.pi)

    @property
    def kappa(self) -> float:
        return math.pi / self.theta
