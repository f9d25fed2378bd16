"""
Truncated half-space grid and the parity machinery used by the reflection
solvers.

The half space {z >= 0} is truncated to [0, length_z) and sampled at
z_k = k*dz, k = 0..nz-1, with x periodic on [origin_x, origin_x + length_x).
Reflection maps a half field onto the torus [0, length_x) x [-length_z, length_z)
with 2*nz nodes in z; the node at z = +-length_z lies in the pad.

A half field reflects without a kink only when its z-derivatives at z = 0
of the other parity vanish. Jets read those derivatives off the first nodes
and move them into Gaussian-weighted polynomial pieces that reflect
smoothly with their own parity.
"""
import math
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.interpolate import KroghInterpolator

from config import settings
from core import spectral


class Parity(str, Enum):
    EVEN = "even"
    ODD = "odd"

    def flip(self) -> "Parity":
        return Parity.ODD if self is Parity.EVEN else Parity.EVEN

    @classmethod
    def of_order(cls, order: int) -> "Parity":
        return cls.EVEN if order % 2 == 0 else cls.ODD


def jet_orders(parity: Parity, top: int) -> List[int]:
    """z-derivative orders up to `top` that a smooth field of this parity can carry at z = 0."""
    start = 0 if parity is Parity.EVEN else 1
    return list(range(start, top + 1, 2))


class HalfSpaceGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    nx: int
    nz: int
    length_x: float = Field(..., gt=0.0)
    length_z: float = Field(..., gt=0.0)
    origin_x: float = 0.0

    @field_validator("nx", "nz")
    @classmethod
    def power_of_two(cls, value: int) -> int:
        if value <= 0 or value & (value - 1):
            raise ValueError(f"node count {value} is not a power of two")
        return value

    @property
    def dx(self) -> float:
        return self.length_x / self.nx

    @property
    def dz(self) -> float:
        return self.length_z / self.nz

    @property
    def shape(self):
        return (self.nx, self.nz)

    @property
    def extent(self):
        return (self.length_x, self.length_z)

    @property
    def torus_extent(self):
        return (self.length_x, 2.0 * self.length_z)

    @property
    def torus_nodes(self):
        return (self.nx, 2 * self.nz)

    @property
    def x(self) -> np.ndarray:
        return self.origin_x + self.dx * np.arange(self.nx)

    @property
    def z(self) -> np.ndarray:
        return self.dz * np.arange(self.nz)

    def mesh(self):
        return np.meshgrid(self.x, self.z, indexing="ij")

    @property
    def pad_start(self) -> float:
        return (1.0 - settings.pad_fraction) * self.length_z

    @property
    def physical_mask(self) -> np.ndarray:
        mask = np.broadcast_to(self.z < self.pad_start, self.shape)
        return np.array(mask)

    @property
    def pad_taper(self) -> np.ndarray:
        """Smooth cutoff: 1 below the pad, 0 at the top, C-infinity in between."""
        start = self.pad_start
        width = 0.5 * (self.length_z - start)
        t = np.clip((self.z - start) / width, 0.0, 1.0)
        taper = np.ones_like(t)
        inside = (t > 0.0) & (t < 1.0)
        a = np.exp(-1.0 / t[inside])
        b = np.exp(-1.0 / (1.0 - t[inside]))
        taper[inside] = b / (a + b)
        taper[t >= 1.0] = 0.0
        return np.broadcast_to(taper, self.shape).copy()

    @property
    def lift_width(self) -> float:
        return settings.lift_width_fraction * self.length_z

    def gaussian(self) -> np.ndarray:
        """Even lift profile g(z) = exp(-z^2/sigma^2), broadcast over x."""
        g = np.exp(-(self.z / self.lift_width) ** 2)
        return np.broadcast_to(g, self.shape).copy()

    def jets(self, values: np.ndarray, orders: Sequence[int]) -> np.ndarray:
        """
        z-derivatives of the listed orders at z = 0, read off the polynomial
        through the first `jet_stencil` nodes of every column.

        Shape (len(orders),) + values.shape[:-1].
        """
        values = np.asarray(values, dtype=float)
        orders = list(orders)
        if not orders:
            return np.zeros((0,) + values.shape[:-1])
        width = min(settings.jet_stencil, self.nz)
        column = np.moveaxis(values[..., :width], -1, 0)
        # nodes in units of dz keep the divided differences well scaled
        poly = KroghInterpolator(np.arange(width, dtype=float), column)
        taylor = np.asarray(poly.derivatives(0.0, der=max(orders) + 1))
        out = np.array([taylor[j] / self.dz ** j for j in orders])
        for n, j in enumerate(orders):
            if j == 0:
                out[n] = values[..., 0]
        return out

    def jet_lift(self, jets: Dict[int, np.ndarray]) -> np.ndarray:
        """
        g(z) P(z) whose z-derivatives at z = 0 are the given x-profiles.

        The orders share one parity; P is the matching Taylor series divided
        by g, truncated at the top order, so the lower orders are exact.
        """
        sigma2 = self.lift_width ** 2
        taylor = {j: np.asarray(d, dtype=float) / math.factorial(j) for j, d in jets.items()}
        poly = np.zeros(self.shape)
        for j in range(max(taylor) + 1):
            for m in range(j // 2 + 1):
                if j - 2 * m in taylor:
                    poly += np.outer(taylor[j - 2 * m], self.z ** j) / (sigma2 ** m * math.factorial(m))
        return poly * self.gaussian()

    def reflect(self, values: np.ndarray, parity: Parity) -> np.ndarray:
        nz = self.nz
        sign = 1.0 if parity is Parity.EVEN else -1.0
        full = np.zeros(values.shape[:-1] + (2 * nz,))
        full[..., :nz] = values
        full[..., nz + 1:] = sign * values[..., 1:][..., ::-1]
        if parity is Parity.EVEN:
            # node at z = +-length_z: even fields continue, odd fields vanish
            full[..., nz] = values[..., nz - 1]
        return full

    def restrict(self, values: np.ndarray) -> np.ndarray:
        return values[..., : self.nz].copy()

    def derivative(self, values: np.ndarray, parity: Parity, axis: int, order: int = 1) -> np.ndarray:
        full = self.reflect(values, parity)
        return self.restrict(spectral.derivative(full, self.torus_extent, axis, order))

    def integrate(self, values: np.ndarray, physical_only: bool = False) -> np.ndarray:
        """Quadrature over the half grid (trailing two axes)."""
        weights = np.full(self.shape, self.dx * self.dz)
        weights[:, 0] *= 0.5
        if physical_only:
            weights = weights * self.physical_mask
        return np.sum(values * weights, axis=(-2, -1))

    def boundary_integral(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.dx)

    def physical_max(self, values: np.ndarray) -> float:
        mask = np.broadcast_to(self.physical_mask, values.shape)
        if not np.any(mask):
            return 0.0
        return float(np.max(np.abs(values[mask])))

    def pad_max(self, values: np.ndarray) -> float:
        """Largest magnitude in the pad zone z >= pad_start."""
        mask = np.broadcast_to(~self.physical_mask, values.shape)
        if not np.any(mask):
            return 0.0
        return float(np.max(np.abs(values[mask])))

    def torus_taper(self) -> np.ndarray:
        return self.reflect(self.pad_taper, Parity.EVEN)


Number = Union[float, int]


class ParityField:
    """
    A half-space scalar kept as its image on the reflected torus.

    Pieces enter through `of` with the parity they are reflected by; sums of
    pieces with different parities stay on the torus, so derivatives act on
    each piece exactly as the reflected solvers see it.
    """

    def __init__(self, grid: HalfSpaceGrid, full: Optional[np.ndarray] = None):
        self.grid = grid
        self.full = np.zeros(grid.torus_nodes) if full is None else np.asarray(full, dtype=float)

    @classmethod
    def of(cls, grid: HalfSpaceGrid, values: np.ndarray, parity: Parity) -> "ParityField":
        return cls(grid, grid.reflect(np.asarray(values, dtype=float), parity))

    @classmethod
    def jet_piece(cls, grid: HalfSpaceGrid, jets: Dict[int, np.ndarray]) -> "ParityField":
        """The lift g(z) P(z) for `jets`, reflected by the parity of its orders."""
        if not jets:
            return cls(grid)
        return cls.of(grid, grid.jet_lift(jets), Parity.of_order(min(jets)))

    @classmethod
    def split(cls, grid: HalfSpaceGrid, values: np.ndarray, parity: Parity, top: Optional[int] = None) -> "ParityField":
        """
        A field of natural parity `parity` whose half-space values carry
        z-derivatives of the other parity at z = 0 (an odd field with a
        trace, an even one with a normal slope). Those derivatives up to
        `top` go into a jet piece reflected by their own parity; the
        remainder is reflected by `parity` and has no kink below order top + 1.
        """
        values = np.asarray(values, dtype=float)
        top = settings.jet_order + 1 if top is None else top
        orders = jet_orders(parity.flip(), top)
        piece = grid.jet_lift(dict(zip(orders, grid.jets(values, orders))))
        return cls.of(grid, values - piece, parity) + cls.of(grid, piece, parity.flip())

    @property
    def values(self) -> np.ndarray:
        return self.grid.restrict(self.full)

    def trace(self) -> np.ndarray:
        return self.full[:, 0].copy()

    def dx(self) -> "ParityField":
        return ParityField(self.grid, spectral.derivative(self.full, self.grid.torus_extent, 0))

    def dz(self) -> "ParityField":
        return ParityField(self.grid, spectral.derivative(self.full, self.grid.torus_extent, 1))

    def d(self, axis: int) -> "ParityField":
        return self.dx() if axis == 0 else self.dz()

    def lap(self) -> "ParityField":
        return ParityField(self.grid, spectral.laplacian(self.full, self.grid.torus_extent))

    def __add__(self, other: "ParityField") -> "ParityField":
        return ParityField(self.grid, self.full + other.full)

    def __sub__(self, other: "ParityField") -> "ParityField":
        return ParityField(self.grid, self.full - other.full)

    def __neg__(self) -> "ParityField":
        return ParityField(self.grid, -self.full)

    def scale(self, factor: Union[Number, np.ndarray]) -> "ParityField":
        """Multiplies by a constant or by a half-space array reflected evenly."""
        if isinstance(factor, np.ndarray) and factor.ndim == 2 and factor.shape == self.grid.shape:
            factor = self.grid.reflect(factor, Parity.EVEN)
        return ParityField(self.grid, factor * self.full)

    def taper(self) -> "ParityField":
        return ParityField(self.grid, self.grid.torus_taper() * self.full)


def gradient(u: Sequence[ParityField]) -> np.ndarray:
    """grad[i, j] = d_j u_i on the half grid."""
    return np.array([[ui.d(j).values for j in range(2)] for ui in u])


def hessian(u: Sequence[ParityField]) -> np.ndarray:
    """hess[i, j, k] = d_k d_j u_i on the half grid."""
    return np.array([[[ui.d(j).d(k).values for k in range(2)] for j in range(2)] for ui in u])


def divergence(u: Sequence[ParityField]) -> ParityField:
    return u[0].dx() + u[1].dz()


def row_divergence(F: Sequence[Sequence[ParityField]]) -> List[ParityField]:
    """(Div F)_i = sum_j d_j F_ij."""
    return [F[i][0].dx() + F[i][1].dz() for i in range(2)]
