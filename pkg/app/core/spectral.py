"""
FFT helpers for fields sampled on uniform periodic grids.

Spatial axes are always the trailing ones; leading axes hold components.
First-derivative symbols drop the Nyquist frequency so that real fields stay
real and every derived operator (Laplacian, Leray projection) is built from
the same symbols.
"""
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np


@lru_cache(maxsize=64)
def _wavenumbers(n: int, length: float) -> np.ndarray:
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    k.setflags(write=False)
    return k


def wavenumbers(n: int, length: float) -> np.ndarray:
    return _wavenumbers(int(n), float(length))


def frequency_grid(nodes: Sequence[int], extent: Sequence[float]) -> Tuple[np.ndarray, ...]:
    """Broadcastable wavevector components, one array per axis ('ij' layout)."""
    axes = [wavenumbers(n, length) for n, length in zip(nodes, extent)]
    return tuple(np.meshgrid(*axes, indexing="ij"))


def full_frequency_grid(nodes: Sequence[int], extent: Sequence[float]) -> Tuple[np.ndarray, ...]:
    """Like frequency_grid but keeps the Nyquist entry (used for radial band filters)."""
    axes = [2.0 * np.pi * np.fft.fftfreq(n, d=length / n) for n, length in zip(nodes, extent)]
    return tuple(np.meshgrid(*axes, indexing="ij"))


def _spatial_axes(ndim: int) -> Tuple[int, ...]:
    return tuple(range(-ndim, 0))


def forward(values: np.ndarray, ndim: int) -> np.ndarray:
    return np.fft.fftn(values, axes=_spatial_axes(ndim))


def backward(spectrum: np.ndarray, ndim: int) -> np.ndarray:
    return np.fft.ifftn(spectrum, axes=_spatial_axes(ndim)).real


def derivative(values: np.ndarray, extent: Sequence[float], axis: int, order: int = 1) -> np.ndarray:
    """Spectral derivative along spatial `axis` (0-based among the trailing axes)."""
    ndim = len(extent)
    nodes = values.shape[-ndim:]
    k = frequency_grid(nodes, extent)[axis]
    symbol = (1j * k) ** order
    return backward(forward(values, ndim) * symbol, ndim)


def gradient(values: np.ndarray, extent: Sequence[float]) -> np.ndarray:
    """Gradient with the derivative index appended as the last component axis."""
    ndim = len(extent)
    parts = [derivative(values, extent, axis) for axis in range(ndim)]
    return np.stack(parts, axis=values.ndim - ndim)


def laplacian(values: np.ndarray, extent: Sequence[float]) -> np.ndarray:
    ndim = len(extent)
    nodes = values.shape[-ndim:]
    k = frequency_grid(nodes, extent)
    k2 = sum(ki ** 2 for ki in k)
    return backward(-k2 * forward(values, ndim), ndim)


def bessel_potential(values: np.ndarray, extent: Sequence[float], s: float) -> np.ndarray:
    """Apply (1 - Δ)^{s/2} on the torus."""
    ndim = len(extent)
    nodes = values.shape[-ndim:]
    k = full_frequency_grid(nodes, extent)
    weight = (1.0 + sum(ki ** 2 for ki in k)) ** (s / 2.0)
    return backward(weight * forward(values, ndim), ndim)


def project_spectrum(spectrum: np.ndarray, k: Sequence[np.ndarray]) -> np.ndarray:
    """Leray projection v̂ - ξ(ξ·v̂)/|ξ|^2 of a vector spectrum; the zero mode passes through."""
    k2 = sum(ki ** 2 for ki in k)
    safe = np.where(k2 > 0.0, k2, 1.0)
    k_dot = sum(ki * spectrum[i] for i, ki in enumerate(k))
    return np.array([spectrum[i] - ki * k_dot / safe for i, ki in enumerate(k)])


def leray_project(values: np.ndarray, extent: Sequence[float]) -> np.ndarray:
    """Divergence-free part of a periodic vector field (components on the leading axis)."""
    ndim = len(extent)
    k = frequency_grid(values.shape[-ndim:], extent)
    return backward(project_spectrum(forward(values, ndim), k), ndim)
