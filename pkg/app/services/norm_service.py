"""
Norm estimators on periodic grid fields: L^p, Gagliardo seminorms,
Sobolev-Slobodeckij and Besov norms, Bessel-potential norms, dual-norm
bounds by dictionary pairing, and sufficient upper bounds for Sobolev
multiplier norms of chart profiles.
"""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy.special import gamma

from config import settings
from core import spectral
from core.exceptions import UnsupportedIndexError
from models import BoundaryChart, GridField, Rank, SupportKind
from schemas import NormKind, NormReport, SobolevIndex

logger = logging.getLogger(__name__)


def _flat_components(field: GridField) -> np.ndarray:
    """Values reshaped to (components, *nodes)."""
    return field.values.reshape((-1,) + tuple(field.nodes))


def _lp(values: np.ndarray, cell: float, p: float) -> float:
    """values: (components, *nodes); pointwise Euclidean magnitude."""
    magnitude = np.sqrt(np.sum(values ** 2, axis=0))
    if math.isinf(p):
        return float(np.max(magnitude)) if magnitude.size else 0.0
    return float((np.sum(magnitude ** p) * cell) ** (1.0 / p))


def lp_norm(field: GridField, p: float) -> NormReport:
    if p < 1.0:
        raise UnsupportedIndexError(f"lp_norm needs p >= 1, got {p}")
    value = _lp(_flat_components(field), field.cell_volume, p)
    return NormReport(value=value, kind=NormKind.LP, regime="quadrature", parameters={"p": p})


def fourier_seminorm(field: GridField, s: float) -> float:
    """(∫ |ξ|^{2s} |f̂|^2)^{1/2} by Parseval on the grid."""
    comps = _flat_components(field)
    ndim = field.ndim
    spectrum = spectral.forward(comps, ndim)
    k = spectral.full_frequency_grid(field.nodes, field.extent)
    weight = sum(ki ** 2 for ki in k) ** s
    total = np.sum(weight * np.abs(spectrum) ** 2) * field.cell_volume / np.prod(field.nodes)
    return float(np.sqrt(total))


def fourier_sobolev_norm(field: GridField, s: float) -> float:
    """(∫ (1+|ξ|^2)^s |f̂|^2)^{1/2}: the Bessel-potential H^s norm."""
    comps = _flat_components(field)
    spectrum = spectral.forward(comps, field.ndim)
    k = spectral.full_frequency_grid(field.nodes, field.extent)
    weight = (1.0 + sum(ki ** 2 for ki in k)) ** s
    total = np.sum(weight * np.abs(spectrum) ** 2) * field.cell_volume / np.prod(field.nodes)
    return float(np.sqrt(total))


def bessel_potential_norm(field: GridField, s: float, p: float) -> NormReport:
    """‖(1 - Δ)^{s/2} f‖_p."""
    comps = spectral.bessel_potential(_flat_components(field), field.extent, s)
    value = _lp(comps, field.cell_volume, p)
    return NormReport(value=value, kind=NormKind.SOBOLEV, regime="bessel-potential", parameters={"s": s, "p": p})


# Gagliardo seminorm
def _sphere_moment(d: int, p: float) -> float:
    """∫_{S^{d-1}} |e·ω|^p dω."""
    if d == 1:
        return 2.0
    return 2.0 * math.sqrt(math.pi) * gamma((p + 1.0) / 2.0) / gamma(p / 2.0 + 1.0)


@lru_cache(maxsize=32)
def _periodic_kernel(nodes: Tuple[int, ...], extent: Tuple[float, ...], exponent: float) -> np.ndarray:
    """
    K(δ) = Σ_m |δ + m L|^{-exponent} over image shells |m|_∞ <= M, plus an
    analytic tail; δ ranges over the grid shifts, K(0) = 0.
    """
    d = len(nodes)
    M = settings.image_shells
    axes = [(L / n) * np.arange(n) for n, L in zip(nodes, extent)]
    shifts = np.meshgrid(*axes, indexing="ij")
    kernel = np.zeros(nodes)
    for m in itertools.product(range(-M, M + 1), repeat=d):
        r2 = sum((shifts[a] + m[a] * extent[a]) ** 2 for a in range(d))
        with np.errstate(divide="ignore"):
            kernel += np.where(r2 > 0.0, r2 ** (-exponent / 2.0), 0.0)
    sp = exponent - d
    if d == 1:
        tail = 2.0 / (extent[0] * sp) * ((M + 0.5) * extent[0]) ** (-sp)
    else:
        area = extent[0] * extent[1]
        radius = (2 * M + 1) * math.sqrt(area / math.pi)
        tail = 2.0 * math.pi * radius ** (-sp) / (sp * area)
    kernel += tail
    kernel.flat[0] = 0.0
    kernel.setflags(write=False)
    return kernel


def _excluded_mass(field: GridField, s: float, p: float) -> float:
    """Contribution of the excluded diagonal cell, via the equal-area disk."""
    d = field.ndim
    comps = _flat_components(field)
    grads = np.stack([spectral.derivative(comps, field.extent, a) for a in range(d)])
    magnitude = np.sqrt(np.sum(grads ** 2, axis=(0, 1)))
    if d == 1:
        rho = 0.5 * field.spacing[0]
    else:
        rho = math.sqrt(field.cell_volume / math.pi)
    e = p * (1.0 - s)
    return float(_sphere_moment(d, p) * rho ** e / e * np.sum(magnitude ** p) * field.cell_volume)


def _gagliardo_fft(field: GridField, kernel: np.ndarray) -> float:
    comps = _flat_components(field)
    spectrum = spectral.forward(comps, field.ndim)
    symbol = 2.0 * (np.sum(kernel) - np.fft.fftn(kernel).real)
    n_total = np.prod(field.nodes)
    total = np.sum(symbol * np.abs(spectrum) ** 2) / n_total
    return float(total * field.cell_volume ** 2)


def _gagliardo_direct(field: GridField, kernel: np.ndarray, p: float, threads: Optional[int] = None) -> float:
    comps = _flat_components(field)
    spatial = tuple(range(1, comps.ndim))
    shifts = [idx for idx in np.ndindex(*field.nodes) if any(idx)]

    def partial(chunk):
        acc = 0.0
        for idx in chunk:
            moved = np.roll(comps, shift=tuple(-i for i in idx), axis=spatial)
            diff = np.sqrt(np.sum((moved - comps) ** 2, axis=0))
            acc += kernel[idx] * np.sum(diff ** p)
        return acc

    workers = max(1, threads or settings.default_threads)
    chunks = [shifts[i::workers] for i in range(workers)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        total = sum(pool.map(partial, chunks))
    return float(total * field.cell_volume ** 2)


def _raw_seminorm(field: GridField, s: float, p: float, threads: Optional[int] = None) -> Tuple[float, float]:
    """(seminorm^p including the diagonal correction, excluded mass)."""
    kernel = _periodic_kernel(tuple(field.nodes), tuple(field.extent), field.ndim + s * p)
    if p == 2.0:
        total = _gagliardo_fft(field, kernel)
    else:
        if np.prod(field.nodes) > 128 * 128:
            logger.warning(f"Direct Gagliardo sum on {field.nodes} nodes; this is quadratic in the node count.")
        total = _gagliardo_direct(field, kernel, p, threads)
    excluded = _excluded_mass(field, s, p)
    return total + excluded, excluded


def _reference_mode(nodes: Tuple[int, ...], extent: Tuple[float, ...]) -> GridField:
    x = (extent[0] / nodes[0]) * np.arange(nodes[0])
    mode = np.sin(2.0 * np.pi * x / extent[0])
    values = mode.reshape((nodes[0],) + (1,) * (len(nodes) - 1)) * np.ones(nodes)
    return GridField(extent=extent, nodes=nodes, rank=Rank.SCALAR, values=values)


@lru_cache(maxsize=64)
def seminorm_calibration(nodes: Tuple[int, ...], extent: Tuple[float, ...], s: float) -> float:
    """Fourier-side over Gagliardo value on the reference mode (p = 2)."""
    ref = _reference_mode(nodes, extent)
    raw, _ = _raw_seminorm(ref, s, 2.0)
    constant = fourier_seminorm(ref, s) / math.sqrt(raw)
    logger.debug(f"Gagliardo calibration on {nodes}, s={s}: {constant:.6g}")
    return constant


def fractional_seminorm(field: GridField, s: float, p: float, threads: Optional[int] = None) -> NormReport:
    """
    Gagliardo seminorm over node pairs with periodic distance, the
    diagonal cell excluded and its mass added back. For p = 2 the sum runs
    through the FFT of the kernel and the result is calibrated once per grid
    against the Fourier-side value of a reference mode.
    Otherwise the direct sum splits the node shifts over `threads` workers.
    """
    if not 0.0 < s < 1.0:
        raise UnsupportedIndexError(f"fractional_seminorm needs s in (0, 1), got {s}; use sobolev_norm")
    if p <= 1.0 or math.isinf(p):
        raise UnsupportedIndexError(f"fractional_seminorm needs p in (1, inf), got {p}")
    raw, excluded = _raw_seminorm(field, s, p, threads)
    calibration = seminorm_calibration(tuple(field.nodes), tuple(field.extent), s) if p == 2.0 else 1.0
    return NormReport(
        value=calibration * raw ** (1.0 / p),
        kind=NormKind.SOBOLEV,
        regime="gagliardo-fft" if p == 2.0 else "gagliardo-direct",
        parameters={"s": s, "p": p},
        calibration=calibration,
        excluded_mass=excluded,
    )


# Sobolev and Besov norms
def _multi_indices(order: int, ndim: int):
    return [a for a in itertools.product(range(order + 1), repeat=ndim) if sum(a) == order]


def _derivative(field: GridField, alpha) -> GridField:
    values = _flat_components(field)
    for axis, count in enumerate(alpha):
        for _ in range(count):
            values = spectral.derivative(values, field.extent, axis)
    return field.with_values(values.reshape(field.values.shape))


def _raw_sobolev(field: GridField, s: float, p: float, threads: Optional[int] = None) -> float:
    k = int(math.floor(s))
    frac = s - k
    total = 0.0
    for order in range(k + 1):
        for alpha in _multi_indices(order, field.ndim):
            total += lp_norm(_derivative(field, alpha), p).value ** p
    if frac > 0.0:
        for alpha in _multi_indices(k, field.ndim):
            total += fractional_seminorm(_derivative(field, alpha), frac, p, threads).value ** p
    return total ** (1.0 / p)


@lru_cache(maxsize=64)
def sobolev_calibration(nodes: Tuple[int, ...], extent: Tuple[float, ...], s: float) -> float:
    ref = _reference_mode(nodes, extent)
    return fourier_sobolev_norm(ref, s) / _raw_sobolev(ref, s, 2.0)


def sobolev_norm(field: GridField, idx: SobolevIndex, threads: Optional[int] = None) -> NormReport:
    """
    W^{s,p} norm: spectral derivatives up to order floor(s), plus the
    Gagliardo seminorm of the top derivatives when s is fractional.
    Negative s is only available through dual_norm_estimate.
    """
    s, p = idx.s, idx.p
    if s < 0.0:
        raise UnsupportedIndexError(f"sobolev_norm needs s >= 0, got {s}; use dual_norm_estimate for negative order")
    raw = _raw_sobolev(field, s, p, threads)
    fractional = s != math.floor(s)
    calibration = 1.0
    if fractional and p == 2.0:
        calibration = sobolev_calibration(tuple(field.nodes), tuple(field.extent), s)
    return NormReport(
        value=calibration * raw,
        kind=NormKind.SOBOLEV,
        regime="slobodeckij" if fractional else "integer-order",
        parameters={"s": s, "p": p},
        calibration=calibration,
    )


def band_filters(field: GridField) -> np.ndarray:
    """
    Raised-cosine dyadic windows psi_0..psi_J on the frequency grid; they
    sum to one at every frequency. Band j peaks at |ξ| = 2^j ξ_0.
    """
    k = spectral.full_frequency_grid(field.nodes, field.extent)
    radius = np.sqrt(sum(ki ** 2 for ki in k))
    xi0 = min(2.0 * math.pi / L for L in field.extent)
    with np.errstate(divide="ignore"):
        level = np.where(radius > 0.0, np.log2(np.maximum(radius, 1e-300) / xi0), -np.inf)
    top = int(math.ceil(np.max(level))) + 1 if np.isfinite(np.max(level)) else 1
    filters = []
    for j in range(top + 1):
        if j == 0:
            psi = np.where(level <= 0.0, 1.0, np.where(level < 1.0, np.cos(0.5 * np.pi * level) ** 2, 0.0))
        else:
            rising = (level >= j - 1) & (level < j)
            falling = (level >= j) & (level < j + 1)
            psi = np.zeros_like(radius)
            psi[rising] = np.sin(0.5 * np.pi * (level[rising] - (j - 1))) ** 2
            psi[falling] = np.cos(0.5 * np.pi * (level[falling] - j)) ** 2
        filters.append(psi)
    return np.array(filters)


def besov_norm(field: GridField, s: float, rho: float, q: float) -> NormReport:
    """(Σ_j (2^{js} ‖Δ_j f‖_rho)^q)^{1/q} over raised-cosine dyadic bands."""
    if s <= 0.0:
        raise UnsupportedIndexError(f"besov_norm needs s > 0, got {s}")
    if rho < 1.0 or q < 1.0:
        raise UnsupportedIndexError("besov_norm needs rho, q in [1, inf]")
    comps = _flat_components(field)
    spectrum = spectral.forward(comps, field.ndim)
    filters = band_filters(field)
    terms = []
    for j, psi in enumerate(filters):
        band = spectral.backward(spectrum * psi, field.ndim)
        terms.append(2.0 ** (j * s) * _lp(band, field.cell_volume, rho))
    terms = np.array(terms)
    value = float(np.max(terms)) if math.isinf(q) else float(np.sum(terms ** q) ** (1.0 / q))
    warnings = []
    if len(filters) < settings.min_besov_bands:
        warnings.append(f"only {len(filters)} frequency bands available for s={s}")
        logger.warning(f"Besov norm with {len(filters)} bands; refine the grid for a meaningful s={s} estimate.")
    return NormReport(
        value=value,
        kind=NormKind.BESOV,
        regime="littlewood-paley-raised-cosine",
        parameters={"s": s, "rho": rho, "q": q, "bands": float(len(filters))},
        warnings=warnings,
    )


# Multiplier bounds
def chart_field(chart: BoundaryChart, nodes: int = 256, derivative: int = 0) -> GridField:
    """
    Samples phi (or phi') of a chart on a periodic 1D grid: one period for
    periodic charts, [-2r, 2r) with zero extension for compact and window
    charts, [-r, r) for global closed forms.
    """
    if chart.support is SupportKind.PERIODIC or chart.support is SupportKind.GLOBAL:
        start, length = -chart.r, 2.0 * chart.r
    else:
        start, length = -2.0 * chart.r, 4.0 * chart.r
    y = start + (length / nodes) * np.arange(nodes)
    if chart.support is SupportKind.WINDOW:
        inside = np.abs(y) <= chart.r
        values = np.zeros(nodes)
        values[inside] = chart.evaluate(y[inside], derivative)
    else:
        values = chart.evaluate(y, derivative)
    return GridField(extent=(length,), nodes=(nodes,), rank=Rank.SCALAR, values=values, origin=(start,))


def _not_certifiable(s: float, p: float, reason: str) -> NormReport:
    logger.warning(f"Multiplier bound at (s, p)=({s}, {p}) not certifiable: {reason}")
    return NormReport(
        value=float("inf"),
        kind=NormKind.MULTIPLIER,
        regime="not-certifiable",
        parameters={"s": s, "p": p},
        certified=False,
        warnings=[reason],
    )


def multiplier_bound(
    phi: BoundaryChart,
    s: float,
    p: float,
    dimension: int = 1,
    regime: Optional[str] = None,
    nodes: int = 256,
) -> NormReport:
    """
    Sufficient upper bound for the Sobolev multiplier norm of a chart profile.

    Regimes, for profiles on R^m (m = `dimension`, n = m + 1):
      MSa  s = l - 1/p with integer l >= 1, p(l-1) <= n:
           max(1, ‖phi‖_{B^s_{p,p}}) * K
      MSb  p(s-1) > m:  ‖phi'‖_{W^{s-1,p}}
      MSc  p s > m, compact support of radius r:  r^{s-m/p} ‖phi‖_{W^{s,p}}
    Without an explicit regime the first applicable one is used.
    """
    m = dimension
    n = m + 1
    l = s + 1.0 / p
    applicable = {
        "MSa": abs(l - round(l)) < 1e-9 and round(l) >= 1 and p * (round(l) - 1) <= n,
        "MSb": p * (s - 1.0) > m,
        "MSc": p * s > m and phi.support in (SupportKind.COMPACT, SupportKind.WINDOW),
    }
    if regime is None:
        regime = next((name for name in ("MSa", "MSb", "MSc") if applicable[name]), None)
        if regime is None:
            return _not_certifiable(s, p, "no embedding regime applies to these indices")
    elif not applicable.get(regime, False):
        return _not_certifiable(s, p, f"regime {regime} does not apply to these indices")

    params = {"s": s, "p": p, "dimension": float(m), "K": phi.lipschitz}
    if regime == "MSa":
        besov = besov_norm(chart_field(phi, nodes), s, p, p).value
        value = max(1.0, besov) * phi.lipschitz
        params.update({"rho": p, "q": p, "besov": besov})
    elif regime == "MSb":
        slope = chart_field(phi, nodes, derivative=1)
        value = sobolev_norm(slope, SobolevIndex(s=s - 1.0, p=p)).value
    else:
        sob = sobolev_norm(chart_field(phi, nodes), SobolevIndex(s=s, p=p)).value
        value = phi.r ** (s - m / p) * sob
        params.update({"r": phi.r, "sobolev": sob})
    return NormReport(value=value, kind=NormKind.MULTIPLIER, regime=regime, parameters=params)


# Dual norms
def _cosine_moment(q: float) -> float:
    """mean of |cos|^q over a period."""
    return gamma((q + 1.0) / 2.0) / (math.sqrt(math.pi) * gamma(q / 2.0 + 1.0))


def dual_norm_estimate(field: GridField, s: float, p: float, seed: int = 0) -> NormReport:
    """
    Bounds for the W^{s,p} norm with s in (-1, 0), p' = p/(p-1).

    Lower bound: max pairing |<f, g>| / ‖(1-Δ)^{-s/2} g‖_{p'} over every
    non-Nyquist Fourier mode (all phases) and a seeded set of random
    band-limited fields. Upper bound: ‖(1-Δ)^{s/2} f‖_p, which dominates
    every such pairing by Hölder.
    """
    if not -1.0 < s < 0.0:
        raise UnsupportedIndexError(f"dual_norm_estimate needs s in (-1, 0), got {s}")
    if field.rank is not Rank.SCALAR:
        raise UnsupportedIndexError("dual_norm_estimate works on scalar fields")
    sigma = -s
    q = p / (p - 1.0)
    values = field.values
    cell = field.cell_volume
    volume = field.volume
    ndim = field.ndim

    spectrum = spectral.forward(values, ndim)
    k = spectral.full_frequency_grid(field.nodes, field.extent)
    k2 = sum(ki ** 2 for ki in k)
    nyquist = np.zeros(field.nodes, dtype=bool)
    for axis, n in enumerate(field.nodes):
        index = np.arange(n).reshape([-1 if a == axis else 1 for a in range(ndim)])
        nyquist |= np.broadcast_to(index == n // 2, field.nodes) if n > 1 else False
    mode_norm = (1.0 + k2) ** (sigma / 2.0) * (volume * _cosine_moment(q)) ** (1.0 / q)
    mode_norm.flat[0] = volume ** (1.0 / q)
    ratios = np.where(nyquist, 0.0, cell * np.abs(spectrum) / mode_norm)
    lower = float(np.max(ratios))

    rng = np.random.default_rng(seed)
    cutoff = 0.25 * np.sqrt(np.max(k2))
    band = k2 <= cutoff ** 2
    for _ in range(settings.dictionary_size):
        coeffs = rng.standard_normal(field.nodes) + 1j * rng.standard_normal(field.nodes)
        g = spectral.backward(np.where(band, coeffs, 0.0), ndim)
        norm = _lp(spectral.bessel_potential(g[None], field.extent, sigma), cell, q)
        if norm > 0.0:
            lower = max(lower, abs(float(np.sum(values * g)) * cell) / norm)

    upper = bessel_potential_norm(field, s, p).value
    return NormReport(
        value=lower,
        kind=NormKind.DUAL,
        regime="dictionary-pairing",
        parameters={"s": s, "p": p, "dictionary": float(settings.dictionary_size)},
        upper=upper,
    )
