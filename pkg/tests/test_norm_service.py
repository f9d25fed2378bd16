import math

import numpy as np
import pytest

from core.exceptions import UnsupportedIndexError
from models import ClosedFormProfile, GridField, ProfileKind, Rank
from schemas import NormKind, SobolevIndex
from services import chart_service, norm_service


def _periodic(values, length=2.0 * math.pi):
    n = values.shape[-1]
    return GridField(extent=(length,), nodes=(n,), rank=Rank.SCALAR, values=values)


def _sine(n, mode=1):
    x = 2.0 * math.pi * np.arange(n) / n
    return _periodic(np.sin(mode * x))


def test_lp_norm_of_a_constant():
    field = _periodic(np.ones(64))
    assert norm_service.lp_norm(field, 3.0).value == pytest.approx((2.0 * math.pi) ** (1.0 / 3.0))
    assert norm_service.lp_norm(field, math.inf).value == pytest.approx(1.0)


def test_integer_sobolev_norm_of_a_sine():
    report = norm_service.sobolev_norm(_sine(64), SobolevIndex(s=1.0, p=2.0))
    assert report.value == pytest.approx(math.sqrt(2.0 * math.pi), rel=1e-10)
    assert report.regime == "integer-order"


def test_gagliardo_matches_fourier_after_calibration():
    ratios = []
    for n in (64, 128, 256):
        field = _sine(n, mode=2)
        gagliardo = norm_service.fractional_seminorm(field, 0.5, 2.0)
        assert gagliardo.excluded_mass > 0.0
        ratios.append(gagliardo.value / norm_service.fourier_seminorm(field, 0.5))
    assert all(r == pytest.approx(1.0, abs=0.01) for r in ratios)
    assert max(ratios) / min(ratios) < 1.01


def test_gagliardo_direct_sum_for_p_other_than_two():
    report = norm_service.fractional_seminorm(_sine(32), 0.5, 3.0)
    assert report.value > 0.0
    assert report.calibration == 1.0
    assert report.regime == "gagliardo-direct"


@pytest.mark.parametrize("s, p", [(0.0, 2.0), (1.0, 2.0), (0.5, 1.0)])
def test_gagliardo_rejects_indices_out_of_range(s, p):
    with pytest.raises(UnsupportedIndexError):
        norm_service.fractional_seminorm(_sine(32), s, p)


def test_band_filters_form_a_partition_of_unity():
    filters = norm_service.band_filters(_sine(128))
    assert filters.shape[0] >= 4
    assert np.allclose(filters.sum(axis=0), 1.0)


def test_besov_norm_grows_with_smoothness_index():
    field = _sine(128, mode=4)
    low = norm_service.besov_norm(field, 0.5, 2.0, 2.0).value
    high = norm_service.besov_norm(field, 1.0, 2.0, 2.0).value
    assert high > low > 0.0


def test_besov_norm_warns_on_coarse_grids():
    report = norm_service.besov_norm(_sine(4), 0.5, 2.0, 2.0)
    assert report.warnings


def _bump(amplitude):
    profile = ClosedFormProfile(kind=ProfileKind.BUMP, params={"amplitude": amplitude, "width": 0.5})
    return chart_service.chart_from_profile(profile, 1.0, 1.0)


def test_multiplier_bound_is_linear_in_the_lipschitz_constant():
    charts = [_bump(a) for a in (0.01, 0.02, 0.04)]
    bounds = [norm_service.multiplier_bound(chart, 0.5, 2.0) for chart in charts]
    assert all(b.regime == "MSa" and b.kind is NormKind.MULTIPLIER for b in bounds)
    ratios = [b.value / chart.lipschitz for b, chart in zip(bounds, charts)]
    assert max(ratios) == pytest.approx(min(ratios), rel=1e-9)


def test_multiplier_bound_reports_uncertifiable_indices():
    report = norm_service.multiplier_bound(_bump(0.1), 0.5, 1.5)
    assert not report.certified
    assert math.isinf(report.value)


def test_multiplier_bound_rejects_a_regime_that_does_not_apply():
    report = norm_service.multiplier_bound(_bump(0.1), 0.5, 2.0, regime="MSb")
    assert not report.certified


def test_dual_norm_lower_bound_stays_below_the_bessel_bound():
    n = 64
    x = 2.0 * math.pi * np.arange(n) / n
    field = _periodic(np.cos(3.0 * x) + 0.3 * np.sin(7.0 * x))
    report = norm_service.dual_norm_estimate(field, -0.5, 2.0, seed=4)
    assert 0.0 < report.value <= report.upper * (1.0 + 1e-9)


def test_dual_norm_needs_negative_order():
    with pytest.raises(UnsupportedIndexError):
        norm_service.dual_norm_estimate(_sine(32), 0.5, 2.0)


def test_chart_field_samples_a_periodic_chart(grid):
    chart = chart_service.cosine_boundary(0.1, grid)
    field = norm_service.chart_field(chart, nodes=64)
    assert field.extent == pytest.approx((2.0 * math.pi,))
    assert np.max(np.abs(field.values)) == pytest.approx(0.1, rel=1e-3)


def _random_field(rng, n=32):
    x = 2.0 * math.pi * np.arange(n) / n
    modes = rng.standard_normal((2, 5))
    values = sum(a * np.cos(k * x) + b * np.sin(k * x) for k, (a, b) in enumerate(modes.T, start=1))
    return _periodic(values)


NORMS = {
    "lp": lambda f: norm_service.lp_norm(f, 3.0).value,
    "gagliardo": lambda f: norm_service.fractional_seminorm(f, 0.5, 2.0).value,
    "gagliardo_direct": lambda f: norm_service.fractional_seminorm(f, 0.5, 3.0).value,
    "sobolev": lambda f: norm_service.sobolev_norm(f, SobolevIndex(s=1.5, p=2.0)).value,
    "besov": lambda f: norm_service.besov_norm(f, 0.5, 2.0, 2.0).value,
    "dual": lambda f: norm_service.dual_norm_estimate(f, -0.5, 2.0, seed=1).value,
}


@pytest.mark.parametrize("name", sorted(NORMS))
def test_norms_are_homogeneous(name):
    norm = NORMS[name]
    field = _random_field(np.random.default_rng(0))
    scaled = field.with_values(-3.0 * field.values)
    assert norm(scaled) == pytest.approx(3.0 * norm(field), rel=1e-12)


@pytest.mark.parametrize("name", sorted(NORMS))
def test_norms_satisfy_the_triangle_inequality(name):
    norm = NORMS[name]
    rng = np.random.default_rng(1)
    for _ in range(100):
        f, g = _random_field(rng), _random_field(rng)
        total = f.with_values(f.values + g.values)
        assert norm(total) <= (norm(f) + norm(g)) * (1.0 + 1e-12)


def test_fractional_sobolev_norm_matches_the_fourier_sum():
    n = 128
    x = 2.0 * math.pi * np.arange(n) / n
    field = _periodic(np.sin(x) + 0.2 * np.cos(2.0 * x))
    report = norm_service.sobolev_norm(field, SobolevIndex(s=1.5, p=2.0))
    assert report.regime == "slobodeckij"
    assert report.value / norm_service.fourier_sobolev_norm(field, 1.5) == pytest.approx(1.0, rel=0.02)


def test_besov_to_sobolev_ratio_is_grid_stable():
    ratios = []
    for n in (64, 128, 256):
        x = 2.0 * math.pi * np.arange(n) / n
        field = _periodic(np.sin(x) + 0.5 * np.cos(3.0 * x))
        besov = norm_service.besov_norm(field, 0.5, 2.0, 2.0).value
        sobolev = norm_service.sobolev_norm(field, SobolevIndex(s=0.5, p=2.0)).value
        ratios.append(besov / sobolev)
    assert max(ratios) / min(ratios) < 1.05


def test_dual_norm_of_a_single_mode():
    n, amplitude, xi = 64, 2.5, 3.0
    x = 2.0 * math.pi * np.arange(n) / n
    field = _periodic(amplitude * np.cos(xi * x))
    l2 = norm_service.lp_norm(field, 2.0).value
    report = norm_service.dual_norm_estimate(field, -0.5, 2.0)
    assert report.value == pytest.approx((1.0 + xi ** 2) ** -0.25 * l2, rel=0.01)
    assert report.upper == pytest.approx(report.value, rel=0.01)


def test_compact_support_bound_scales_with_the_radius():
    profile = ClosedFormProfile(kind=ProfileKind.BUMP, params={"amplitude": 0.05, "width": 0.5})
    s, p = 0.75, 2.0
    for r in (1.0, 2.0):
        chart = chart_service.chart_from_profile(profile, r, 1.0)
        report = norm_service.multiplier_bound(chart, s, p)
        assert report.regime == "MSc"
        assert report.value == pytest.approx(r ** (s - 1.0 / p) * report.parameters["sobolev"], rel=1e-12)


def test_direct_gagliardo_sum_uses_the_requested_workers(monkeypatch):
    sizes = []
    real = norm_service.ThreadPoolExecutor

    def recording(max_workers):
        sizes.append(max_workers)
        return real(max_workers=max_workers)

    monkeypatch.setattr(norm_service, "ThreadPoolExecutor", recording)
    field = _sine(16)
    one = norm_service.fractional_seminorm(field, 0.5, 3.0, threads=1).value
    three = norm_service.fractional_seminorm(field, 0.5, 3.0, threads=3).value
    assert sizes == [1, 3]
    assert one == pytest.approx(three, rel=1e-12)
