import math

import numpy as np
import pytest
from scipy.integrate import quad

from core.exceptions import CoverageError, DomainCoverageError, FlatteningError, OutOfRangeError
from core.halfspace_grid import HalfSpaceGrid
from models import ClosedFormProfile, ProfileKind, SupportKind
from services import chart_service


def test_mollifier_integrates_constants_and_kills_odd_moments():
    kernel = chart_service.mollifier()
    assert np.sum(kernel.weights) == pytest.approx(1.0)
    assert abs(np.sum(kernel.nodes * kernel.weights)) < 1e-14
    assert np.all(np.abs(kernel.nodes) < kernel.support_radius)


def test_smooth_step_limits():
    t = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    step = chart_service.smooth_step(t)
    assert step[0] == 0.0 and step[1] == 0.0
    assert step[2] == pytest.approx(0.5, abs=1e-6)
    assert step[3] == 1.0 and step[4] == 1.0


def test_catalog_profiles_load_from_fixtures():
    profile = chart_service.catalog_profile("ripple")
    assert profile.kind is ProfileKind.COSINE
    assert profile.params["amplitude"] == pytest.approx(0.05)


def test_chart_lipschitz_defaults_to_the_profile_slope():
    profile = ClosedFormProfile(kind=ProfileKind.COSINE, params={"amplitude": 0.2, "frequency": 2.0})
    chart = chart_service.chart_from_profile(profile, math.pi, 1.0, SupportKind.PERIODIC)
    assert chart.lipschitz == pytest.approx(0.4, rel=1e-5)


def test_window_chart_rejects_points_outside_its_window():
    profile = ClosedFormProfile(kind=ProfileKind.BUMP, params={"amplitude": 0.1, "width": 0.5})
    chart = chart_service.chart_from_profile(profile, 1.0, 1.0, SupportKind.WINDOW)
    chart.evaluate(np.array([0.0, 0.9]))
    with pytest.raises(DomainCoverageError):
        chart.evaluate(np.array([1.5]))


def test_cosine_boundary_has_the_requested_lipschitz_constant(grid):
    chart = chart_service.cosine_boundary(0.05, grid)
    assert chart.lipschitz == pytest.approx(0.05, rel=1e-5)
    assert chart.support is SupportKind.PERIODIC


def _global_chart(profile):
    return chart_service.chart_from_profile(profile, math.pi, 1.0, SupportKind.GLOBAL)


def test_extension_reproduces_affine_profiles(grid):
    chart = _global_chart(ClosedFormProfile(kind=ProfileKind.AFFINE, params={"slope": 0.1, "offset": 0.3}))
    T = chart_service.mollifier_extend(chart, grid).values
    expected = np.broadcast_to((0.1 * grid.x + 0.3)[:, None], grid.shape)
    assert np.allclose(T, expected, atol=1e-13)


def test_extension_of_a_cosine_matches_adaptive_quadrature():
    # node (0, 0.5) on a grid with dz = 0.5
    grid = HalfSpaceGrid(nx=4, nz=4, length_x=2.0 * math.pi, length_z=2.0)
    chart = _global_chart(ClosedFormProfile(kind=ProfileKind.COSINE, params={"amplitude": 1.0, "frequency": 1.0}))
    T = chart_service.mollifier_extend(chart, grid).values

    density = chart_service.mollifier_density
    mass, _ = quad(lambda y: float(density(y)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-14)
    value, _ = quad(lambda y: float(density(y)) * math.cos(-0.5 * y), -1.0, 1.0, epsabs=1e-14, epsrel=1e-14)
    assert T[0, 1] == pytest.approx(value / mass, abs=1e-8)
    assert np.allclose(T[:, 0], np.cos(grid.x), atol=1e-14)


# Flattening
def test_flat_boundary_gives_the_identity_map(grid):
    fmap = chart_service.build_flattening(chart_service.cosine_boundary(0.0, grid), grid)
    assert np.allclose(fmap.extension, 0.0)
    assert np.allclose(fmap.det_jacobian, 1.0)


def test_flattening_matches_the_boundary_and_keeps_det_positive(rough_domain):
    fmap = rough_domain.flattening
    grid = rough_domain.grid
    phi = rough_domain.boundary.evaluate(grid.x)
    assert np.allclose(fmap.extension[:, 0], phi, atol=1e-12)
    assert np.all(fmap.det_jacobian > 0.5) and np.all(fmap.det_jacobian <= 2.0)
    assert fmap.scaling >= 2.0 * rough_domain.boundary.lipschitz + 2.0


def test_affine_flattening_has_a_constant_jacobian(grid):
    # the even mollifier kills d_t T for affine profiles, so det J = 1
    chart = _global_chart(ClosedFormProfile(kind=ProfileKind.AFFINE, params={"slope": 0.1}))
    fmap = chart_service.build_flattening(chart, grid)
    assert fmap.scaling == 3.0
    assert np.allclose(fmap.slope, 0.1, atol=1e-12)
    assert np.allclose(fmap.stretch, 1.0, atol=1e-12)
    assert np.allclose(fmap.det_jacobian, 1.0, atol=1e-12)
    assert np.allclose(fmap.extension, 0.1 * grid.x[:, None], atol=1e-12)


def test_explicit_scaling_that_fails_the_scan_names_the_node(small_grid):
    chart = chart_service.cosine_boundary(16.0, small_grid)
    with pytest.raises(FlatteningError) as info:
        chart_service.build_flattening(chart, small_grid, scaling=1)
    assert info.value.node is not None
    assert info.value.required_scaling > 1


def test_map_inversion_recovers_reference_points(rough_domain):
    fmap = rough_domain.flattening
    points = np.array([[0.3, 0.5], [2.0, 1.2], [4.5, 0.05]])
    images = chart_service.evaluate_map(fmap, points)
    assert np.allclose(chart_service.invert_flattening(fmap, images), points, atol=1e-9)


def test_map_inversion_round_trips_random_points(rough_domain):
    rng = np.random.default_rng(2)
    points = np.column_stack([rng.uniform(0.0, 2.0 * math.pi, 1000), rng.uniform(1e-3, 3.0, 1000)])
    images = chart_service.evaluate_map(rough_domain.flattening, points)
    assert np.allclose(chart_service.invert_flattening(rough_domain.flattening, images), points, atol=1e-9)


def test_points_below_the_boundary_are_out_of_range(rough_domain):
    fmap = rough_domain.flattening
    x = 1.0
    below = float(rough_domain.boundary.evaluate(np.array([x]))[0]) - 0.1
    with pytest.raises(OutOfRangeError):
        chart_service.invert_flattening(fmap, [[x, below]])


# Atlas and partition
def test_partition_sums_to_one(rough_domain):
    partition = rough_domain.partition
    assert partition.labels[0] == "interior"
    assert partition.count == len(rough_domain.atlas.charts) + 1
    assert np.allclose(partition.cutoffs.sum(axis=0), 1.0)
    assert partition.gradient_bound > 0.0


def test_partition_rejects_overlap_beyond_the_declared_bound(grid):
    boundary = chart_service.cosine_boundary(0.05, grid)
    atlas = chart_service.build_strip_atlas(boundary, grid, charts=4, overlap=1)
    with pytest.raises(CoverageError):
        chart_service.build_partition(atlas, grid)


def test_certify_atlas_records_the_largest_multiplier_bound(rough_domain):
    atlas = chart_service.certify_atlas(rough_domain.atlas, 1.0, 2.0)
    assert atlas.delta is not None
    assert 0.0 < atlas.delta < math.inf
