"""Grid, metric fields, curvature and diffeomorphisms."""

from __future__ import annotations

import numpy as np
import pytest

from calderon_lab.errors import DiffeomorphismError, GridError
from calderon_lab.geometry import (
    Grid,
    PulledBackMetric,
    ScaledMetric,
    christoffel,
    conformal_potential,
    constructed_pair,
    diffeo_preset,
    factor_preset,
    induced_boundary_metric,
    metric_preset,
    pullback_metric,
    scalar_curvature_at,
)


@pytest.fixture(scope="module")
def points():
    rng = np.random.default_rng(3)
    return rng.uniform(0.05, 0.95, size=(20, 3))


def test_grid_layout():
    grid = Grid(3, 8, 10)
    assert grid.shape == (8, 8, 11)
    assert grid.coords.shape == (8, 8, 11, 3)
    assert grid.n_boundary == 2 * 64
    assert len(grid.interior_indices) + len(grid.boundary_indices) == grid.size
    np.testing.assert_allclose(grid.face_coords(1)[..., -1], 1.0)


@pytest.mark.parametrize("args", [(2, 8, 8), (3, 9, 8), (3, 6, 8), (3, 8, 4)])
def test_grid_rejects_bad_sizes(args):
    with pytest.raises(GridError):
        Grid(*args)


def test_christoffel_exponential_warp(points):
    r = 0.7
    g = metric_preset("exponential_warp", 3, rate=r)
    G = christoffel(g, points)
    t = points[:, -1]
    for a in range(2):
        np.testing.assert_allclose(G[:, 2, a, a], -r * np.exp(2 * r * t), rtol=1e-12)
        np.testing.assert_allclose(G[:, a, a, 2], r, rtol=1e-12)
    np.testing.assert_allclose(G[:, 2, 2, 2], 0.0, atol=1e-14)


@pytest.mark.parametrize("name", ["tangential_wave", "conformal_flat", "warped"])
def test_christoffel_symmetric(name, points):
    G = christoffel(metric_preset(name, 3), points)
    np.testing.assert_allclose(G, np.swapaxes(G, -1, -2), atol=1e-13)


def test_sphere_patch_curvature(points):
    g = metric_preset("sphere_patch", 3, radius=1.0)
    np.testing.assert_allclose(scalar_curvature_at(g, points - 0.5), 6.0, rtol=1e-10)
    np.testing.assert_allclose(conformal_potential(g, points - 0.5), 0.75, rtol=1e-10)


def test_flat_curvature_vanishes(points):
    np.testing.assert_allclose(scalar_curvature_at(metric_preset("flat", 3), points), 0.0, atol=1e-14)


def test_constant_scaling_of_curvature(points):
    g = metric_preset("conformal_flat", 3)
    cg = ScaledMetric(g, factor_preset("constant", 3, value=2.0))
    np.testing.assert_allclose(scalar_curvature_at(cg, points), scalar_curvature_at(g, points) / 2.0,
                               rtol=1e-10, atol=1e-12)


def test_pullback_by_identity(points):
    g = metric_preset("tangential_wave", 3)
    pb = PulledBackMetric(g, diffeo_preset("identity", 3))
    for a, b in zip(pb.evaluate(points, 2), g.evaluate(points, 2)):
        np.testing.assert_allclose(a, b, atol=1e-14)


def test_chain_rule_pullback_matches_symbolic(points):
    g = metric_preset("tangential_wave", 3)
    F = diffeo_preset("boundary_shear", 3)
    exact = pullback_metric(g, F)
    fast = PulledBackMetric(g, F)
    for a, b in zip(fast.evaluate(points, 1), exact.evaluate(points, 1)):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_induced_boundary_metric_stretched():
    grid = Grid(3, 8, 8)
    h = induced_boundary_metric(metric_preset("stretched", 3, scales=(2.0, 0.5)), grid, face=1)
    np.testing.assert_allclose(h, np.broadcast_to(np.diag([2.0, 0.5]), h.shape))


def test_gauge_flags():
    grid = Grid(3, 16, 16)
    good = factor_preset("gauge_bump", 3).gauge_flags(grid)
    bad = factor_preset("gauge_violating", 3).gauge_flags(grid)
    assert good.unit_on_boundary and good.flat_normal_derivative
    assert bad.unit_on_boundary and not bad.flat_normal_derivative


def test_boundary_shear_is_boundary_fixing():
    grid = Grid(3, 16, 16)
    F = diffeo_preset("boundary_shear", 3)
    info = F.check(grid)
    assert info["min_det"] > 0 and info["boundary_displacement"] < 1e-14
    X = grid.coords.reshape(-1, 3)[::7]
    np.testing.assert_allclose(F.inverse(F(X)), X, atol=1e-12)


def test_reflection_is_not_boundary_fixing():
    from calderon_lab.geometry.presets import reflection

    with pytest.raises(DiffeomorphismError):
        reflection(3).check(Grid(3, 8, 8))


def test_constructed_pair_identity(points):
    pair = constructed_pair(3)
    c = pair.factor(points)
    expected = c[:, None, None] * pullback_metric(pair.g2, pair.diffeo)(points)
    np.testing.assert_allclose(pair.g1(points), expected, atol=1e-12)
