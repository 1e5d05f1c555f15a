"""Boundary-harmonic coordinates, Z-charts, decay fits and gluing."""

from __future__ import annotations

import numpy as np
import pytest

from calderon_lab.errors import ChartError, InjectivityError
from calderon_lab.geometry import Grid, metric_preset
from calderon_lab.geometry.patch import Patch
from calderon_lab.operators import BoundaryData
from calderon_lab.zcoords import (
    boundary_harmonic_coords,
    build_z_coordinates,
    consistency_tolerance,
    injectivity_check,
    transition_and_gluing,
    z_jet_agreement,
)


@pytest.fixture(scope="module")
def patch():
    return Patch.square(3)


@pytest.fixture(scope="module")
def flat_chart(flat16, patch):
    return build_z_coordinates(flat16, patch)


def test_flat_harmonic_coordinates_are_affine(grid16, patch):
    hc = boundary_harmonic_coords(metric_preset("flat", 3), grid16, patch)
    np.testing.assert_allclose(hc.offsets(), 0.0, atol=1e-12)
    np.testing.assert_allclose(hc.jacobian, 1.0, atol=1e-10)


def test_curved_harmonic_coordinates_solve_equation(grid16, patch):
    hc = boundary_harmonic_coords(metric_preset("tangential_wave", 3), grid16, patch)
    assert hc.residual < 1e-10
    assert hc.subpatch.all()


def test_trace_contracts_exact(flat_chart):
    e = flat_chart.trace_errors()
    assert e["tangential"] < 1e-12
    assert e["normal"] < 1e-12
    assert e["w_last"] < 1e-12


def test_jacobian_at_patch(flat_chart, grid16, patch):
    Y = grid16.face_coords(0)[..., :-1][patch.face_mask(grid16)]
    inner = np.all((Y >= 0.25 + 2.5 * grid16.h) & (Y <= 0.75 - 2.5 * grid16.h), axis=1)
    D = flat_chart.jacobian_at_patch()[inner]
    assert len(D) > 0
    np.testing.assert_allclose(D[:, :2, :2], np.broadcast_to(np.eye(2), D[:, :2, :2].shape), atol=1e-8)
    assert np.all(D[:, 2, 2] >= 0.1)
    assert np.all(flat_chart.normal_derivative >= 0.1)


def test_identical_charts_agree_to_rounding(flat_chart):
    rep = z_jet_agreement(flat_chart, flat_chart)
    assert rep.rounding_level and rep.p is None


def test_patch_touching_the_seam_is_rejected(flat16):
    with pytest.raises(ChartError):
        build_z_coordinates(flat16, Patch(0, (0.0, 0.25), (0.5, 0.75)))


def test_theta_must_vanish_on_patch(flat16, grid16, patch):
    one = np.ones(grid16.tangential_shape)
    with pytest.raises(ChartError):
        build_z_coordinates(flat16, patch, theta=BoundaryData(one, one))


def test_metric_input_needs_grid(patch):
    with pytest.raises(ChartError):
        build_z_coordinates(metric_preset("flat", 3), patch)


def test_self_gluing_is_identity(flat_chart):
    glue = transition_and_gluing(flat_chart, flat_chart, depth=0.15)
    d = glue.F_direct - glue.points
    d[:, :-1] -= np.round(d[:, :-1])
    assert np.abs(d).max() < 1e-8
    assert glue.boundary_identity_error() < 1e-10


def test_consistency_tolerance_is_h_squared():
    assert consistency_tolerance(Grid(3, 16, 16)) == pytest.approx(1 / 256)


def test_injectivity_check_counts_collisions(grid16):
    X = grid16.coords.reshape(-1, 3)[:10] + 0.25 * grid16.h
    assert injectivity_check(X, grid16)["collisions"] == 0
    Y = np.vstack([X, X[:3] + 0.1 * grid16.h])
    assert injectivity_check(Y, grid16)["collisions"] == 3
    with pytest.raises(InjectivityError):
        injectivity_check(Y, grid16, raise_on_collision=True)
