"""Boundary normal coordinates, jets, gauge relations and the conformal normalization."""

from __future__ import annotations

import numpy as np
import pytest

from calderon_lab.errors import GaugeError, GeodesicError
from calderon_lab.gauge import (
    JetTable,
    boundary_normal_coordinates,
    compare_jets,
    conformal_normalization,
    derivative_relations,
    determinant_normalize,
    distance_relations,
    mean_curvature_profile,
    metric_jet,
)
from calderon_lab.geometry import factor_preset, metric_preset


def test_flat_bnc_is_identity():
    ch = boundary_normal_coordinates(metric_preset("flat", 3), 0, depth=0.2, steps=10, resolution=6)
    P = ch.points()
    t = np.linspace(0, 0.2, 11)
    np.testing.assert_allclose(P[..., -1], np.broadcast_to(t, P.shape[:-1]), atol=1e-14)
    np.testing.assert_allclose(P[..., :-1], np.broadcast_to(ch.base[..., None, :-1], P[..., :-1].shape), atol=1e-14)
    G, dG = ch.block_metric()
    np.testing.assert_allclose(G, np.broadcast_to(np.eye(2), G.shape), atol=1e-14)
    assert ch.quality["block_residual"] < 1e-12


def test_bnc_from_face_one_moves_inward():
    ch = boundary_normal_coordinates(metric_preset("flat", 3), 1, depth=0.1, steps=5, resolution=4)
    np.testing.assert_allclose(ch.points()[..., -1, -1], 0.9, atol=1e-14)


def test_mean_curvature_of_exponential_warp():
    r = 0.8
    ch = boundary_normal_coordinates(metric_preset("exponential_warp", 3, rate=r), 0, 0.1, 10, resolution=4)
    np.testing.assert_allclose(mean_curvature_profile(ch), 2 * r, rtol=1e-8)


def test_collar_jet_values():
    a = 0.6
    ch = boundary_normal_coordinates(metric_preset("collar_jet", 3, slope=a), 0, 0.05, 10, resolution=4)
    jets = metric_jet(ch, 2).metric_jets
    eye = np.broadcast_to(np.eye(2), jets[0].shape)
    np.testing.assert_allclose(jets[0], eye, atol=1e-12)
    np.testing.assert_allclose(jets[1], 0.0, atol=1e-10)
    np.testing.assert_allclose(jets[2], a * eye, atol=1e-6)


def test_metric_jet_needs_enough_layers():
    ch = boundary_normal_coordinates(metric_preset("flat", 3), 0, 0.05, 3, resolution=4)
    with pytest.raises(GaugeError):
        metric_jet(ch, 2)


def test_geodesics_leaving_the_slab_raise():
    with pytest.raises(GeodesicError):
        boundary_normal_coordinates(metric_preset("flat", 3), 0, depth=1.5, steps=30, resolution=4)


def test_determinant_normalize(rng):
    A = rng.standard_normal((5, 3, 3))
    G = A @ np.swapaxes(A, -1, -2) + 3 * np.eye(3)
    np.testing.assert_allclose(np.linalg.det(determinant_normalize(G)), 1.0, rtol=1e-12)
    with pytest.raises(GaugeError):
        determinant_normalize(-G)


def test_compare_jets_locates_injected_defect():
    ch = boundary_normal_coordinates(metric_preset("tangential_wave", 3), 0, 0.05, 10, resolution=6)
    A = metric_jet(ch, 2)
    jets = A.metric_jets.copy()
    jets[1] += 1e-2
    B = JetTable(2, jets, h=A.h)
    cmp = compare_jets(A, B, h=1 / 32)
    assert cmp.failing_orders == [1]
    assert compare_jets(A, A, h=1 / 32).all_passed


def test_jet_table_rejects_nonzero_low_mu_jets():
    with pytest.raises(GaugeError):
        JetTable(0, np.broadcast_to(np.eye(2), (1, 2, 2, 2)).copy(), mu_jets=np.ones((3, 2)))


def test_derivative_relations_for_gauge_factor():
    d = derivative_relations(metric_preset("tangential_wave", 3), factor_preset("gauge_smooth", 3), resolution=4)
    assert max(d["relative"]) < 1e-3


def test_distance_relations_for_gauge_factor():
    r = distance_relations(metric_preset("conformal_flat", 3), factor_preset("gauge_smooth", 3), resolution=3)
    assert max(r["residuals"]) < 1e-3


def test_normalization_kills_curvature_jets():
    res = conformal_normalization(metric_preset("tangential_wave", 3), 2, face=0, resolution=12)
    assert np.all(res.reduction() >= 100)
    assert res.table.mu_jets is not None
