"""DN matrices, the flat-slab oracle and boundary determination."""

from __future__ import annotations

import warnings

import numpy as np

from calderon_lab.dnmap import (
    boundary_metric_from_dn,
    dirichlet_to_neumann,
    flat_block_errors,
    flat_dn_block,
    fourier_basis,
    frequency_set,
    gauge_invariance_check,
    observed_order,
)
from calderon_lab.geometry import Grid, factor_preset, metric_preset
from calderon_lab.operators import assemble


def test_flat_block_zero_frequency():
    np.testing.assert_allclose(flat_dn_block((0, 0)), [[-1, 1], [1, -1]])


def test_flat_block_large_frequency_is_diagonal():
    B = flat_dn_block((3, 0))
    kappa = 6 * np.pi
    assert abs(B[0, 0] + kappa) < 1e-6 * kappa
    assert abs(B[0, 1]) < 1e-6


def test_frequency_set_modulo_sign():
    ks = frequency_set(2, 1)
    assert ks[0] == (0, 0)
    assert len(ks) == 5
    assert all(tuple(-np.asarray(k)) not in ks for k in ks[1:])


def test_flat_dn_matches_oracle(flat16, grid16):
    dn = dirichlet_to_neumann(flat16, fourier_basis(grid16, 2))
    r = flat_block_errors(dn, max_norm=2.0)
    assert r["max_error"] < 0.02
    assert r["leakage"] < 1e-8
    assert dn.symmetry_defect() < 1e-10


def test_zero_data_gives_zero_flux(wave16, grid16):
    U = wave16.extend(np.zeros(grid16.n_boundary))
    assert np.abs(wave16.normal_derivative(U)).max() == 0.0


def test_curved_dn_is_symmetric_in_area_pairing(wave16, grid16):
    dn = dirichlet_to_neumann(wave16, fourier_basis(grid16, 1))
    assert dn.symmetry_defect() < 1e-9


def test_gauge_invariance_and_negative_control():
    grid = Grid(3, 16, 16)
    g = metric_preset("flat", 3)
    good = gauge_invariance_check(g, factor_preset("gauge_bump", 3), grid, K=1)["distance"]
    bad = gauge_invariance_check(g, factor_preset("gauge_violating", 3), grid, K=1)["distance"]
    assert good < 1e-3
    assert bad > 30 * good


def test_observed_order_of_exact_power():
    assert abs(observed_order([1.0 / 16 ** 2, 1.0 / 32 ** 2], [16, 32]) - 2.0) < 1e-12


def test_boundary_metric_recovery_on_stretched_metric():
    errs = []
    for N in (16, 32):
        op = assemble(metric_preset("stretched", 3, scales=(2.0, 0.5)), Grid(3, N, N))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            r = boundary_metric_from_dn(op, magnitudes=(1, 2, 3))
        G = r["inverse_metric"]
        assert abs(G[0, 1]) < 1e-10
        errs.append(np.abs(np.diag(G) / np.array([0.5, 2.0]) - 1).max())
    assert errs[1] < 0.1
    assert errs[1] < errs[0]


def test_gauge_check_reuses_reference_matrix():
    grid = Grid(3, 8, 8)
    g = metric_preset("tangential_wave", 3)
    c = factor_preset("gauge_violating", 3)
    fresh = gauge_invariance_check(g, c, grid, K=1)
    reused = gauge_invariance_check(g, c, grid, K=1, reference=fresh["dn_g"])
    assert reused["dn_g"] is fresh["dn_g"]
    assert reused["distance"] == fresh["distance"]
