"""Green's functions, Poisson weights, kernel laws and probe embeddings."""

from __future__ import annotations

import numpy as np
import pytest

from calderon_lab.errors import ChartError, ProximityError
from calderon_lab.geometry import Grid, constructed_pair, diffeo_preset, metric_preset
from calderon_lab.greens import (
    box_points,
    diagonal_asymptotics,
    diagonal_constant,
    embedding_map,
    flat_green_series,
    flat_poisson_weight_series,
    green_function,
    green_transformation_check,
    green_values,
    node_box,
    poisson_weight,
    poisson_weight_field,
    reconstruct_J,
    scaled_kernel,
    schwartz_kernel_check,
)
from calderon_lab.operators import assemble

PTS = np.array([[0.5, 0.5, 0.5], [0.25, 0.5, 0.25], [0.75, 0.25, 0.625]])


def test_diagonal_constant_three_dimensions():
    assert diagonal_constant(3) == pytest.approx(1 / (4 * np.pi))
    with pytest.raises(ValueError):
        diagonal_constant(2)


def test_green_function_is_symmetric_and_vanishes_on_faces(wave16, grid16):
    tab = scaled_kernel(wave16, PTS)
    assert tab.symmetry_error() < 1e-10
    G = green_function(wave16, PTS)
    assert np.abs(G[grid16.boundary_indices]).max() == 0.0


def test_flat_green_function_against_series(flat16):
    G = green_function(flat16, PTS[:1])
    vals = green_values(flat16, G, PTS[1:])[:, 0]
    exact = np.array([flat_green_series(PTS[0], y) for y in PTS[1:]])
    np.testing.assert_allclose(vals, exact, rtol=0.03)


def test_flat_poisson_weight_against_series():
    errs = []
    for N in (16, 32):
        op = assemble(metric_preset("flat", 3), Grid(3, N, N))
        P = poisson_weight(op, sources=PTS[:2])
        exact = np.array([flat_poisson_weight_series(x[-1]) for x in PTS[:2]])
        errs.append(np.abs(P / exact - 1).max())
    assert errs[1] < 0.02
    assert errs[1] < errs[0]


def test_poisson_weight_field_positive_and_consistent(wave16, grid16):
    Pf = poisson_weight_field(wave16)
    inner = Pf[..., 1:-1]
    assert np.all(inner > 0)
    idx = (4, 8, 8)
    x = grid16.coords[idx]
    assert Pf[idx] == pytest.approx(poisson_weight(wave16, sources=x[None])[0], rel=1e-10)


def test_sources_near_a_face_are_rejected(flat16):
    with pytest.raises(ProximityError):
        green_function(flat16, [[0.5, 0.5, 0.05]])


def test_short_radii_are_rejected(flat16):
    with pytest.raises(ValueError):
        diagonal_asymptotics(flat16, [0.5, 0.5, 0.5], radii=[0.1, 0.2, 0.25, 0.3, 0.35])
    with pytest.raises(ValueError):
        diagonal_asymptotics(flat16, [0.5, 0.5, 0.5])


def test_laws_for_identity_map_and_unit_factor(wave16):
    from calderon_lab.geometry import factor_preset

    r = green_transformation_check(wave16, wave16, diffeo_preset("identity", 3), factor_preset("constant", 3), PTS)
    assert max(r["G"], r["P"], r["H"]) < 1e-12
    assert r["H_bound_holds"]


def test_laws_for_constructed_pair():
    grid = Grid(3, 16, 16)
    pair = constructed_pair(3)
    r = green_transformation_check(assemble(pair.g1, grid), assemble(pair.g2, grid), pair.diffeo, pair.factor, PTS)
    assert max(r["G"], r["P"], r["H"]) < 0.05


def test_schwartz_kernel_flat(grid16, flat16):
    m = grid16.N_t ** 2
    centre = int(np.ravel_multi_index((8, 8), grid16.tangential_shape))
    r = schwartz_kernel_check(flat16, [centre, m + centre])
    assert r["max_relative_error"] < 0.05


def test_embedding_rejects_close_probes(grid16, flat16):
    with pytest.raises(ProximityError):
        embedding_map(flat16, PTS[:1], samples=PTS[:1] + [0.0, 0.0, grid16.h_n])


def test_reconstruction_of_the_identity():
    grid = Grid(3, 16, 16)
    op = assemble(metric_preset("tangential_wave", 3), grid)
    h = grid.h_n
    probes = box_points(grid, node_box(grid, (0.25, 0.25, 2 * h), (0.75, 0.75, 2 * h)), stride=2)
    sbox = node_box(grid, (0.375, 0.375, 5 * h), (0.625, 0.625, 7 * h))
    samples = box_points(grid, sbox)
    T1 = embedding_map(op, probes, samples=samples)
    T2 = embedding_map(op, probes, box=node_box(grid, (0.25, 0.25, 5 * h), (0.75, 0.75, 9 * h)))
    shape = tuple(b - a for a, b in sbox)
    rec = reconstruct_J(T1, T2, grid, op.metric, op.metric, reference=diffeo_preset("identity", 3),
                        sample_shape=shape)
    np.testing.assert_allclose(rec.J, samples, atol=1e-6)
    np.testing.assert_allclose(rec.c_hat, 1.0, atol=1e-6)
    assert rec.match["fraction_within_cell"] == 1.0
    assert rec.conformal_residual < 1e-5
    assert not rec.ambiguous


def test_reconstruction_needs_a_box(grid16, flat16):
    T = embedding_map(flat16, PTS[:1], samples=PTS[1:])
    with pytest.raises(ChartError):
        reconstruct_J(T, T, grid16)
