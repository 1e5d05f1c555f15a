"""Assembly, solves and the discrete conformal scaling law."""

from __future__ import annotations

import numpy as np
import pytest

from calderon_lab.geometry import Grid, factor_preset, metric_preset
from calderon_lab.operators import (
    BoundaryData,
    assemble,
    assemble_laplace_beltrami,
    conformal_covariance_residual,
    solve_dirichlet,
)


def _mode(X):
    return np.sin(2 * np.pi * X[..., 0]) * np.sin(np.pi * X[..., -1])


def test_operator_is_symmetric(wave16):
    A = wave16.A
    assert abs(A - A.T).max() < 1e-12 * abs(A).max()


def test_flat_eigenmode_second_order():
    errs = []
    for N in (16, 32):
        grid = Grid(3, N, N)
        op = assemble(metric_preset("flat", 3), grid)
        u = _mode(grid.coords)
        Lu = op.apply(u)
        exact = 5 * np.pi ** 2 * u.ravel()[grid.interior_indices]
        errs.append(np.abs(Lu - exact).max() / np.abs(exact).max())
    assert errs[0] < 0.05
    assert errs[0] / errs[1] > 3.5


@pytest.mark.parametrize("u", [lambda X: np.ones(X.shape[:-1]), lambda X: X[..., -1]])
def test_flat_operator_annihilates_affine_normal_functions(flat16, grid16, u):
    assert np.abs(flat16.apply(u(grid16.coords))).max() < 1e-9


def test_dirichlet_solve_reproduces_linear_profile(flat16, grid16):
    data = BoundaryData.from_function(grid16, lambda X: X[..., -1])
    field = solve_dirichlet(flat16, data)
    np.testing.assert_allclose(field.values, grid16.coords[..., -1], atol=1e-8)
    assert flat16.solver.last_residual < 1e-9


def test_solution_is_linear_in_data(wave16, grid16, rng):
    F = rng.standard_normal((grid16.n_boundary, 2))
    U = wave16.extend(F)
    combo = wave16.extend(2 * F[:, 0] - 3 * F[:, 1])
    np.testing.assert_allclose(combo, 2 * U[:, 0] - 3 * U[:, 1], atol=1e-8)


def test_boundary_data_roundtrip(grid16, rng):
    v = rng.standard_normal(grid16.n_boundary)
    np.testing.assert_array_equal(BoundaryData.from_vector(grid16, v).vector(), v)


def test_laplace_beltrami_has_no_potential(grid16):
    op = assemble_laplace_beltrami(metric_preset("conformal_flat", 3), grid16)
    assert np.abs(op.potential).max() == 0.0


def test_potential_matches_curvature(grid16):
    op = assemble(metric_preset("conformal_flat", 3), grid16)
    from calderon_lab.geometry import conformal_potential

    np.testing.assert_allclose(op.potential, conformal_potential(op.metric, grid16.coords), rtol=1e-12)


def test_normal_derivative_of_linear_profile(flat16, grid16):
    U = grid16.coords[..., -1].ravel()
    m = grid16.N_t ** 2
    for method in ("flux", "closure", "one_sided"):
        d = flat16.normal_derivative(U, method)
        np.testing.assert_allclose(d[:m], 1.0, atol=1e-9)
        np.testing.assert_allclose(d[m:], -1.0, atol=1e-9)


def test_conformal_covariance_refines():
    g = metric_preset("tangential_wave", 3)
    c = factor_preset("gauge_smooth", 3)

    def u(X):
        return np.cos(2 * np.pi * X[..., 1]) * (1 + X[..., -1] ** 2)

    r = [conformal_covariance_residual(g, c, u, Grid(3, N, N))["relative"] for N in (12, 24)]
    assert r[1] < r[0] / 3.0
