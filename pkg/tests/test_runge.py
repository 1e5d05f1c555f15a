"""Boundary controls, least-squares Runge approximation and theta."""

from __future__ import annotations

import numpy as np
import pytest

from calderon_lab.errors import RungeError
from calderon_lab.geometry.patch import Patch
from calderon_lab.runge import (
    control_basis,
    make_theta,
    residual_curve,
    runge_approximate,
    unique_continuation_check,
)


@pytest.fixture(scope="module")
def patch():
    return Patch.square(3)


def test_controls_vanish_on_patch_and_are_nested(grid16, patch):
    big = control_basis(grid16, patch, 32)
    small = control_basis(grid16, patch, 16)
    assert np.abs(big.vectors[patch.boundary_mask(grid16)]).max() == 0.0
    np.testing.assert_array_equal(big.vectors[:, :16], small.vectors)


def test_controls_are_independent_on_a_fine_face(patch):
    from calderon_lab.geometry import Grid

    assert control_basis(Grid(3, 32, 32), patch, 32).rank() == 32


def test_basis_size_limits(grid16, patch):
    with pytest.raises(RungeError):
        control_basis(grid16, patch, 10_000)
    with pytest.raises(RungeError):
        control_basis(grid16, patch, 8).truncate(9)


def test_zero_target(flat16, patch, grid16):
    r = runge_approximate(flat16, patch, 0.0, control_basis(grid16, patch, 16))[0]
    assert r.residual == 0.0
    assert np.abs(r.coefficients).max() == 0.0


def test_target_in_span_is_reproduced(wave16, patch, grid16, rng):
    basis = control_basis(grid16, patch, 16)
    a = rng.standard_normal(16)
    U = wave16.extend(basis.vectors @ a)
    nodes = patch.boundary_nodes(grid16)
    target = wave16.normal_derivative(U)[nodes]
    r = runge_approximate(wave16, patch, target, basis, lam=1e-16)[0]
    assert r.residual < 1e-8


def test_residual_curve_nonincreasing(wave16, patch):
    curve, _, _ = residual_curve(wave16, patch, 1.0, (8, 16, 32))
    assert np.all(np.diff(curve) <= 1e-12)
    assert curve[-1] < curve[0]


def test_theta_properties(flat16, patch, grid16):
    theta, info = make_theta(flat16, patch, theta_min=0.1, sizes=(8, 16, 32))
    assert info["max_abs_on_patch"] == 0.0
    assert info["min_normal_derivative"] >= 0.1
    assert np.abs(theta.vector()[patch.boundary_mask(grid16)]).max() == 0.0


def test_unreachable_theta_raises(flat16, patch):
    with pytest.raises(RungeError):
        make_theta(flat16, patch, theta_min=1e6, sizes=(8,))


def test_unique_continuation(flat16, patch, grid16):
    basis = control_basis(grid16, patch, 32)
    uc = unique_continuation_check(flat16, patch, basis)
    assert uc["field_norm"] == 0.0
    assert uc["rank"] == basis.rank()
