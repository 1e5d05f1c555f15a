"""Runge-type approximation of Neumann data by solutions vanishing on a patch.

Boundary controls are supported away from the closed patch ``Gamma``.  The
normal derivatives on ``Gamma`` of their ``L_g``-harmonic extensions are
combined by damped least squares to approximate a target.  The result is
a constructive, finite-dimensional stand-in for the density statement
that makes the boundary function ``theta`` of the Z-coordinate
construction exist.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dnmap import frequency_set
from .errors import ConditioningError, RungeError
from .geometry.grid import Grid
from .geometry.patch import Patch
from .operators import BoundaryData, SparseOperator


@dataclass
class ControlBasis:
    """Boundary controls vanishing on the closed patch.

    Attributes
    ----------
    vectors : ndarray, shape (n_boundary, m)
        Control values at boundary nodes.
    labels : list of tuple
        ``(face, k, kind)`` per column.
    patch : Patch
    margin : float
        Controls vanish within this (box) distance of the patch.
    """

    grid: Grid
    vectors: np.ndarray
    labels: list
    patch: Patch
    margin: float

    @property
    def size(self) -> int:
        return self.vectors.shape[1]

    def truncate(self, m: int) -> "ControlBasis":
        """The first ``m`` controls (the families are nested)."""
        if m > self.size:
            raise RungeError(f"basis has only {self.size} controls, requested {m}")
        return ControlBasis(self.grid, self.vectors[:, :m], self.labels[:m], self.patch, self.margin)

    def rank(self, rtol: float = 1e-10) -> int:
        s = np.linalg.svd(self.vectors, compute_uv=False)
        return int(np.sum(s > rtol * s[0])) if s.size else 0


def control_basis(grid: Grid, patch: Patch, m: int = 64, margin: float | None = None,
                  transition: float = 0.1, faces=(None,)) -> ControlBasis:
    """Windowed Fourier controls ordered by frequency (nested in ``m``).

    Each control is ``w(x') * phi_k(x')`` with ``phi_k`` a real Fourier mode
    and ``w`` a smooth window that vanishes within ``margin`` of the patch and
    equals one beyond ``margin + transition``.

    Parameters
    ----------
    faces : tuple
        Faces carrying controls; ``None`` stands for the patch face.  The
        opposite face may be added, e.g. ``(None, 1)``.
    """
    margin = 2.0 * grid.h_t if margin is None else margin
    M = grid.N_t ** (grid.n - 1)
    Y = grid.face_coords(0)[..., :-1].reshape(M, grid.n - 1)
    faces = [patch.face if f is None else f for f in faces]
    cols, labels = [], []
    K = 1
    while True:
        freqs = frequency_set(grid.n - 1, K)
        count = sum(1 if not any(k) else 2 for k in freqs) * len(faces)
        if count >= m or 2 * K + 2 >= grid.N_t:
            break
        K += 1
    for k in freqs:
        phase = 2 * np.pi * Y @ np.array(k, float)
        kinds = [("const", np.ones(M))] if not any(k) else [("cos", np.cos(phase)), ("sin", np.sin(phase))]
        for kind, vals in kinds:
            for face in faces:
                v = np.zeros(2 * M)
                w = 1.0 - patch.window(Y, margin, margin + transition) if face == patch.face else np.ones(M)
                v[face * M : (face + 1) * M] = w * vals
                cols.append(v)
                labels.append((face, tuple(k), kind))
    if len(cols) < m:
        raise RungeError(f"grid N_t={grid.N_t} supports only {len(cols)} controls, requested {m}")
    V = np.stack(cols[:m], axis=1)
    V[patch.boundary_mask(grid)] = 0.0
    return ControlBasis(grid, V, labels[:m], patch, margin)


@dataclass
class RungeResult:
    """Least-squares approximation on one basis size."""

    coefficients: np.ndarray
    residual: float
    solution: np.ndarray = field(repr=False)
    traces: np.ndarray = field(repr=False)
    singular_values: np.ndarray = field(repr=False)
    m: int = 0

    def boundary_data(self, basis: ControlBasis) -> BoundaryData:
        return BoundaryData.from_vector(basis.grid, basis.vectors @ self.coefficients)


def _patch_traces(operator: SparseOperator, basis: ControlBasis):
    U = operator.extend(basis.vectors)
    D = operator.normal_derivative(U)
    nodes = basis.patch.boundary_nodes(operator.grid)
    return U, D[nodes], operator.boundary_weights[nodes]


def _damped_lstsq(A, b, lam):
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise ConditioningError("control traces vanish identically on the patch", s)
    filt = s / (s ** 2 + lam * s[0] ** 2)
    return Vt.T @ (filt * (U.T @ b)), s


def runge_approximate(operator: SparseOperator, patch: Patch, target, basis: ControlBasis,
                      lam: float = 1e-10, sizes=None):
    """Damped least squares fit of Neumann data on ``patch``.

    Minimises ``|| sum_j a_j d_nu u_j - target ||`` in the area-weighted
    ``L^2(Gamma)`` norm with Tikhonov damping ``lam * sigma_max^2``.

    Parameters
    ----------
    operator : SparseOperator
    patch : Patch
    target : float, ndarray or callable
        Values at the patch nodes (or a function of tangential points).
    basis : ControlBasis
    lam : float
        Relative damping.
    sizes : sequence of int, optional
        Nested basis sizes; by default only the full basis.

    Returns
    -------
    list of RungeResult
        One per size.  ``residual`` is relative to ``||target||`` (absolute
        when the target vanishes).

    Raises
    ------
    ConditioningError
        If the control traces carry no information.
    """
    grid = operator.grid
    U, D, w = _patch_traces(operator, basis)
    nodes = patch.boundary_nodes(grid)
    m_face = grid.N_t ** (grid.n - 1)
    Yp = grid.face_coords(patch.face)[..., :-1].reshape(m_face, grid.n - 1)[nodes - patch.face * m_face]
    if callable(target):
        t = np.asarray(target(Yp), float)
    else:
        t = np.broadcast_to(np.asarray(target, float), (nodes.size,)).astype(float)
    sw = np.sqrt(w)
    norm_t = np.linalg.norm(sw * t)
    results = []
    for m in sizes or [basis.size]:
        A = sw[:, None] * D[:, :m]
        a, s = _damped_lstsq(A, sw * t, lam)
        r = np.linalg.norm(A @ a - sw * t)
        res = r / norm_t if norm_t > 0 else r
        results.append(RungeResult(a, float(res), U[:, :m] @ a, D[:, :m] @ a, s, m))
    return results


def residual_curve(operator: SparseOperator, patch: Patch, target=1.0, sizes=(8, 16, 32, 64), **kw):
    """Residuals over nested bases of increasing size."""
    basis = control_basis(operator.grid, patch, max(sizes), **kw)
    res = runge_approximate(operator, patch, target, basis, sizes=sizes)
    return [r.residual for r in res], res, basis


def make_theta(operator: SparseOperator, patch: Patch, theta_min: float = 0.1, sizes=(8, 16, 32, 64),
               target: float = 1.0, **kw):
    """Boundary data ``theta`` vanishing on the patch whose extension has ``d_nu w >= theta_min`` there.

    The smallest basis size reaching the bound is used.

    Returns
    -------
    theta : BoundaryData
    info : dict
        Residual curve, chosen size and the minimum normal derivative on the patch.

    Raises
    ------
    RungeError
        If no basis size reaches ``theta_min``.
    """
    curve, results, basis = residual_curve(operator, patch, target, sizes, **kw)
    for r in results:
        dnu = r.traces
        if dnu.min() >= theta_min:
            theta = basis.truncate(r.m).vectors @ r.coefficients
            info = {"residuals": curve, "sizes": list(sizes), "m": r.m, "min_normal_derivative": float(dnu.min()),
                    "max_abs_on_patch": float(np.abs(theta[patch.boundary_mask(operator.grid)]).max())}
            return BoundaryData.from_vector(operator.grid, theta), info
    raise RungeError(
        f"no basis size reached d_nu w >= {theta_min} on the patch; residual curve {curve}"
    )


def unique_continuation_check(operator: SparseOperator, patch: Patch, basis: ControlBasis,
                              lam: float = 1e-10) -> dict:
    """Zero Cauchy data on the patch forces the zero field.

    Every control vanishes on the patch, so its extension has zero
    Dirichlet data there.  A least-squares fit of zero Neumann data from
    the controls must then return the zero field.  The smallest singular
    value of the trace map shows that no nonzero combination of controls
    comes close to having vanishing Neumann data on the patch.

    Returns
    -------
    dict
        ``field_norm`` (max norm of the fitted field), ``sigma_min_relative``
        and ``rank`` of the trace map.
    """
    U, D, w = _patch_traces(operator, basis)
    A = np.sqrt(w)[:, None] * D
    a, s = _damped_lstsq(A, np.zeros(A.shape[0]), lam)
    field_norm = float(np.abs(U @ a).max()) if a.size else 0.0
    rel = s / s[0]
    return {"field_norm": field_norm, "sigma_min_relative": float(rel[-1]),
            "rank": int(np.sum(rel > 1e-12)), "m": int(basis.size)}
