"""Dirichlet-to-Neumann maps of the discrete conformal Laplacian.

The DN map is represented by its Galerkin matrix on a truncated real
Fourier basis of each face: column ``j`` is obtained by extending the
basis function ``phi_j`` (placed on one face, zero on the other) and
taking inward unit normal derivatives on both faces.  Two matrices are
kept:

``matrix``
    coefficients of ``N phi_j`` in the basis (coordinate ``L^2`` projection);
``pairing``
    ``<phi_i, N phi_j>`` in the boundary area measure, which is symmetric
    for the continuum operator.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import Grid, MetricField, conformal_rescale
from .operators import SparseOperator, assemble_conformal_laplacian


@dataclass(frozen=True)
class BasisLabel:
    """Identifies one boundary basis function."""

    face: int
    k: tuple
    kind: str  # "const", "cos" or "sin"


@dataclass
class BoundaryBasis:
    """Boundary functions stored as columns over the boundary nodes.

    Attributes
    ----------
    vectors : ndarray, shape (n_boundary, m)
    labels : list of BasisLabel
    """

    grid: Grid
    vectors: np.ndarray
    labels: list

    @property
    def size(self) -> int:
        return self.vectors.shape[1]

    def index(self, face: int, k, kind: str) -> int:
        return self.labels.index(BasisLabel(face, tuple(k), kind))


def frequency_set(dim: int, K: int) -> list:
    """Representatives ``k`` of ``Z^dim`` modulo sign with ``|k|_inf <= K``, sorted by ``|k|``."""
    ks = []
    for k in itertools.product(range(-K, K + 1), repeat=dim):
        nz = [c for c in k if c != 0]
        if not nz or nz[0] > 0:
            ks.append(k)
    return sorted(ks, key=lambda k: (sum(c * c for c in k), tuple(-c for c in k)))


def fourier_basis(grid: Grid, K: int, faces=(0, 1)) -> BoundaryBasis:
    """Real Fourier modes ``cos/sin(2 pi k.x')`` with ``|k|_inf <= K`` on the given faces."""
    if 2 * K >= grid.N_t:
        raise ValueError(f"K={K} is not resolved by N_t={grid.N_t}")
    m = grid.N_t ** (grid.n - 1)
    Xt = grid.face_coords(0)[..., :-1].reshape(m, grid.n - 1)
    cols, labels = [], []
    for face in faces:
        for k in frequency_set(grid.n - 1, K):
            phase = 2 * np.pi * Xt @ np.array(k, dtype=float)
            kinds = [("const", np.ones(m))] if not any(k) else [("cos", np.cos(phase)), ("sin", np.sin(phase))]
            for kind, vals in kinds:
                v = np.zeros(2 * m)
                v[face * m : (face + 1) * m] = vals
                cols.append(v)
                labels.append(BasisLabel(face, tuple(k), kind))
    return BoundaryBasis(grid, np.stack(cols, axis=1), labels)


def nodal_basis(grid: Grid, nodes) -> BoundaryBasis:
    """Indicator vectors of selected boundary nodes (indices into the boundary ordering)."""
    nodes = np.atleast_1d(nodes)
    V = np.zeros((grid.n_boundary, nodes.size))
    V[nodes, np.arange(nodes.size)] = 1.0
    m = grid.N_t ** (grid.n - 1)
    labels = [BasisLabel(int(b >= m), tuple(np.unravel_index(int(b % m), grid.tangential_shape)), "node") for b in nodes]
    return BoundaryBasis(grid, V, labels)


@dataclass
class DNMatrix:
    """Discrete DN map on a boundary basis."""

    basis: BoundaryBasis
    matrix: np.ndarray
    pairing: np.ndarray
    traces: np.ndarray = field(repr=False)
    method: str = "flux"

    def symmetry_defect(self) -> float:
        """``||M - M^T||_F / ||M||_F`` for the area pairing ``M``."""
        M = self.pairing
        return float(np.linalg.norm(M - M.T) / np.linalg.norm(M))

    def frobenius_distance(self, other: "DNMatrix") -> float:
        return float(np.linalg.norm(self.matrix - other.matrix) / np.linalg.norm(self.matrix))


def dirichlet_to_neumann(operator: SparseOperator, basis: BoundaryBasis, method: str = "flux") -> DNMatrix:
    """DN matrix of an assembled operator on a boundary basis.

    Parameters
    ----------
    operator : SparseOperator
    basis : BoundaryBasis
    method : str
        Normal derivative scheme, see :meth:`SparseOperator.normal_derivative_matrix`.
    """
    grid = operator.grid
    U = operator.extend(basis.vectors)
    D = operator.normal_derivative(U, method)
    w_coord = grid.h_t ** (grid.n - 1)
    Phi = basis.vectors
    norms = np.einsum("bi,bi->i", Phi, Phi) * w_coord
    matrix = (Phi.T @ D) * w_coord / norms[:, None]
    pairing = Phi.T @ (operator.boundary_weights[:, None] * D)
    return DNMatrix(basis, matrix, pairing, D, method)


def dn_map(metric: MetricField, grid: Grid, K: int = 2, method: str = "flux", **kw) -> DNMatrix:
    """Assemble and compute the DN matrix of ``L_g`` on the Fourier basis ``|k|_inf <= K``."""
    op = assemble_conformal_laplacian(metric, grid, **kw)
    return dirichlet_to_neumann(op, fourier_basis(grid, K), method)


# ---------------------------------------------------------------- oracles
def flat_dn_block(k) -> np.ndarray:
    """Exact DN block of the flat slab for the frequency ``k`` (inward normal).

    Rows and columns are ordered (face 0, face 1).
    """
    kappa = 2 * np.pi * float(np.linalg.norm(np.asarray(k, dtype=float)))
    if kappa == 0:
        return np.array([[-1.0, 1.0], [1.0, -1.0]])
    d = -kappa / np.tanh(kappa)
    o = kappa / np.sinh(kappa)
    return np.array([[d, o], [o, d]])


def flat_block_errors(dn: DNMatrix, max_norm: float = 4.0) -> dict:
    """Compare a DN matrix with the separation-of-variables blocks.

    For every basis function with ``|k| <= max_norm`` the 2x2 block coupling
    the copies on both faces is compared with :func:`flat_dn_block` in the
    relative Frobenius norm.  Coupling to other basis functions should be
    zero and is reported as ``leakage``.

    Returns
    -------
    dict
        ``max_error``, per-function ``errors`` keyed by label, and ``leakage``.
    """
    labels = dn.basis.labels
    errors = {}
    mask = np.ones_like(dn.matrix, dtype=bool)
    for i, lab in enumerate(labels):
        if lab.face != 0:
            continue
        j = dn.basis.index(1, lab.k, lab.kind)
        idx = [i, j]
        mask[np.ix_(idx, idx)] = False
        if np.linalg.norm(lab.k) > max_norm + 1e-12:
            continue
        B = dn.matrix[np.ix_(idx, idx)]
        ref = flat_dn_block(lab.k)
        errors[lab] = float(np.linalg.norm(B - ref) / np.linalg.norm(ref))
    leak = float(np.abs(np.where(mask, dn.matrix, 0.0)).max())
    return {"max_error": max(errors.values()), "errors": errors, "leakage": leak}


# -------------------------------------------------------- gauge invariance
def gauge_invariance_check(metric: MetricField, factor, grid: Grid, K: int = 2, method: str = "flux",
                           reference: DNMatrix | None = None, **kw) -> dict:
    """Relative Frobenius distance between the DN matrices of ``g`` and ``c g``.

    Parameters
    ----------
    reference : DNMatrix, optional
        Precomputed DN matrix of ``g`` on the same grid and basis (skips one assembly and solve).

    Returns
    -------
    dict
        ``distance`` and the conformal factor's ``gauge`` flags.
    """
    basis = fourier_basis(grid, K) if reference is None else reference.basis
    if reference is None:
        N_g = dirichlet_to_neumann(assemble_conformal_laplacian(metric, grid, **kw), basis, method)
    else:
        N_g = reference
    N_cg = dirichlet_to_neumann(assemble_conformal_laplacian(conformal_rescale(metric, factor), grid, **kw), basis, method)
    return {"distance": N_g.frobenius_distance(N_cg), "gauge": factor.gauge_flags(grid), "dn_g": N_g, "dn_cg": N_cg}


def observed_order(errors, sizes) -> float:
    """Least-squares slope of ``log error`` against ``log h``."""
    h = 1.0 / np.asarray(sizes, dtype=float)
    return float(np.polyfit(np.log(h), np.log(np.asarray(errors, dtype=float)), 1)[0])


# ----------------------------------------------------- boundary determination
def boundary_metric_from_dn(operator: SparseOperator, directions=None, magnitudes=(2, 3, 4), face: int = 0) -> dict:
    """Recover the inverse boundary metric from the high-frequency DN symbol.

    For a plane wave ``cos(2 pi m d.x')`` on one face the Rayleigh
    quotient ``-<phi, N phi>/<phi, phi>`` grows like ``2 pi m |d|_{g^-1}``.
    The slope in ``m`` is fitted per direction ``d``; then the quadratic
    form ``g^{ab} d_a d_b`` is solved for by least squares.  The recovered
    tensor is an average over the face for non-constant metrics.

    Returns
    -------
    dict
        ``inverse_metric`` ((n-1) x (n-1)), per-direction ``slopes`` and ``warnings``.
    """
    grid = operator.grid
    d = grid.n - 1
    if directions is None:
        directions = [tuple(int(i == a) for i in range(d)) for a in range(d)]
        directions += [tuple(1 if i in (a, b) else 0 for i in range(d)) for a in range(d) for b in range(a + 1, d)]
        directions += [tuple(1 if i == a else (-1 if i == b else 0) for i in range(d)) for a in range(d) for b in range(a + 1, d)]
    m = grid.N_t ** d
    Xt = grid.face_coords(face)[..., :-1].reshape(m, d)
    cols, meta = [], []
    notes = []
    for dirv in directions:
        for mag in magnitudes:
            k = mag * np.asarray(dirv, dtype=float)
            if 2 * np.pi * np.linalg.norm(k) * grid.h_t > 0.5:
                notes.append(f"frequency {tuple(k)} is under-resolved (kappa h_t > 0.5)")
            v = np.zeros(2 * m)
            v[face * m : (face + 1) * m] = np.cos(2 * np.pi * Xt @ k)
            cols.append(v)
            meta.append((tuple(dirv), mag))
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    F = np.stack(cols, axis=1)
    U = operator.extend(F)
    D = operator.normal_derivative(U)
    rq = -np.einsum("bi,bi->i", F, D) / np.einsum("bi,bi->i", F, F)
    slopes, rows, rhs = {}, [], []
    for dirv in directions:
        sel = [i for i, (dv, _) in enumerate(meta) if dv == tuple(dirv)]
        mags = np.array([meta[i][1] for i in sel], dtype=float)
        s = np.polyfit(mags, rq[sel], 1)[0]
        slopes[tuple(dirv)] = float(s)
        q = (s / (2 * np.pi)) ** 2
        dv = np.asarray(dirv, dtype=float)
        rows.append([dv[a] * dv[b] * (1 if a == b else 2) for a in range(d) for b in range(a, d)])
        rhs.append(q)
    coef, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    G = np.zeros((d, d))
    c = 0
    for a in range(d):
        for b in range(a, d):
            G[a, b] = G[b, a] = coef[c]
            c += 1
    return {"inverse_metric": G, "slopes": slopes, "warnings": notes}
