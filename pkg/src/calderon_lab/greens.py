"""Green's functions of the conformal Laplacian and the kernels built from them.

The discrete Green's function with pole ``y`` solves ``A_II G = s_y``.  Here
``A`` is the energy-form matrix, which already carries the weight
``cell_volume * sqrt|g|``, and ``s_y`` holds the multilinear interpolation
weights of ``y``.  For a node ``y`` this is the indicator divided by
``cell_volume * sqrt|g|(y)`` in the strong form, so ``delta_y`` is
normalized against the Riemannian volume.  Point values are read with the
same weights, ``G(x, y) = s_x . A_II^{-1} s_y``, which makes the discrete
kernel exactly symmetric.

From ``G`` the module builds

* the weight ``P(x) = ||d_nu' G(x, .)||_{L^2(dS)}``,
* the scaled kernel ``H(x, y) = G(x, y) / (P(x) P(y))``,
* the probe embedding ``x -> (H(x, y_j))_j`` and the map ``J`` recovered
  by matching embeddings of two metrics.

It also provides checks of the transformation laws under
``g_1 = c F^* g_2``, of the Schwartz kernel of the Dirichlet-to-Neumann map
and of the near-diagonal asymptotics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import gamma, pi

import numpy as np
import scipy.sparse as sps

from .errors import ChartError, ProximityError
from .gauge.geodesics import integrate
from .geometry.grid import Grid
from .geometry.interp import GridInterpolator
from .operators import SparseOperator

__all__ = [
    "GreenTable",
    "EmbeddingTable",
    "ReconstructionResult",
    "diagonal_constant",
    "source_weights",
    "green_function",
    "green_values",
    "green_traces",
    "poisson_weight",
    "poisson_weight_field",
    "scaled_kernel",
    "flat_green_series",
    "flat_poisson_weight_series",
    "green_transformation_check",
    "schwartz_kernel_check",
    "diagonal_asymptotics",
    "embedding_map",
    "reconstruct_J",
]


def diagonal_constant(n: int) -> float:
    """``1 / ((n - 2) omega_n)`` with ``omega_n = 2 pi^(n/2) / Gamma(n/2)``."""
    if n < 3:
        raise ValueError("the diagonal constant is defined for n >= 3")
    return 1.0 / ((n - 2) * 2.0 * pi ** (n / 2) / gamma(n / 2))


# ============================================================ sources
def _as_points(X, n):
    X = np.atleast_2d(np.asarray(X, float))
    if X.shape[-1] != n:
        raise ValueError(f"points must have {n} coordinates")
    return X


def source_weights(grid: Grid, X, min_layers: float = 2.0) -> sps.csr_matrix:
    """Multilinear weights of points ``X`` on the interior nodes, shape (P, n_interior).

    Raises
    ------
    ProximityError
        If a point lies closer than ``min_layers`` normal layers to a face.
    """
    X = _as_points(X, grid.n)
    dist = np.minimum(X[:, -1], 1.0 - X[:, -1]) / grid.h_n
    if np.any(dist < min_layers - 1e-9):
        k = int(np.argmin(dist))
        raise ProximityError(f"point {X[k].tolist()} is {dist[k]:.2f} layers from a face (< {min_layers})")
    E = GridInterpolator.for_grid(grid, kind="linear").as_matrix(X)
    return sps.csr_matrix(E[:, grid.interior_indices])


def green_function(operator: SparseOperator, sources, min_layers: float = 2.0) -> np.ndarray:
    """Nodal Green's functions with poles at ``sources``.

    Returns
    -------
    ndarray, shape (grid.size, P)
        Zero at boundary nodes.

    Raises
    ------
    ProximityError
        For sources closer than ``min_layers`` to a face.
    EigenvalueObstructionError
        From the solver, if zero is a Dirichlet eigenvalue.
    """
    g = operator.grid
    S = source_weights(g, sources, min_layers)
    Gi = operator.solve_interior(S.T.toarray())
    G = np.zeros((g.size, Gi.shape[1]))
    G[g.interior_indices] = Gi
    return G


def green_values(operator: SparseOperator, G: np.ndarray, points, min_layers: float = 0.0) -> np.ndarray:
    """``G(x_i, y_j)`` for Green fields ``G`` (columns) read at ``points`` with source weights."""
    S = source_weights(operator.grid, points, min_layers)
    return S @ G[operator.grid.interior_indices]


def green_traces(operator: SparseOperator, G: np.ndarray) -> np.ndarray:
    """Inward normal derivatives ``d_nu' G(x, z')`` at boundary nodes, shape (n_boundary, P)."""
    return operator.normal_derivative(G)


def poisson_weight(operator: SparseOperator, G: np.ndarray | None = None, sources=None) -> np.ndarray:
    """``P(x) = (sum_z' w_z' (d_nu' G(x, z'))^2)^(1/2)`` over both faces."""
    if G is None:
        G = green_function(operator, sources)
    T = green_traces(operator, G)
    return np.sqrt(operator.boundary_weights @ T ** 2)


def poisson_weight_field(operator: SparseOperator, block: int = 256) -> np.ndarray:
    """``P`` at every interior node (``nan`` on the faces).

    Uses ``d_nu' G(x, z') = (A_II^{-1} T_z')(x)`` where ``T_z'`` is the row
    of the normal-derivative matrix at ``z'``.  This costs one solve per
    boundary node instead of one per interior point.
    """
    g = operator.grid
    I = g.interior_indices
    T = operator.normal_derivative_matrix()[:, I]
    w = operator.boundary_weights
    acc = np.zeros(I.size)
    for start in range(0, T.shape[0], block):
        rows = slice(start, min(start + block, T.shape[0]))
        K = operator.solve_interior(T[rows].T.toarray())
        acc += (K ** 2) @ w[rows]
    out = np.full(g.size, np.nan)
    out[I] = np.sqrt(acc)
    return out.reshape(g.shape)


# ============================================================ tables
@dataclass
class GreenTable:
    """Green's function, weights and scaled kernel on source and probe sets.

    Attributes
    ----------
    sources : ndarray, shape (S, n)
    probes : ndarray, shape (Q, n)
    G : ndarray, shape (S, Q)
    P_sources, P_probes : ndarray
    H : ndarray, shape (S, Q)
    traces : ndarray, shape (n_boundary, Q)
        ``d_nu' G(y_j, .)`` of the probe poles.
    """

    sources: np.ndarray
    probes: np.ndarray
    G: np.ndarray
    P_sources: np.ndarray
    P_probes: np.ndarray
    H: np.ndarray
    traces: np.ndarray = field(repr=False)
    metric: str = ""

    def symmetry_error(self) -> float:
        """Relative ``max |G(x, y) - G(y, x)|`` when sources and probes coincide."""
        if self.sources.shape != self.probes.shape or not np.allclose(self.sources, self.probes):
            raise ValueError("symmetry needs identical source and probe sets")
        return float(np.abs(self.G - self.G.T).max() / np.abs(self.G).max())

    def rows(self):
        for i, j in product(range(len(self.sources)), range(len(self.probes))):
            yield {"source": self.sources[i].tolist(), "probe": self.probes[j].tolist(),
                   "G": float(self.G[i, j]), "P_source": float(self.P_sources[i]),
                   "P_probe": float(self.P_probes[j]), "H": float(self.H[i, j])}


def scaled_kernel(operator: SparseOperator, sources, probes=None, min_layers: float = 2.0) -> GreenTable:
    """Tabulate ``G``, ``P`` and ``H = G / (P P)`` on sources x probes (probes default to sources)."""
    g = operator.grid
    X = _as_points(sources, g.n)
    Y = X if probes is None else _as_points(probes, g.n)
    GY = green_function(operator, Y, min_layers)
    TY = green_traces(operator, GY)
    PY = np.sqrt(operator.boundary_weights @ TY ** 2)
    if probes is None:
        PX = PY
    else:
        PX = poisson_weight(operator, green_function(operator, X, min_layers))
    Gxy = green_values(operator, GY, X, min_layers)
    H = Gxy / (PX[:, None] * PY[None, :])
    return GreenTable(X, Y, Gxy, PX, PY, H, TY, getattr(operator.metric, "name", ""))


# ============================================================ flat oracles
def _frequencies(d: int, K: int):
    ks = np.array(list(product(range(-K, K + 1), repeat=d)), float)
    return ks, 2 * pi * np.linalg.norm(ks, axis=1)


def flat_green_series(x, y, K: int = 40) -> float:
    """Dirichlet Green's function of ``-Delta`` on the flat slab by tangential Fourier series.

    Each mode solves ``-u'' + kappa^2 u = delta`` on ``[0, 1]`` with zero end
    values.  Converges exponentially for ``x_n != y_n``.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    ks, kap = _frequencies(len(x) - 1, K)
    lo, hi = min(x[-1], y[-1]), max(x[-1], y[-1])
    phase = np.cos(2 * pi * ks @ (x[:-1] - y[:-1]))
    with np.errstate(over="ignore", invalid="ignore"):
        gk = np.where(kap > 0, np.exp(kap * (lo - hi)) * (1 - np.exp(-2 * kap * lo)) * (1 - np.exp(-2 * kap * (1 - hi)))
                      / (2 * np.where(kap > 0, kap, 1.0) * (1 - np.exp(-2 * np.where(kap > 0, kap, 1.0)))),
                      lo * (1 - hi))
    return float(np.sum(phase * gk))


def flat_poisson_weight_series(xn: float, n: int = 3, K: int = 40) -> float:
    """``P`` on the flat slab: ``sum_k (sinh^2(kappa(1-x_n)) + sinh^2(kappa x_n)) / sinh^2 kappa``."""
    _, kap = _frequencies(n - 1, K)
    pos = kap > 0
    k = kap[pos]
    a = np.exp(-k * xn) * (1 - np.exp(-2 * k * (1 - xn))) / (1 - np.exp(-2 * k))
    b = np.exp(-k * (1 - xn)) * (1 - np.exp(-2 * k * xn)) / (1 - np.exp(-2 * k))
    total = np.sum(a ** 2 + b ** 2) + (1 - xn) ** 2 + xn ** 2
    return float(np.sqrt(total))


# ============================================================ laws
def green_transformation_check(op1: SparseOperator, op2: SparseOperator, diffeo, factor, points,
                               min_layers: float = 2.0) -> dict:
    """Residuals of the laws relating the kernels of ``g_1 = c F^* g_2``.

    The laws are ``G_1(x, y) = c(x)^-p c(y)^-p G_2(F x, F y)``,
    ``P_1(x) = c(x)^-p P_2(F x)`` and ``H_1(x, y) = H_2(F x, F y)``, with
    ``p = (n - 2) / 4``.

    Residuals are ``max |lhs - rhs| / max |rhs|`` over distinct pairs of
    ``points``.  The entrywise bound
    ``|H_1/H_2 - 1| <= (1 + r_G) / ((1 - r_P(x)) (1 - r_P(y))) - 1`` relating the
    three laws is checked as well.
    """
    g = op1.grid
    n = g.n
    p = (n - 2) / 4.0
    X = _as_points(points, n)
    FX = diffeo(X)
    cX = factor(X)
    G1 = green_function(op1, X, min_layers)
    G2 = green_function(op2, FX, min_layers)
    P1 = poisson_weight(op1, G1)
    P2 = poisson_weight(op2, G2)
    g1 = green_values(op1, G1, X, min_layers)
    g2 = green_values(op2, G2, FX, min_layers)
    off = ~np.eye(len(X), dtype=bool)
    scale = cX[:, None] ** -p * cX[None, :] ** -p
    rhs_G = scale * g2
    rhs_P = cX ** -p * P2
    H1 = g1 / np.outer(P1, P1)
    H2 = g2 / np.outer(P2, P2)
    rG = np.abs(g1 - rhs_G)[off].max() / np.abs(rhs_G[off]).max()
    rP = np.abs(P1 - rhs_P).max() / np.abs(rhs_P).max()
    rH = np.abs(H1 - H2)[off].max() / np.abs(H2[off]).max()
    eG = np.abs(g1 / rhs_G - 1)
    eP = np.abs(P1 / rhs_P - 1)
    eH = np.abs(H1 / H2 - 1)
    bound = (1 + eG) / np.outer(1 - eP, 1 - eP) - 1
    return {
        "G": float(rG), "P": float(rP), "H": float(rH),
        "H_bound_holds": bool(np.all(eH[off] <= bound[off] * (1 + 1e-9) + 1e-14)),
        "symmetry_G1": float(np.abs(g1 - g1.T).max() / np.abs(g1).max()),
        "points": X.tolist(),
    }


def _normal_drift(metric, X, face):
    """``beta`` in ``u = a s (1 + beta s) + O(s^3)`` for solutions vanishing on a face.

    ``s`` is the inward coordinate distance.  From the equation at the face,
    ``beta = -(d_i(sqrt|g| g^{in}) / sqrt|g|) / (2 g^{nn})`` (sign flipped on
    face 1), neglecting the tangential variation of ``a``.
    """
    g, dg = metric.evaluate(X, 1)
    ginv = np.linalg.inv(g)
    dginv = -np.einsum("...ia,...kab,...bj->...kij", ginv, dg, ginv)
    half_tr = 0.5 * np.einsum("...ij,...kji->...k", ginv, dg)
    drift = np.einsum("...k,...k->...", half_tr, ginv[..., :, -1]) + np.einsum("...kk->...", dginv[..., :, :, -1])
    sgn = 1.0 if face == 0 else -1.0
    return -sgn * drift / (2.0 * ginv[..., -1, -1])


def schwartz_kernel_check(operator: SparseOperator, nodes, min_separation: float = 4.0, layers: int = 3) -> dict:
    """Compare off-diagonal Dirichlet-to-Neumann entries with ``d_nu d_nu' G``.

    For each boundary node ``p`` (boundary ordering) the column of the
    nodal DN map gives ``N(q, p) = (Lambda e_p)(q) / w_p``.  Independently,
    Green's functions with poles ``1..layers`` layers inside ``p`` give
    ``K_j(q) = d_nu' G(x_j, q)``.  As a function of the pole depth ``s`` the
    trace vanishes at ``s = 0`` and behaves like ``a s (1 + beta s)`` plus
    odd powers of ``s``.  Here ``beta`` comes from the equation at the face
    and is zero for a flat metric.  A least-squares fit in
    ``s (1 + beta s), s^3, s^5, ...`` gives ``a``; then
    ``d_nu d_nu' G(p, q) = sqrt(g^{nn}) a``.

    Pairs closer than ``min_separation`` tangential cells on the same face
    are excluded; pairs on opposite faces are included.
    """
    g = operator.grid
    n = g.n
    m = g.N_t ** (n - 1)
    nodes = np.atleast_1d(np.asarray(nodes, int))
    w = operator.boundary_weights
    Y = np.concatenate([g.face_coords(0).reshape(m, n), g.face_coords(1).reshape(m, n)])
    E = np.zeros((2 * m, len(nodes)))
    E[nodes, np.arange(len(nodes))] = 1.0
    dn = operator.normal_derivative(operator.extend(E)) / w[nodes][None, :]
    ginv = np.linalg.inv(operator.metric(Y[nodes]))
    speed = np.sqrt(ginv[:, -1, -1])
    poles = []
    for b in nodes:
        inward = 1.0 if b < m else -1.0
        for j in range(1, layers + 1):
            x = Y[b].copy()
            x[-1] += inward * j * g.h_n
            poles.append(x)
    G = green_function(operator, np.array(poles), min_layers=1.0)
    T = green_traces(operator, G).reshape(2 * m, len(nodes), layers)
    s = np.arange(1, layers + 1) * g.h_n
    kern = np.empty((2 * m, len(nodes)))
    for k, b in enumerate(nodes):
        beta = float(_normal_drift(operator.metric, Y[b][None], 0 if b < m else 1)[0])
        V = np.stack([s * (1 + beta * s)] + [s ** (2 * i + 1) for i in range(1, layers)], axis=1)
        coef = np.linalg.lstsq(V, T[:, k, :].T, rcond=None)[0]
        kern[:, k] = speed[k] * coef[0]
    errs, counts = [], []
    for k, b in enumerate(nodes):
        same = (np.arange(2 * m) < m) == (b < m)
        d = Y[:, :-1] - Y[b, :-1]
        d -= np.round(d)
        sep = np.abs(d).max(axis=1) / g.h_t
        keep = ~same | (sep >= min_separation - 1e-9)
        rel = np.abs(dn[keep, k] - kern[keep, k]) / np.abs(kern[keep, k])
        errs.append(float(rel.max()))
        counts.append(int(keep.sum()))
    return {"max_relative_error": float(max(errs)), "per_node": errs, "pairs": counts,
            "min_separation": min_separation, "dn": dn, "kernel": kern}


# ============================================================ asymptotics
def _unit_directions(n: int, extra: bool = True) -> np.ndarray:
    dirs = [s * np.eye(n)[a] for a in range(n) for s in (1.0, -1.0)]
    if extra:
        for s in product((1.0, -1.0), repeat=n):
            dirs.append(np.array(s) / np.sqrt(n))
    return np.array(dirs)


def diagonal_asymptotics(operator: SparseOperator, x, radii=None, order: int = 2, directions=None,
                         max_fraction: float = 0.6) -> dict:
    """Extrapolate ``H(x, y) d(x, y)^(n-2) P(x)^2`` to ``y -> x``.

    Points ``y`` are placed at geodesic distance ``r`` from ``x`` by
    shooting unit-speed geodesics in several directions, so ``d = r``
    exactly up to integration error.  The direction average at each radius
    is fitted by a polynomial of degree ``order`` in ``r`` and evaluated at
    ``r = 0``.

    Parameters
    ----------
    radii : sequence of float, optional
        Default ``k h`` for ``k = 4..16``, capped at ``max_fraction`` of the
        distance from ``x`` to the faces.

    Raises
    ------
    ValueError
        If a radius is below ``4 h``.
    """
    g = operator.grid
    n = g.n
    h = g.h
    x = np.asarray(x, float)
    if radii is None:
        kmax = min(16, int(np.floor(max_fraction * min(x[-1], 1.0 - x[-1]) / h)))
        radii = np.arange(4, kmax + 1) * h
    radii = np.asarray(radii, float)
    if radii.size < order + 2:
        raise ValueError(f"need at least {order + 2} radii, got {radii.size}; refine the grid")
    if np.any(radii < 4 * h - 1e-12):
        raise ValueError(f"radii below 4h = {4 * h:.4g} under-resolve the singularity")
    dirs = _unit_directions(n) if directions is None else np.asarray(directions, float)
    gx = operator.metric(x[None])[0]
    V0 = dirs / np.sqrt(np.einsum("pi,ij,pj->p", dirs, gx, dirs))[:, None]
    pts = []
    for r in radii:
        pts.append(integrate(operator.metric, np.repeat(x[None], len(dirs), 0), V0, r, 40, record=False).final)
    Ypts = np.concatenate(pts)
    Gx = green_function(operator, x[None])
    Px = poisson_weight(operator, Gx)[0]
    Gy = green_function(operator, Ypts)
    Py = poisson_weight(operator, Gy)
    Gxy = green_values(operator, Gx, Ypts)[:, 0]
    H = Gxy / (Px * Py)
    vals = (H * np.repeat(radii, len(dirs)) ** (n - 2) * Px ** 2).reshape(len(radii), len(dirs))
    mean = vals.mean(axis=1)
    coef = np.polyfit(radii, mean, order)
    limit = float(np.polyval(coef, 0.0))
    target = diagonal_constant(n)
    return {"limit": limit, "target": target, "relative_error": abs(limit - target) / target,
            "radii": radii.tolist(), "mean": mean.tolist(), "spread": (vals.std(axis=1) / mean).tolist()}


# ============================================================ embedding
@dataclass
class EmbeddingTable:
    """Probe vectors ``(H(x, y_j))_j`` of sample points.

    Attributes
    ----------
    probes : ndarray, shape (Q, n)
        Probe poles (for the second metric, images ``F(y_j)``).
    samples : ndarray, shape (S, n)
    vectors : ndarray, shape (S, Q)
    P_samples, P_probes : ndarray
    box : tuple of (int, int) or None
        Node index ranges when the samples are a full box of grid nodes.
    """

    probes: np.ndarray
    samples: np.ndarray
    vectors: np.ndarray
    P_samples: np.ndarray
    P_probes: np.ndarray
    box: tuple | None = None
    metric: str = ""

    def separation(self, grid: Grid, min_distance: float = 4.0) -> dict:
        """Smallest probe-vector distance among sample pairs at least ``min_distance`` cells apart."""
        V = self.vectors
        d2 = np.sum(V ** 2, 1)[:, None] + np.sum(V ** 2, 1)[None, :] - 2 * V @ V.T
        d = np.sqrt(np.maximum(d2, 0.0))
        diff = self.samples[:, None, :] - self.samples[None, :, :]
        diff[..., :-1] -= np.round(diff[..., :-1])
        hs = np.array([grid.h_t] * (grid.n - 1) + [grid.h_n])
        far = np.abs(diff / hs).max(axis=-1) >= min_distance - 1e-9
        scale = float(np.abs(V).max())
        margin = float(d[far].min()) if far.any() else float("nan")
        offdiag = ~np.eye(len(V), dtype=bool)
        return {"margin": margin, "relative_margin": margin / scale,
                "min_offdiagonal": float(d[offdiag].min()) / scale, "pairs": int(far.sum() // 2)}


def node_box(grid: Grid, lower, upper) -> tuple:
    """Node index ranges ``[start, stop)`` covering the box ``[lower, upper]`` of the slab."""
    hs = [grid.h_t] * (grid.n - 1) + [grid.h_n]
    return tuple((int(np.ceil(lo / h - 1e-9)), int(np.floor(hi / h + 1e-9)) + 1) for lo, hi, h in zip(lower, upper, hs))


def box_points(grid: Grid, box, stride: int = 1) -> np.ndarray:
    axes = [np.arange(a, b, stride) for a, b in box]
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.n)
    return grid.coords[tuple(idx.T)]


def embedding_map(operator: SparseOperator, probes, samples=None, box=None, P_field: np.ndarray | None = None,
                  min_distance: float = 2.0) -> EmbeddingTable:
    """Probe vectors of sample points.

    Parameters
    ----------
    probes : array_like, shape (Q, n)
        Poles ``y_j``; off-grid probes use multilinear sources.
    samples : array_like, shape (S, n), optional
        Sample points; alternatively ``box`` (node index ranges) samples every node of a box.
    P_field : ndarray, optional
        Precomputed :func:`poisson_weight_field`; used at node samples.
        Otherwise ``P`` is computed per sample (one solve each).

    Raises
    ------
    ProximityError
        If a sample lies within ``min_distance`` cells of a probe.
    """
    g = operator.grid
    Y = _as_points(probes, g.n)
    if box is not None:
        X = box_points(g, box)
    else:
        X = _as_points(samples, g.n)
    hs = np.array([g.h_t] * (g.n - 1) + [g.h_n])
    diff = X[:, None, :] - Y[None, :, :]
    diff[..., :-1] -= np.round(diff[..., :-1])
    cells = np.abs(diff / hs).max(axis=-1)
    if cells.min() < min_distance - 1e-9:
        i, j = np.unravel_index(int(np.argmin(cells)), cells.shape)
        raise ProximityError(f"sample {X[i].tolist()} lies {cells[i, j]:.2f} cells from probe {Y[j].tolist()}")
    GY = green_function(operator, Y, min_layers=1.0)
    PY = poisson_weight(operator, GY)
    if P_field is not None:
        PX = GridInterpolator.for_grid(g, kind="linear")(P_field, X)
    else:
        PX = poisson_weight(operator, green_function(operator, X, min_layers=1.0))
    Gxy = green_values(operator, GY, X, min_layers=1.0)
    H = Gxy / (PX[:, None] * PY[None, :])
    if not np.all(np.isfinite(H)):
        raise ChartError("non-finite probe vectors")
    return EmbeddingTable(Y, X, H, PX, PY, box, getattr(operator.metric, "name", ""))


@dataclass
class ReconstructionResult:
    """``J = H_2^{-1} o H_1`` on the samples of the first table.

    Attributes
    ----------
    J : ndarray, shape (S, n)
    P2_at_J : ndarray
    c_hat : ndarray
        ``(P_2(J x) / P_1(x))^(4/(n-2))``.
    ambiguous : list of int
        Samples whose second-best, non-adjacent candidate is within 10% of the best distance.
    """

    J: np.ndarray
    P2_at_J: np.ndarray
    c_hat: np.ndarray
    ambiguous: list
    bounds: tuple
    match: dict | None = None
    conformal_residual: float | None = None
    meta: dict = field(default_factory=dict)

    def within_bounds(self) -> bool:
        k, K = self.bounds
        return bool(np.all((self.c_hat >= k) & (self.c_hat <= K)))


def _quadratic_minimum(offsets, values):
    """Minimiser of the least-squares quadratic through ``values`` at integer ``offsets``."""
    d = offsets.shape[1]
    cols = [np.ones(len(offsets))] + [offsets[:, a] for a in range(d)]
    pairs = [(a, b) for a in range(d) for b in range(a, d)]
    cols += [offsets[:, a] * offsets[:, b] for a, b in pairs]
    coef, *_ = np.linalg.lstsq(np.stack(cols, 1), values, rcond=None)
    grad = coef[1 : d + 1]
    Hm = np.zeros((d, d))
    for (a, b), c in zip(pairs, coef[d + 1 :]):
        Hm[a, b] += c if a != b else 2 * c
        if a != b:
            Hm[b, a] += c
    try:
        if np.all(np.linalg.eigvalsh(Hm) > 0):
            return np.clip(-np.linalg.solve(Hm, grad), -1.0, 1.0)
    except np.linalg.LinAlgError:
        pass
    return np.zeros(d)


def reconstruct_J(table1: EmbeddingTable, table2: EmbeddingTable, grid: Grid, metric1=None, metric2=None,
                  reference=None, sample_shape=None, ambiguity: float = 0.1, newton_steps: int = 8,
                  newton_tol: float = 1e-10) -> ReconstructionResult:
    """Invert the second embedding on the first: ``J(x) = argmin_z |H_2(z) - H_1(x)|``.

    ``table2`` must sample a full node box.  The best node is refined by
    a quadratic fit of the squared distance over its ``3^n`` neighbourhood.
    Gauss-Newton steps on the cubic interpolant of the second table's
    vectors then polish the minimiser.  These steps matter for the
    conformal factor: ``P`` varies like an inverse power of the depth, so
    ``c_hat`` needs ``J`` well below one cell.

    Parameters
    ----------
    reference : callable, optional
        Known map (``F``) on the samples; reports the fraction within one cell.
    sample_shape : tuple, optional
        Lattice shape of ``table1.samples`` (C order); enables the
        conformal-factor residual ``||g_1 - c_hat J^* g_2|| / ||g_1||``, which
        needs ``DJ`` by differences.
    newton_steps : int
        Gauss-Newton iterations after the quadratic fit (0 disables them).
    """
    if table2.box is None:
        raise ChartError("the second table must sample a box of grid nodes")
    n = grid.n
    shape2 = tuple(b - a for a, b in table2.box)
    start = np.array([a for a, _ in table2.box])
    hs = np.array([grid.h_t] * (n - 1) + [grid.h_n])
    V1, V2 = table1.vectors, table2.vectors
    d2 = np.sum(V1 ** 2, 1)[:, None] + np.sum(V2 ** 2, 1)[None, :] - 2 * V1 @ V2.T
    d2 = np.maximum(d2, 0.0)
    best = np.argmin(d2, axis=1)
    multi = np.stack(np.unravel_index(best, shape2), axis=-1)
    all_multi = np.stack(np.unravel_index(np.arange(V2.shape[0]), shape2), axis=-1)
    offs = np.array(list(product((-1, 0, 1), repeat=n)))
    Z = np.empty((len(V1), n))
    ambiguous = []
    for i in range(len(V1)):
        far = np.abs(all_multi - multi[i]).max(axis=1) >= 2
        if far.any() and np.sqrt(d2[i, far].min()) <= (1 + ambiguity) * np.sqrt(d2[i, best[i]]):
            ambiguous.append(i)
        centre = np.clip(multi[i], 1, np.array(shape2) - 2)
        nb = centre + offs
        flat = np.ravel_multi_index(tuple(nb.T), shape2)
        delta = _quadratic_minimum(offs.astype(float), d2[i, flat])
        Z[i] = (centre + delta) * hs
    interp = GridInterpolator(shape2, hs, kind="cubic", periodic=(False,) * n)
    field2 = V2.reshape(shape2 + (-1,))
    inside_lo, inside_hi = np.zeros(n), (np.array(shape2) - 1) * hs
    step = np.inf
    for it in range(newton_steps):
        v, D = interp.gradient(field2, Z)
        dz = np.stack([np.linalg.lstsq(D[i], V1[i] - v[i], rcond=None)[0] for i in range(len(Z))])
        Z = np.clip(Z + dz, inside_lo, inside_hi)
        step = float(np.abs(dz / hs).max())
        if step < newton_tol:
            break
    J = Z + start * hs
    P2 = interp(table2.P_samples.reshape(shape2), Z)
    p = 4.0 / (n - 2)
    c_hat = (P2 / table1.P_samples) ** p
    k = (table2.P_samples.min() / table1.P_samples.max()) ** p
    K = (table2.P_samples.max() / table1.P_samples.min()) ** p
    res = ReconstructionResult(J, P2, c_hat, ambiguous, (float(k), float(K)))
    if reference is not None:
        Fx = np.asarray(reference(table1.samples))
        d = J - Fx
        d[:, :-1] -= np.round(d[:, :-1])
        err = np.abs(d / hs).max(axis=1)
        res.match = {"fraction_within_cell": float(np.mean(err <= 1.0)), "max_cells": float(err.max()),
                     "median_cells": float(np.median(err))}
    if sample_shape is not None and metric1 is not None and metric2 is not None:
        X = table1.samples.reshape(tuple(sample_shape) + (n,))
        Jg = J.reshape(X.shape)
        spacing = [float(np.ptp(X[..., a]) / (X.shape[a] - 1)) if X.shape[a] > 1 else 1.0 for a in range(n)]
        DJ = np.stack([np.gradient(Jg, spacing[a], axis=a) for a in range(n)], axis=-1)
        g1 = metric1(X)
        g2 = metric2(Jg)
        pull = np.einsum("...ai,...ab,...bj->...ij", DJ, g2, DJ)
        ch = c_hat.reshape(X.shape[:-1])
        inner = tuple(slice(1, -1) if s > 2 else slice(None) for s in X.shape[:-1])
        diff = (g1 - ch[..., None, None] * pull)[inner]
        res.conformal_residual = float(np.linalg.norm(diff) / np.linalg.norm(g1[inner]))
    res.meta = {"samples": int(len(V1)), "candidates": int(V2.shape[0]), "ambiguous": len(ambiguous),
                "last_newton_step_cells": step if newton_steps else None}
    return res
