"""Z-coordinates: boundary charts built from conformal-Laplacian solutions.

Given a boundary patch ``Gamma`` on one face, ``n + 1`` solutions of
``L_g w = 0`` are computed with Dirichlet data

* ``w^alpha = f^alpha`` where ``f^alpha`` equals the boundary-harmonic
  coordinate ``y^alpha`` on ``Gamma`` (``alpha < n``),
* ``w^n = theta`` with ``theta = 0`` on ``Gamma`` and ``d_nu w^n > 0`` there,
* ``w^{n+1} = 1``.

The ratios ``W^l = w^l / w^{n+1}`` form a chart near ``Gamma``.  Composed
with the inverse of the boundary normal chart they give
``Z = W o psi^{-1}``.  For two metrics with the same Dirichlet-to-Neumann
map and matching boundary jets the two ``Z`` agree to high order in the
normal distance.  The transition map between the metrics can then be
written both as ``W_2^{-1} o W_1`` and as
``psi_2^{-1} o Z_2^{-1} o Z_1 o psi_1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy import ndimage
from scipy.sparse.linalg import spsolve
from scipy.spatial import cKDTree

from .errors import ChartError, InjectivityError
from .gauge.bnc import BNChart
from .gauge.geodesics import shoot_normal
from .geometry.fd import gradient_field
from .geometry.grid import Grid
from .geometry.interp import GridInterpolator
from .geometry.patch import Patch
from .operators import BoundaryData, SparseOperator, assemble

__all__ = [
    "HarmonicCoordinates",
    "ZChart",
    "DecayReport",
    "GluingResult",
    "boundary_harmonic_coords",
    "build_z_coordinates",
    "z_samples",
    "z_jet_agreement",
    "invert_field",
    "transition_and_gluing",
    "collar_samples",
    "consistency_tolerance",
    "overlap_agreement",
    "injectivity_check",
]


# ============================================================ harmonic y'
@dataclass
class HarmonicCoordinates:
    """Boundary-harmonic coordinates on a patch.

    Attributes
    ----------
    patch : Patch
    index_ranges : list of (int, int)
        Face-node index range ``[start, stop)`` of the patch box per tangential axis.
    values : ndarray, shape (n-1,) + box shape
        ``y^alpha`` at the box nodes.
    residual : float
        Relative residual of the discrete harmonicity equations.
    jacobian : ndarray, box shape
        ``det(d y / d x')`` at the box nodes (one-sided at the box edges).
    subpatch : ndarray of bool, box shape
        Nodes where ``|det| >= min_det``.
    h : float
        Tangential mesh width.
    """

    patch: Patch
    index_ranges: list
    values: np.ndarray
    residual: float
    jacobian: np.ndarray
    subpatch: np.ndarray
    min_det: float = 0.1
    h: float = 0.0

    @property
    def box_shape(self) -> tuple:
        return self.values.shape[1:]

    def offsets(self) -> np.ndarray:
        """``y^alpha - x^alpha`` on the box (zero on its edges)."""
        return self.values - self._affine()

    def _affine(self) -> np.ndarray:
        axes = [np.arange(a, b) for a, b in self.index_ranges]
        h = self.h
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m * h for m in mesh])

    def face_data(self, grid: Grid, inner: float = 0.05, outer: float = 0.2) -> np.ndarray:
        """Dirichlet data ``f^alpha`` on the whole face, shape ``(n-1,) + tangential_shape``.

        ``f^alpha = B (x^alpha + delta^alpha)`` where ``delta`` extends
        ``y - x`` by zero outside the box and ``B`` is the patch window
        (one within ``inner`` of the patch and zero beyond ``outer``).
        """
        Y = grid.face_coords(self.patch.face)[..., :-1]
        B = self.patch.window(Y, inner, outer)
        delta = np.zeros((grid.n - 1,) + grid.tangential_shape)
        sl = tuple(slice(a, b) for a, b in self.index_ranges)
        delta[(slice(None),) + sl] = self.offsets()
        return B[None] * (np.moveaxis(Y, -1, 0) + delta)


def _patch_box(grid: Grid, patch: Patch):
    ranges = []
    for lo, hi in zip(patch.lower, patch.upper):
        a = int(np.ceil(lo * grid.N_t - 1e-9))
        b = int(np.floor(hi * grid.N_t + 1e-9)) + 1
        if a < 1 or b > grid.N_t or b - a < 3:
            raise ChartError(f"patch [{lo}, {hi}] is not strictly inside the face at N_t={grid.N_t}")
        ranges.append((a, b))
    return ranges


def _axis_ops(L: int, h: float):
    D = sps.diags([-np.ones(L - 1), np.ones(L - 1)], [0, 1], shape=(L - 1, L)) / h
    A = sps.diags([0.5 * np.ones(L - 1), 0.5 * np.ones(L - 1)], [0, 1], shape=(L - 1, L))
    return D.tocsr(), A.tocsr(), sps.identity(L, format="csr")


def _kron_all(ops):
    out = ops[0]
    for op in ops[1:]:
        out = sps.kron(out, op, format="csr")
    return out


def laplace_beltrami_box(h_metric, ranges, h: float):
    """Energy-form Laplace-Beltrami matrix on a box of face nodes.

    Diagonal coefficients are sampled at edge midpoints (compact
    ``2d+1``-point part); mixed coefficients at cell centres with
    cell-averaged gradients.  Affine functions are discretely harmonic
    whenever the coefficients are constant.

    Parameters
    ----------
    h_metric : callable
        ``h_metric(Y)`` returns the boundary metric at tangential points ``Y`` (shape (..., d)).
    ranges : list of (int, int)
    h : float
        Tangential mesh width.
    """
    d = len(ranges)
    L = [b - a for a, b in ranges]
    nodes = [np.arange(a, b) * h for a, b in ranges]
    ops = [_axis_ops(l, h) for l in L]
    K = sps.csr_matrix((int(np.prod(L)),) * 2)

    def coeff(points):
        gm = h_metric(points)
        return np.sqrt(np.linalg.det(gm))[..., None, None] * np.linalg.inv(gm)

    for a in range(d):
        axes = [nodes[k] if k != a else 0.5 * (nodes[k][1:] + nodes[k][:-1]) for k in range(d)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        c = coeff(pts)[..., a, a].ravel()
        Da = _kron_all([ops[k][0] if k == a else ops[k][2] for k in range(d)])
        K = K + Da.T @ sps.diags(c) @ Da
    if d > 1:
        centres = [0.5 * (x[1:] + x[:-1]) for x in nodes]
        pts = np.stack(np.meshgrid(*centres, indexing="ij"), axis=-1)
        c = coeff(pts)
        G = [_kron_all([ops[k][0] if k == a else ops[k][1] for k in range(d)]) for a in range(d)]
        for a in range(d):
            for b in range(d):
                if a != b:
                    K = K + G[a].T @ sps.diags(c[..., a, b].ravel()) @ G[b]
    return K.tocsr() * h ** d


def boundary_harmonic_coords(metric, grid: Grid, patch: Patch, min_det: float = 0.1) -> HarmonicCoordinates:
    """Solve ``Delta_h y^alpha = 0`` on the patch with affine boundary values ``x^alpha``.

    ``h`` is the metric induced on the face of the patch.

    Raises
    ------
    ChartError
        If the patch is not strictly inside the face or the Jacobian of
        ``y'`` degenerates on the whole patch.
    """
    ranges = _patch_box(grid, patch)
    d = grid.n - 1
    h = grid.h_t
    xn = float(patch.face)

    def h_metric(Y):
        X = np.concatenate([Y, np.full(Y.shape[:-1] + (1,), xn)], axis=-1)
        return metric(X)[..., :-1, :-1]

    K = laplace_beltrami_box(h_metric, ranges, h)
    L = tuple(b - a for a, b in ranges)
    mesh = np.stack(np.meshgrid(*[np.arange(a, b) * h for a, b in ranges], indexing="ij"))
    edge = np.zeros(L, dtype=bool)
    for a in range(d):
        sl = [slice(None)] * d
        sl[a] = 0
        edge[tuple(sl)] = True
        sl[a] = -1
        edge[tuple(sl)] = True
    e, i = np.flatnonzero(edge.ravel()), np.flatnonzero(~edge.ravel())
    KII, KIB = K[i][:, i].tocsc(), K[i][:, e]
    Y = mesh.reshape(d, -1).T.copy()
    rhs = -(KIB @ Y[e])
    sol = spsolve(KII, rhs)
    Y[i] = sol.reshape(len(i), d)
    res = KII @ Y[i] - rhs
    scale = max(np.linalg.norm(rhs), np.linalg.norm(KII @ Y[i]), 1e-300)
    residual = float(np.linalg.norm(res) / scale)
    vals = Y.T.reshape((d,) + L)
    jac = np.stack([np.stack(np.gradient(vals[al], h, axis=tuple(range(d)))) if d > 1
                    else np.gradient(vals[al], h)[None] for al in range(d)])
    det = np.linalg.det(np.moveaxis(jac, (0, 1), (-2, -1)))
    sub = np.abs(det) >= min_det
    if not sub.any():
        raise ChartError(f"boundary harmonic coordinates degenerate on the whole patch (max |det| {np.abs(det).max():.3e})")
    return HarmonicCoordinates(patch, ranges, vals, residual, det, sub, min_det, h)


# ================================================================ Z charts
@dataclass
class ZChart:
    """Ratios of ``n + 1`` conformal-Laplacian solutions near a patch.

    Attributes
    ----------
    operator : SparseOperator
    patch : Patch
    harmonic : HarmonicCoordinates
    data : list of BoundaryData
        Dirichlet data of ``w^1, ..., w^{n+1}``.
    w : ndarray, shape (n+1,) + grid shape
    W : ndarray, shape (n,) + grid shape
        ``W^l = w^l / w^{n+1}`` (``nan`` where ``w^{n+1} <= 0``).
    det : ndarray, grid shape
        ``det DW`` from fourth-order differences.
    validity : ndarray of bool, grid shape
        Connected part, adjacent to the patch, of the collar nodes with
        ``w^{n+1} > 0`` and ``|det DW| >= det_min``.
    normal_derivative : ndarray
        ``d_nu w^n`` at the patch nodes.
    """

    operator: SparseOperator
    patch: Patch
    harmonic: HarmonicCoordinates
    data: list
    w: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)
    det: np.ndarray = field(repr=False)
    validity: np.ndarray = field(repr=False)
    normal_derivative: np.ndarray = field(repr=False)
    det_min: float = 0.1
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.operator.grid

    @property
    def metric(self):
        return self.operator.metric

    @property
    def n(self) -> int:
        return self.grid.n

    def interpolator(self) -> GridInterpolator:
        return GridInterpolator.for_grid(self.grid)

    def field_at(self, X: np.ndarray) -> np.ndarray:
        """Cubic interpolant of ``W`` at slab points ``X`` (shape (..., n)); result (..., n)."""
        return self.interpolator()(np.moveaxis(self.W, 0, -1), X)

    def trace_errors(self) -> dict:
        """Exactness of the patch trace contracts ``W^alpha = y^alpha``, ``W^n = 0``."""
        g = self.grid
        sl = tuple(slice(a, b) for a, b in self.harmonic.index_ranges)
        k = 0 if self.patch.face == 0 else -1
        inside = self.patch.face_mask(g)[sl]
        Wf = self.W[(slice(None),) + sl + (k,)]
        tang = np.abs(Wf[: g.n - 1] - self.harmonic.values)[:, inside].max()
        normal = np.abs(Wf[g.n - 1][inside]).max()
        unit = np.abs(self.w[g.n][(Ellipsis, k)][self.patch.face_mask(g)] - 1.0).max()
        return {"tangential": float(tang), "normal": float(normal), "w_last": float(unit)}

    def jacobian_at_patch(self) -> np.ndarray:
        """``DW`` at the patch nodes, shape (P, n, n)."""
        g = self.grid
        D = gradient_field(np.moveaxis(self.W, 0, -1), g.n, g.h_t, g.h_n)
        k = 0 if self.patch.face == 0 else -1
        Dk = D[(Ellipsis, k, slice(None), slice(None))]
        return np.swapaxes(Dk[self.patch.face_mask(g)], -1, -2)

    def describe(self) -> dict:
        return {
            "patch": self.patch.describe(),
            "grid": self.grid.describe(),
            "validity_fraction": float(self.validity.mean()),
            "min_normal_derivative": float(self.normal_derivative.min()),
            "harmonic_residual": self.harmonic.residual,
            **{k: v for k, v in self.meta.items() if np.isscalar(v)},
        }


def build_z_coordinates(metric_or_operator, patch: Patch, harmonic: HarmonicCoordinates | None = None,
                        theta: BoundaryData | None = None, grid: Grid | None = None,
                        theta_min: float = 0.1, det_min: float = 0.1, window=(0.05, 0.2),
                        collar_depth: float = 0.25, runge_kw: dict | None = None) -> ZChart:
    """Build the Z-chart of a metric near ``patch``.

    Parameters
    ----------
    metric_or_operator : MetricField or SparseOperator
        An assembled operator is reused (its factorisation serves all solves).
    patch : Patch
    harmonic : HarmonicCoordinates, optional
        Computed from the induced face metric when omitted.
    theta : BoundaryData, optional
        Data of ``w^n``; by default from :func:`calderon_lab.runge.make_theta`.
    grid : Grid
        Required when a metric is passed.
    theta_min : float
        Required lower bound of ``d_nu w^n`` on the patch.
    det_min : float
        Validity threshold for ``|det DW|``.
    window : (float, float)
        Inner and outer radius of the window applied to the ``y'`` data.
    collar_depth : float
        The chart is restricted to the collar over the patch of this depth.

    Raises
    ------
    ChartError
        If ``theta`` does not vanish on the patch or ``d_nu w^n < theta_min``
        at some patch node (the nodes are named in the message).
    """
    if isinstance(metric_or_operator, SparseOperator):
        op = metric_or_operator
    else:
        if grid is None:
            raise ChartError("a grid is required when building from a metric")
        op = assemble(metric_or_operator, grid)
    g = op.grid
    n = g.n
    if harmonic is None:
        harmonic = boundary_harmonic_coords(op.metric, g, patch)
    meta = {}
    if theta is None:
        from .runge import make_theta

        theta, info = make_theta(op, patch, theta_min=theta_min, **(runge_kw or {}))
        meta["theta"] = info
    on_patch = patch.boundary_mask(g)
    tv = theta.vector()
    if np.abs(tv[on_patch]).max() > 1e-12:
        raise ChartError(f"theta does not vanish on the patch (max {np.abs(tv[on_patch]).max():.2e})")

    fa = harmonic.face_data(g, *window)
    zero = np.zeros(g.tangential_shape)
    data = []
    for a in range(n - 1):
        data.append(BoundaryData(fa[a], zero) if patch.face == 0 else BoundaryData(zero, fa[a]))
    data.append(theta)
    one = np.ones(g.tangential_shape)
    data.append(BoundaryData(one, one))
    F = np.stack([d.vector() for d in data], axis=1)
    U = op.extend(F)
    dnu = op.normal_derivative(U[:, n - 1])[on_patch]
    bad = np.flatnonzero(dnu < theta_min)
    if bad.size:
        nodes = [tuple(int(i) for i in np.unravel_index(int(b), g.tangential_shape))
                 for b in np.flatnonzero(on_patch)[bad][:8]]
        raise ChartError(f"d_nu w^n < {theta_min} at {bad.size} patch node(s), first {nodes}")
    w = np.moveaxis(U.reshape(g.shape + (n + 1,)), -1, 0)
    last = w[n]
    positive = last > 0
    if not positive.all():
        warnings.warn(f"w^(n+1) <= 0 at {int((~positive).sum())} node(s); the validity region shrinks",
                      RuntimeWarning, stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        W = np.where(positive[None], w[:n] / np.where(positive, last, 1.0)[None], np.nan)
    D = gradient_field(np.moveaxis(np.nan_to_num(W), 0, -1), n, g.h_t, g.h_n)
    det = np.linalg.det(D)
    dist = g.coords[..., -1] if patch.face == 0 else 1.0 - g.coords[..., -1]
    collar = patch.contains(g.coords[..., :-1]) & (dist <= collar_depth + 1e-12)
    validity = _patch_component(g, patch, positive & (np.abs(det) >= det_min) & collar)
    meta["solve_residual"] = float(np.linalg.norm(op.A_II @ U[g.interior_indices] + op.A_IB @ F)
                                   / max(np.linalg.norm(op.A_IB @ F), 1e-300))
    return ZChart(op, patch, harmonic, data, w, W, det, validity, dnu, det_min, meta)


def _patch_component(grid: Grid, patch: Patch, mask: np.ndarray) -> np.ndarray:
    """Connected components of ``mask`` that meet the patch (tangentially periodic)."""
    labels, count = ndimage.label(mask)
    k = 0 if patch.face == 0 else -1
    for a in range(grid.n - 1):
        first = [slice(None)] * grid.n
        last = [slice(None)] * grid.n
        first[a], last[a] = 0, -1
        for u, v in zip(labels[tuple(first)].ravel(), labels[tuple(last)].ravel()):
            if u and v and u != v:
                labels[labels == v] = u
    on_patch = labels[(Ellipsis, k)][patch.face_mask(grid)]
    keep = np.unique(on_patch[on_patch > 0])
    return np.isin(labels, keep)


# ============================================================ Z on BNC
def z_samples(chart: ZChart, Y: np.ndarray, t: np.ndarray, steps: int = 40) -> np.ndarray:
    """``Z(y', t) = W(psi^{-1}(y', t))`` at tangential points ``Y`` (P, n-1) and depths ``t`` (P,)."""
    Y = np.atleast_2d(np.asarray(Y, float))
    base = np.concatenate([Y, np.full((len(Y), 1), float(chart.patch.face))], axis=1)
    X = shoot_normal(chart.metric, base, chart.patch.face, np.asarray(t, float), steps,
                     jacobi=False, record=False).final
    return chart.field_at(X)


@dataclass
class DecayReport:
    """Power-law fit ``max_Gamma |Z_A - Z_B|(t) ~ C t^p``."""

    t: np.ndarray
    difference: np.ndarray
    p: float | None
    C: float | None
    r2: float | None
    inconclusive: bool
    rounding_level: bool = False

    def rows(self):
        return [{"t": float(a), "max_difference": float(b)} for a, b in zip(self.t, self.difference)]

    def as_dict(self) -> dict:
        return {"p": self.p, "C": self.C, "r2": self.r2, "inconclusive": self.inconclusive,
                "rounding_level": self.rounding_level, "samples": self.rows()}


def _region_points(chart: ZChart, shrink: float):
    g = chart.grid
    p = chart.patch
    inner = Patch(p.face, tuple(a + shrink for a in p.lower), tuple(b - shrink for b in p.upper))
    Y = g.face_coords(p.face)[..., :-1]
    return Y[inner.contains(Y)]


def z_jet_agreement(chartA: ZChart, chartB: ZChart, t_max: float = 0.125, levels: int = 4,
                    shrink: float = 0.125, steps: int = 40, r2_min: float = 0.9,
                    rounding: float = 1e-11) -> DecayReport:
    """Fit the decay order of ``|Z_A - Z_B|`` along normal geodesics.

    The maximum over tangential nodes of the (shrunken) patch is taken at
    the dyadic depths ``t_max / 2^j``, ``j = 0..levels-1``, and a line is
    fitted to ``log max|Z_A - Z_B|`` against ``log t``.

    Returns
    -------
    DecayReport
        ``inconclusive`` when ``R^2 < r2_min``; ``p`` is ``None`` when the
        differences are at rounding level.
    """
    Y = _region_points(chartA, shrink)
    t = t_max / 2.0 ** np.arange(levels)[::-1]
    diff = []
    for tk in t:
        tt = np.full(len(Y), tk)
        za = z_samples(chartA, Y, tt, steps)
        zb = z_samples(chartB, Y, tt, steps)
        diff.append(np.abs(za - zb).max())
    diff = np.array(diff)
    if diff.max() <= rounding:
        return DecayReport(t, diff, None, None, None, False, True)
    lt, ld = np.log(t), np.log(np.maximum(diff, 1e-300))
    A = np.stack([lt, np.ones_like(lt)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ld, rcond=None)
    pred = A @ coef
    ss = np.sum((ld - ld.mean()) ** 2)
    r2 = 1.0 - np.sum((ld - pred) ** 2) / ss if ss > 0 else 1.0
    return DecayReport(t, diff, float(coef[0]), float(np.exp(coef[1])), float(r2), bool(r2 < r2_min))


# ================================================================ gluing
def invert_field(values_fn, target: np.ndarray, seed: np.ndarray, tol: float = 1e-10, maxiter: int = 40,
                 periodic_dims: int = 0):
    """Damped Newton solve of ``values_fn(x) = target`` for many points.

    Parameters
    ----------
    values_fn : callable
        ``values_fn(x)`` returns ``(value (P, n), jacobian (P, n, n))``.
    target, seed : ndarray, shape (P, n)
    tol : float
        Step tolerance.
    periodic_dims : int
        Leading coordinates to wrap into ``[0, 1)`` after each step.

    Returns
    -------
    x : ndarray, shape (P, n)
    converged : ndarray of bool, shape (P,)
    """
    x = np.array(seed, float)
    done = np.zeros(len(x), dtype=bool)
    val, jac = values_fn(x)
    res = np.linalg.norm(val - target, axis=-1)
    for _ in range(maxiter):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        step = np.einsum("pij,pj->pi", np.linalg.pinv(jac[act]), val[act] - target[act])
        lam = np.ones(act.size)
        trial = x[act] - step
        for _ in range(8):
            tv, tj = values_fn(trial)
            tr = np.linalg.norm(tv - target[act], axis=-1)
            worse = ~(tr <= res[act]) & (lam > 1e-3)
            if not worse.any():
                break
            lam[worse] *= 0.5
            trial[worse] = x[act][worse] - lam[worse, None] * step[worse]
        x[act] = trial
        val[act], jac[act], res[act] = tv, tj, tr
        small = np.abs(lam[:, None] * step).max(axis=1) < tol
        done[act[small]] = True
    if periodic_dims:
        x[:, :periodic_dims] %= 1.0
    return x, done


def _nearest_seed(chart: ZChart, target: np.ndarray, region: np.ndarray | None = None) -> np.ndarray:
    g = chart.grid
    mask = chart.validity if region is None else chart.validity & region
    pts = g.coords[mask]
    vals = np.moveaxis(chart.W, 0, -1)[mask]
    tree = cKDTree(vals)
    _, k = tree.query(target)
    return pts[k]


def _w_evaluator(chart: ZChart):
    interp = chart.interpolator()
    Wf = np.moveaxis(np.nan_to_num(chart.W), 0, -1)

    def fn(x):
        x = np.array(x, float)
        x[:, -1] = np.clip(x[:, -1], 0.0, 1.0)
        v, d = interp.gradient(Wf, x)
        return v, d

    return fn


def _z_lattice(chart: ZChart, bnc: BNChart):
    X = bnc.points()
    Z = chart.field_at(X.reshape(-1, chart.n)).reshape(X.shape[:-1] + (chart.n,))
    spacing = tuple(1.0 / m for m in bnc.tangential_shape) + (bnc.dt,)
    interp = GridInterpolator(Z.shape[:-1], spacing)
    return Z, interp


@dataclass
class GluingResult:
    """Transition map sampled at collar points by the two formulas.

    Attributes
    ----------
    points : ndarray, shape (P, n)
        Sample points in the first chart's collar.
    F_direct : ndarray, shape (P, n)
        ``W_2^{-1}(W_1(x))``.
    F_bnc : ndarray, shape (P, n) or None
        ``psi_2^{-1}(Z_2^{-1}(Z_1(psi_1(x))))``.
    jacobian : ndarray, shape (P, n, n)
        ``DF`` of the direct formula, ``(DW_2)^{-1} DW_1``.
    converged : ndarray of bool
    """

    points: np.ndarray
    F_direct: np.ndarray
    F_bnc: np.ndarray | None
    jacobian: np.ndarray
    converged: np.ndarray
    meta: dict = field(default_factory=dict)

    def consistency(self) -> float:
        """Maximum difference of the two formulas (tangentially wrapped)."""
        if self.F_bnc is None:
            return float("nan")
        d = self.F_direct - self.F_bnc
        d[:, :-1] -= np.round(d[:, :-1])
        return float(np.abs(d[self.converged]).max())

    def boundary_identity_error(self) -> float:
        """``max |F - x|`` over samples lying on the face."""
        on = np.isclose(self.points[:, -1], 0.0) | np.isclose(self.points[:, -1], 1.0)
        if not on.any():
            return float("nan")
        d = self.F_direct[on] - self.points[on]
        d[:, :-1] -= np.round(d[:, :-1])
        return float(np.abs(d).max())

    def match(self, reference: np.ndarray, cell: float) -> dict:
        """Fraction of samples with ``|F - reference|_inf <= cell``."""
        d = self.F_direct - reference
        d[:, :-1] -= np.round(d[:, :-1])
        err = np.abs(d).max(axis=1)
        return {"fraction_within_cell": float(np.mean(err <= cell)), "max_error": float(err.max()),
                "median_error": float(np.median(err))}


def collar_samples(chart: ZChart, depth: float = 0.2, shrink: float = 0.05, include_face: bool = True,
                   stride: int = 1) -> np.ndarray:
    """Grid nodes over the shrunken patch within ``depth`` of its face and inside the validity region.

    ``stride > 1`` keeps every ``stride``-th node per axis (used for the
    cell-resolution injectivity test, where neighbouring samples must be
    further apart than one cell).
    """
    g = chart.grid
    p = chart.patch
    inner = Patch(p.face, tuple(a + shrink for a in p.lower), tuple(b - shrink for b in p.upper))
    X = g.coords
    dist = X[..., -1] if p.face == 0 else 1.0 - X[..., -1]
    lo = -1e-12 if include_face else 0.5 * g.h_n
    mask = inner.contains(X[..., :-1]) & (dist >= lo) & (dist <= depth + 1e-12) & chart.validity
    if stride > 1:
        sub = np.zeros_like(mask)
        sub[tuple(slice(None, None, stride) for _ in range(g.n))] = True
        mask &= sub
    return X[mask]


def transition_and_gluing(chart1: ZChart, chart2: ZChart, bnc1: BNChart | None = None,
                          bnc2: BNChart | None = None, points: np.ndarray | None = None,
                          depth: float = 0.2, tol: float = 1e-10) -> GluingResult:
    """Sample the transition map ``F`` with ``W_2 o F = W_1``.

    The direct formula inverts ``W_2`` by damped Newton iteration on its
    cubic interpolant, seeded by the grid node whose ``W_2`` value is
    nearest.  When both boundary normal charts are given the composite
    ``psi_2^{-1} o Z_2^{-1} o Z_1 o psi_1`` is evaluated as well: ``psi_1``
    by shooting, ``Z_1`` and ``Z_2`` as cubic interpolants on the BNC
    sample lattices and ``psi_2^{-1}`` by shooting.

    Raises
    ------
    ChartError
        If the patches differ or Newton fails for more than 5% of the points.
    """
    if chart1.patch != chart2.patch:
        raise ChartError("both charts must use the same patch")
    n = chart1.n
    X = collar_samples(chart1, depth) if points is None else np.atleast_2d(np.asarray(points, float))
    interp1 = chart1.interpolator()
    W1f = np.moveaxis(np.nan_to_num(chart1.W), 0, -1)
    target, DW1 = interp1.gradient(W1f, X)
    fn = _w_evaluator(chart2)
    seed = _nearest_seed(chart2, target)
    F, ok = invert_field(fn, target, seed, tol=tol)
    F[:, :-1] %= 1.0
    _, DW2 = fn(F)
    jac = np.linalg.solve(DW2, DW1)
    if np.mean(ok) < 0.95:
        raise ChartError(f"Newton inversion of W_2 failed at {int((~ok).sum())} of {len(ok)} points")
    F_bnc = None
    meta = {"newton_converged": float(np.mean(ok))}
    if bnc1 is not None and bnc2 is not None:
        b1 = bnc1.coordinates_of(X)
        Z1, zi1 = _z_lattice(chart1, bnc1)
        Z2, zi2 = _z_lattice(chart2, bnc2)
        z = zi1(Z1, b1)

        def zfn(b):
            b = np.array(b, float)
            b[:, -1] = np.clip(b[:, -1], 0.0, bnc2.depth)
            return zi2.gradient(Z2, b)

        b2, ok2 = invert_field(zfn, z, b1.copy(), tol=tol)
        F_bnc = bnc2.flow(b2[:, :-1], b2[:, -1])
        F_bnc[:, :-1] %= 1.0
        ok = ok & ok2
        meta["bnc_converged"] = float(np.mean(ok2))
    return GluingResult(X, F, F_bnc, jac, ok, meta)


def consistency_tolerance(grid: Grid) -> float:
    """Agreement expected between the two transition formulas: ``h^2``.

    Both formulas use the same discrete fields, so their difference is set
    by the interpolation steps and the chart inversions and stays well
    below the ``O(h^2)`` discretization error of the fields themselves.
    """
    return float(grid.h ** 2)


def overlap_agreement(first: GluingResult, second: GluingResult) -> dict:
    """Compare transition maps computed from two patches at their common sample points."""
    a = {tuple(np.round(p, 9)): i for i, p in enumerate(first.points)}
    pairs = [(a[k], j) for j, k in enumerate(tuple(np.round(p, 9)) for p in second.points) if k in a]
    if not pairs:
        raise ChartError("the two charts share no sample points")
    i, j = np.array(pairs).T
    d = first.F_direct[i] - second.F_direct[j]
    d[:, :-1] -= np.round(d[:, :-1])
    return {"shared": int(len(i)), "max_difference": float(np.abs(d).max())}


def injectivity_check(F: np.ndarray, grid: Grid, raise_on_collision: bool = False) -> dict:
    """Count sampled points whose images share a grid cell.

    Images are binned by ``floor(F / h)`` (tangentially wrapped).
    """
    h = np.array([grid.h_t] * (grid.n - 1) + [grid.h_n])
    cells = np.floor(F / h + 1e-9).astype(np.int64)
    cells[:, :-1] %= grid.N_t
    _, counts = np.unique(cells, axis=0, return_counts=True)
    collisions = int(np.sum(counts[counts > 1] - 1))
    if collisions and raise_on_collision:
        raise InjectivityError(f"{collisions} sampled points share a grid cell with another sample")
    return {"samples": int(len(F)), "collisions": collisions, "cells": int(len(counts))}
