"""Boundary normal coordinates, mean curvature and normal jets of the metric.

A boundary normal chart is sampled as the flow ``(x', t) -> gamma_{x'}(t)``
of unit-speed inward normal geodesics.  In these coordinates the metric
takes the block form ``G_ab(x', t) dx^a dx^b + dt^2``, with
``G_ab = g(J_a, J_b)`` computed from the Jacobi fields of the family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GaugeError, GeodesicError
from ..geometry.fd import one_sided_jets
from ..geometry.grid import Grid
from .geodesics import (
    GeodesicBundle,
    bnc_metric,
    check_flow,
    flow_determinant,
    integrate,
    inward_normal_with_derivative,
    shoot_normal,
)


def face_lattice(n: int, M: int, face: int = 0) -> np.ndarray:
    """Face points ``(i_1/M, ..., i_{n-1}/M, face)`` of shape ``(M,)*(n-1) + (n,)``."""
    ax = np.arange(M) / M
    mesh = np.meshgrid(*([ax] * (n - 1)), indexing="ij")
    Xn = np.full(mesh[0].shape, float(face))
    return np.stack(list(mesh) + [Xn], axis=-1)


@dataclass
class BNChart:
    """Sampled boundary normal chart of one face.

    Attributes
    ----------
    metric : MetricField
    face : int
    base : ndarray, shape tangential_shape + (n,)
        Base points on the face.
    depth : float
    steps : int
    bundle : GeodesicBundle
        Flow samples; trajectory index runs over the flattened base points.
    """

    metric: object
    face: int
    base: np.ndarray
    depth: float
    steps: int
    bundle: GeodesicBundle
    quality: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.base.shape[-1]

    @property
    def tangential_shape(self) -> tuple:
        return self.base.shape[:-1]

    @property
    def dt(self) -> float:
        return self.depth / self.steps

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def block_metric(self):
        """``G_ab`` and ``d_t G_ab`` on the sample lattice, shape ``tangential + (S+1, n-1, n-1)``."""
        G, dG, _, _ = bnc_metric(self.metric, self.bundle)
        shp = self.tangential_shape + G.shape[1:]
        return G.reshape(shp), dG.reshape(shp)

    def points(self) -> np.ndarray:
        """Slab points ``psi^{-1}(x', t_k)`` of shape ``tangential + (S+1, n)``."""
        return self.bundle.X.reshape(self.tangential_shape + self.bundle.X.shape[1:])

    def flow(self, Y: np.ndarray, t: np.ndarray, steps: int | None = None) -> np.ndarray:
        """``psi^{-1}(y', t)`` for arbitrary tangential points ``Y`` (shape (P, n-1)) and depths ``t`` (P,)."""
        Y = np.atleast_2d(np.asarray(Y, float))
        base = np.concatenate([Y, np.full((Y.shape[0], 1), float(self.face))], axis=1)
        N, _ = inward_normal_with_derivative(self.metric, base, self.face)
        steps = steps or self.steps
        out = integrate(self.metric, base, N, np.asarray(t, float), steps, record=False)
        return out.final

    def coordinates_of(self, X: np.ndarray, tol: float = 1e-12, maxiter: int = 30, steps: int | None = None):
        """Invert the chart: BNC coordinates ``(y', t)`` of slab points ``X`` (shape (P, n)).

        Damped Newton iteration on the shooting map, with the Jacobian
        ``[J_1, ..., J_{n-1}, v]`` supplied by the Jacobi fields.
        """
        X = np.atleast_2d(np.asarray(X, float))
        n = self.n
        steps = steps or self.steps
        y = X[:, : n - 1].copy()
        t = X[:, -1].copy() if self.face == 0 else 1.0 - X[:, -1]
        for _ in range(maxiter):
            base = np.concatenate([y, np.full((len(y), 1), float(self.face))], axis=1)
            b = shoot_normal(self.metric, base, self.face, np.maximum(t, 1e-14), steps, record=False)
            r = b.X[:, -1] - X
            if self.metric.periodic:
                r[:, : n - 1] -= np.round(r[:, : n - 1])
            if np.abs(r).max() < tol:
                return np.concatenate([y, t[:, None]], axis=1)
            D = np.concatenate([b.J[:, -1], b.V[:, -1, None, :]], axis=1).transpose(0, 2, 1)
            step = np.linalg.solve(D, r[..., None])[..., 0]
            y -= step[:, : n - 1]
            t -= step[:, -1]
        raise GeodesicError(f"boundary normal chart inversion did not converge (residual {np.abs(r).max():.2e})")


def boundary_normal_coordinates(metric, face: int = 0, depth: float = 0.2, steps: int = 40,
                                grid: Grid | None = None, resolution: int | None = None,
                                check: bool = True) -> BNChart:
    """Shoot the inward normal geodesics of one face.

    Parameters
    ----------
    metric : MetricField
    face : {0, 1}
    depth : float
        Length of the geodesics.
    steps : int
        RK4 steps (the sample spacing is ``depth / steps``).
    grid : Grid, optional
        Use its face nodes as base points.
    resolution : int, optional
        Otherwise a uniform ``resolution^(n-1)`` lattice (default 16).
    check : bool
        Raise on focal points (flow determinant ``<= 0.1``) and record the
        block-form residual ``max(|g_nn - 1|, |g_an|)``.

    Raises
    ------
    GeodesicError
        On focal points or geodesics leaving the slab.
    """
    if grid is not None:
        base = grid.face_coords(face)
    else:
        base = face_lattice(metric.n, resolution or 16, face)
    flat_base = base.reshape(-1, metric.n)
    bundle = shoot_normal(metric, flat_base, face, depth, steps)
    chart = BNChart(metric, face, base, float(depth), int(steps), bundle)
    if check:
        check_flow(bundle)
        _, _, mixed, unit = bnc_metric(metric, bundle)
        chart.quality = {
            "block_residual": float(max(np.abs(unit - 1).max(), np.abs(mixed).max())),
            "min_flow_determinant": float(flow_determinant(bundle).min()),
        }
    return chart


def mean_curvature_profile(chart: BNChart) -> np.ndarray:
    """Mean curvature ``H = 1/2 G^{ab} d_t G_ab`` of the level sets ``t = const``.

    Returns an array of shape ``tangential_shape + (steps + 1,)``.
    """
    G, dG = chart.block_metric()
    return 0.5 * np.einsum("...ab,...ba->...", np.linalg.inv(G), dG)


def mean_curvature_block(metric, X: np.ndarray) -> np.ndarray:
    """``1/2 g^{ab} d_n g_ab`` for a metric already in block form at slab points ``X``."""
    g, dg = metric.evaluate(X, 1)
    d = metric.n - 1
    return 0.5 * np.einsum("...ab,...ba->...", np.linalg.inv(g[..., :d, :d]), dg[..., -1, :d, :d])


def curve_jets(samples: np.ndarray, dt: float, max_order: int, npts: int | None = None) -> np.ndarray:
    """Derivatives at ``t = 0`` of samples along the last axis (one-sided Fornberg stencil)."""
    return one_sided_jets(samples, dt, max_order, npts)


# --------------------------------------------------------------- jet tables
@dataclass
class JetTable:
    """Normal jets at a face in boundary normal coordinates.

    Attributes
    ----------
    order : int
        Highest metric jet order.
    metric_jets : ndarray, shape (order + 1,) + tangential + (n-1, n-1)
        ``d_t^j G_ab(x', 0)``.
    mu_jets : ndarray or None, shape (m_max + 2,) + tangential
        ``d_t^j mu(x', 0)`` of an associated conformal normalization.
    h : float
        Boundary lattice spacing.
    meta : dict
        Stencil width, sample spacing and provenance.
    """

    order: int
    metric_jets: np.ndarray
    mu_jets: np.ndarray | None = None
    h: float = 0.0
    face: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        G0 = self.metric_jets[0]
        if np.any(np.linalg.eigvalsh(G0) <= 0):
            raise GaugeError("zeroth metric jet is not positive definite")
        if self.mu_jets is not None and np.any(self.mu_jets[:2] != 0):
            raise GaugeError("mu jets of orders 0 and 1 must vanish (gauge conditions)")

    def rows(self):
        """Iterate ``(index, alpha, beta, j, value)`` over the metric jets."""
        d = self.metric_jets.shape[-1]
        tshape = self.metric_jets.shape[1:-2]
        for idx in np.ndindex(*tshape):
            for a in range(d):
                for b in range(a, d):
                    for j in range(self.order + 1):
                        yield idx, a, b, j, float(self.metric_jets[(j,) + idx + (a, b)])


def metric_jet(chart: BNChart, order: int = 2, npts: int | None = None) -> JetTable:
    """Normal jets ``d_t^j G_ab|_{t=0}`` for ``0 <= j <= order``.

    ``j = 0`` and ``j = 1`` are read from the Jacobi fields exactly; higher
    orders differentiate the sampled ``d_t G`` with a one-sided Fornberg
    stencil of ``npts`` points (default ``order + 5``), i.e. of formal
    accuracy ``dt^(npts - order + 1)``.

    Raises
    ------
    GaugeError
        If the chart has too few samples for the stencil.
    """
    npts = npts or order + 5
    need = npts if order >= 2 else 1
    if chart.steps + 1 < need:
        raise GaugeError(f"chart has {chart.steps + 1} layers, jets of order {order} need {need}")
    G, dG = chart.block_metric()
    jets = [G[..., 0, :, :]]
    if order >= 1:
        d = np.moveaxis(dG, -3, -1)
        if order >= 2:
            dj = one_sided_jets(d, chart.dt, order - 1, npts)
            for j in range(order):
                jets.append(dj[..., j])
        else:
            jets.append(d[..., 0])
    h = 1.0 / chart.tangential_shape[0]
    return JetTable(order, np.stack(jets), None, h, chart.face,
                    {"dt": chart.dt, "npts": npts, "metric": getattr(chart.metric, "name", "metric")})


def determinant_normalize(G: np.ndarray) -> np.ndarray:
    """``G / det(G)^(1/d)`` for stacks of SPD ``d x d`` matrices (unit determinant)."""
    G = np.asarray(G, dtype=float)
    d = G.shape[-1]
    det = np.linalg.det(G)
    if np.any(det <= 0):
        raise GaugeError("determinant normalization needs positive definite matrices")
    return G / det[..., None, None] ** (1.0 / d)


@dataclass
class JetComparison:
    """Per-order discrepancies between two jet tables."""

    errors: list
    tolerances: list
    passed: list

    @property
    def all_passed(self) -> bool:
        return all(self.passed)

    @property
    def failing_orders(self) -> list:
        return [j for j, p in enumerate(self.passed) if not p]

    def as_dict(self) -> dict:
        return {"errors": self.errors, "tolerances": self.tolerances, "passed": self.passed}


def compare_jets(A: JetTable, B: JetTable, h: float | None = None, growth: float = 10.0,
                 tolerances=None) -> JetComparison:
    """Max-norm discrepancy per order with tolerances ``h^2 growth^j``.

    Raises
    ------
    GaugeError
        On shape mismatch.
    """
    if A.metric_jets.shape != B.metric_jets.shape:
        raise GaugeError(f"jet tables differ in shape: {A.metric_jets.shape} vs {B.metric_jets.shape}")
    h = h if h is not None else A.h
    errs = [float(np.abs(A.metric_jets[j] - B.metric_jets[j]).max()) for j in range(A.order + 1)]
    tols = list(tolerances) if tolerances is not None else [h ** 2 * growth ** j for j in range(A.order + 1)]
    return JetComparison(errs, tols, [e <= t for e, t in zip(errs, tols)])


__all__ = [
    "BNChart",
    "JetTable",
    "JetComparison",
    "boundary_normal_coordinates",
    "mean_curvature_profile",
    "mean_curvature_block",
    "metric_jet",
    "determinant_normalize",
    "compare_jets",
    "curve_jets",
    "face_lattice",
    "GeodesicBundle",
]
