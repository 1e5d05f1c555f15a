"""Normal geodesics and their Jacobi fields.

Geodesics are integrated in slab coordinates with the classical RK4 scheme.
The tangential variations ``J_alpha = d gamma / d x'^alpha`` of the normal
geodesic family are integrated alongside.  They follow the linearised
geodesic equation

    J'' = -(d_p Gamma^l_jk) J^p v^j v^k - 2 Gamma^l_jk v^j J'^k,

which uses exact second derivatives of the metric.  From ``(v, J, J')``
the metric in boundary normal coordinates and its first normal derivative
are available pointwise, without differentiating sampled data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import GeodesicError
from ..geometry.curvature import christoffel_derivative, christoffel_from_derivatives


@dataclass
class GeodesicBundle:
    """Sampled family of geodesics with tangential Jacobi fields.

    Attributes
    ----------
    t : ndarray, shape (P, S + 1)
        Parameter values of the samples per trajectory.
    X, V : ndarray, shape (P, S + 1, n)
        Positions and velocities.
    J, dJ : ndarray, shape (P, S + 1, n - 1, n) or None
        Jacobi fields ``J[..., alpha, :]`` and their parameter derivatives.
    """

    t: np.ndarray
    X: np.ndarray
    V: np.ndarray
    J: np.ndarray | None = None
    dJ: np.ndarray | None = None

    @property
    def final(self) -> np.ndarray:
        return self.X[:, -1]


def inward_normal_with_derivative(metric, X0: np.ndarray, face: int):
    """Inward unit normal ``N`` on a face and its tangential derivatives.

    Returns
    -------
    N : ndarray, shape (P, n)
    dN : ndarray, shape (P, n - 1, n)
        ``dN[:, alpha] = d_alpha N`` along the face.
    """
    g, dg = metric.evaluate(X0, 1)
    ginv = np.linalg.inv(g)
    dginv = -np.einsum("...ia,...kab,...bj->...kij", ginv, dg, ginv)
    sgn = 1.0 if face == 0 else -1.0
    col = ginv[..., :, -1]
    gnn = ginv[..., -1, -1]
    N = sgn * col / np.sqrt(gnn)[..., None]
    dcol = dginv[..., :, :, -1]
    dgnn = dginv[..., :, -1, -1]
    dN = sgn * (dcol / np.sqrt(gnn)[..., None, None] - 0.5 * col[..., None, :] * (dgnn / gnn[..., None] ** 1.5)[..., None])
    return N, dN[..., :-1, :]


def _accelerations(metric, x, v, J, dJ):
    if J is None:
        g, dg = metric.evaluate(x, 1)
        gam = christoffel_from_derivatives(g, dg)
        a = -np.einsum("...ljk,...j,...k->...l", gam, v, v)
        return a, None
    g, dg, ddg = metric.evaluate(x, 2)
    dgam, gam = christoffel_derivative(g, dg, ddg)
    a = -np.einsum("...ljk,...j,...k->...l", gam, v, v)
    ddJ = -np.einsum("...pljk,...ap,...j,...k->...al", dgam, J, v, v) - 2.0 * np.einsum(
        "...ljk,...j,...ak->...al", gam, v, dJ
    )
    return a, ddJ


def integrate(metric, X0, V0, t_final, steps: int, J0=None, dJ0=None, record: bool = True) -> GeodesicBundle:
    """RK4 integration of geodesics (and optionally Jacobi fields).

    Parameters
    ----------
    metric : MetricField
    X0, V0 : ndarray, shape (P, n)
        Initial points and velocities.
    t_final : float or ndarray, shape (P,)
        Final parameter per trajectory (the step size is ``t_final/steps``).
    steps : int
    J0, dJ0 : ndarray, shape (P, n - 1, n), optional
        Initial Jacobi data; omit to integrate geodesics only.
    record : bool
        Keep every step (``True``) or only the endpoints.
    """
    x = np.array(X0, dtype=float)
    v = np.array(V0, dtype=float)
    P = x.shape[0]
    tf = np.broadcast_to(np.asarray(t_final, dtype=float), (P,))
    dt = (tf / steps)[:, None]
    jac = J0 is not None
    J = np.array(J0, dtype=float) if jac else None
    dJ = np.array(dJ0, dtype=float) if jac else None
    dtj = dt[:, :, None]

    keep = [(x, v, J, dJ)]
    for _ in range(steps):
        a1, b1 = _accelerations(metric, x, v, J, dJ)
        x2, v2 = x + 0.5 * dt * v, v + 0.5 * dt * a1
        J2, dJ2 = (J + 0.5 * dtj * dJ, dJ + 0.5 * dtj * b1) if jac else (None, None)
        a2, b2 = _accelerations(metric, x2, v2, J2, dJ2)
        x3, v3 = x + 0.5 * dt * v2, v + 0.5 * dt * a2
        J3, dJ3 = (J + 0.5 * dtj * dJ2, dJ + 0.5 * dtj * b2) if jac else (None, None)
        a3, b3 = _accelerations(metric, x3, v3, J3, dJ3)
        x4, v4 = x + dt * v3, v + dt * a3
        J4, dJ4 = (J + dtj * dJ3, dJ + dtj * b3) if jac else (None, None)
        a4, b4 = _accelerations(metric, x4, v4, J4, dJ4)
        x = x + dt / 6.0 * (v + 2 * v2 + 2 * v3 + v4)
        v = v + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        if jac:
            J, dJ = (
                J + dtj / 6.0 * (dJ + 2 * dJ2 + 2 * dJ3 + dJ4),
                dJ + dtj / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4),
            )
        if record:
            keep.append((x, v, J, dJ))
    if not record:
        keep.append((x, v, J, dJ))
    t = dt * np.arange(len(keep))[None, :] if record else np.stack([np.zeros(P), tf], axis=1)
    X = np.stack([k[0] for k in keep], axis=1)
    V = np.stack([k[1] for k in keep], axis=1)
    if jac:
        return GeodesicBundle(t, X, V, np.stack([k[2] for k in keep], axis=1), np.stack([k[3] for k in keep], axis=1))
    return GeodesicBundle(t, X, V)


def shoot_normal(metric, base: np.ndarray, face: int, depth, steps: int, jacobi: bool = True,
                 record: bool = True) -> GeodesicBundle:
    """Shoot unit-speed inward normal geodesics from face points ``base`` (shape (P, n))."""
    base = np.asarray(base, dtype=float)
    N, dN = inward_normal_with_derivative(metric, base, face)
    n = base.shape[-1]
    if not jacobi:
        return integrate(metric, base, N, depth, steps, record=record)
    J0 = np.broadcast_to(np.eye(n)[: n - 1], (base.shape[0], n - 1, n)).copy()
    return integrate(metric, base, N, depth, steps, J0=J0, dJ0=dN, record=record)


def bnc_metric(metric, bundle: GeodesicBundle):
    """Tangential block of the metric in boundary normal coordinates and its normal derivative.

    Returns
    -------
    G, dG : ndarray, shape (P, S + 1, n - 1, n - 1)
        ``G_ab = g(J_a, J_b)`` and ``d_t G_ab``.
    mixed, unit : ndarray, shape (P, S + 1, n - 1) and (P, S + 1)
        ``g(J_a, v)`` and ``g(v, v)``; the block form requires ``0`` and ``1``.
    """
    g, dg = metric.evaluate(bundle.X, 1)
    J, dJ, v = bundle.J, bundle.dJ, bundle.V
    G = np.einsum("...ai,...ij,...bj->...ab", J, g, J)
    dg_v = np.einsum("...kij,...k->...ij", dg, v)
    gJd = np.einsum("...ai,...ij,...bj->...ab", dJ, g, J)
    dG = gJd + np.swapaxes(gJd, -1, -2) + np.einsum("...ai,...ij,...bj->...ab", J, dg_v, J)
    mixed = np.einsum("...ai,...ij,...j->...a", J, g, v)
    unit = np.einsum("...i,...ij,...j->...", v, g, v)
    return G, dG, mixed, unit


def flow_determinant(bundle: GeodesicBundle) -> np.ndarray:
    """``det[J_1, ..., J_{n-1}, v]`` normalised by its value at ``t = 0``."""
    M = np.concatenate([bundle.J, bundle.V[..., None, :]], axis=-2)
    det = np.linalg.det(M)
    return det / det[:, :1]


def check_flow(bundle: GeodesicBundle, min_det: float = 0.1):
    """Raise :class:`GeodesicError` on focal points or geodesics leaving the slab."""
    xn = bundle.X[..., -1]
    if np.any(xn < -1e-9) or np.any(xn > 1 + 1e-9):
        raise GeodesicError("normal geodesics leave the slab; reduce the depth")
    if bundle.J is not None:
        det = flow_determinant(bundle)
        if np.any(det <= min_det):
            k = np.unravel_index(int(np.argmin(det)), det.shape)
            raise GeodesicError(
                f"flow Jacobian determinant {det[k]:.3f} <= {min_det} at t = {bundle.t[k]:.3f}; depth too large"
            )
