"""Christoffel symbols, curvature and the conformal Laplacian potential.

All routines take metric derivative arrays in the layout of
:mod:`calderon_lab.geometry.fields` and work on arbitrary stacks of
points.  The Laplacian convention is ``Delta_g = |g|^{-1/2} d_j(|g|^{1/2} g^{jk} d_k)``
(negative spectrum), so the round unit sphere has scalar curvature ``n(n-1)``.
"""

from __future__ import annotations

import numpy as np


def conformal_coefficient(n: int) -> float:
    """``(n-2) / (4(n-1))``, the curvature weight of the conformal Laplacian."""
    return (n - 2) / (4.0 * (n - 1))


def christoffel_from_derivatives(g: np.ndarray, dg: np.ndarray, ginv: np.ndarray | None = None) -> np.ndarray:
    """``Gamma[..., l, j, k]`` from ``g`` and ``dg[..., k, i, j] = d_k g_ij``."""
    if ginv is None:
        ginv = np.linalg.inv(g)
    first = 0.5 * (np.einsum("...jmk->...mjk", dg) + np.einsum("...kmj->...mjk", dg) - dg)
    return np.einsum("...lm,...mjk->...ljk", ginv, first)


def christoffel_derivative(g, dg, ddg, ginv=None):
    """``dGamma[..., p, l, j, k] = d_p Gamma^l_{jk}`` and ``Gamma``."""
    if ginv is None:
        ginv = np.linalg.inv(g)
    n = g.shape[-1]
    lead = g.shape[:-2]
    first = 0.5 * (np.swapaxes(dg, -3, -2) + np.moveaxis(dg, -3, -1) - dg)
    dfirst = 0.5 * (np.swapaxes(ddg, -3, -2) + np.moveaxis(ddg, -3, -1) - ddg)
    first_flat = first.reshape(lead + (n, n * n))
    gi = ginv[..., None, :, :]
    dginv = -(gi @ dg @ gi)
    gamma = (ginv @ first_flat).reshape(lead + (n, n, n))
    dgamma = dginv @ first_flat[..., None, :, :] + gi @ dfirst.reshape(lead + (n, n, n * n))
    return dgamma.reshape(lead + (n, n, n, n)), gamma


def ricci_tensor(g, dg, ddg):
    """Ricci tensor ``R_jk = d_l G^l_jk - d_k G^l_jl + G^l_lm G^m_jk - G^l_km G^m_jl``."""
    dgam, gam = christoffel_derivative(g, dg, ddg)
    n = g.shape[-1]
    lead = g.shape[:-2]
    t1 = np.trace(dgam, axis1=-4, axis2=-3)
    t2 = np.swapaxes(np.trace(dgam, axis1=-3, axis2=-1), -1, -2)
    trace_gam = np.trace(gam, axis1=-3, axis2=-2)
    t3 = (trace_gam[..., None, :] @ gam.reshape(lead + (n, n * n))).reshape(lead + (n, n))
    # t4[j, k] = sum_{l, m} gam[l, k, m] gam[m, j, l]
    A = np.swapaxes(gam, -3, -2).reshape(lead + (n, n * n))  # [k, (l, m)]
    B = np.moveaxis(gam, -1, -3).reshape(lead + (n * n, n))  # [(l, m), j]
    t4 = np.swapaxes(A @ B, -1, -2)
    return t1 - t2 + t3 - t4


def scalar_curvature(g, dg, ddg):
    """Scalar curvature ``S = g^{jk} R_jk``."""
    R = ricci_tensor(g, dg, ddg)
    return (np.linalg.inv(g) * R).sum(axis=(-2, -1))


def christoffel(metric, X) -> np.ndarray:
    """Christoffel symbols of a metric field at points ``X``."""
    g, dg = metric.evaluate(X, 1)
    return christoffel_from_derivatives(g, dg)


def scalar_curvature_at(metric, X) -> np.ndarray:
    """Scalar curvature of a metric field at points ``X``."""
    return scalar_curvature(*metric.evaluate(X, 2))


def conformal_potential(metric, X) -> np.ndarray:
    """Zeroth-order coefficient ``(n-2)/(4(n-1)) S_g`` of the conformal Laplacian."""
    return conformal_coefficient(metric.n) * scalar_curvature_at(metric, X)


def inward_unit_normal(g: np.ndarray, face: int = 0) -> np.ndarray:
    """Inward unit normal vector ``N^i`` at points of a face.

    On face 0 the inward conormal is ``dx_n``; on face 1 it is ``-dx_n``.
    """
    ginv = np.linalg.inv(g)
    gnn = ginv[..., -1, -1]
    N = ginv[..., :, -1] / np.sqrt(gnn)[..., None]
    return N if face == 0 else -N


def area_density(g: np.ndarray) -> np.ndarray:
    """Boundary area element per coordinate area, ``sqrt|g| sqrt(g^nn)``."""
    ginv = np.linalg.inv(g)
    return np.sqrt(np.linalg.det(g)) * np.sqrt(ginv[..., -1, -1])
