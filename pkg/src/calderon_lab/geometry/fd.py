"""Finite-difference weights and derivative fields on the slab grid."""

from __future__ import annotations

import numpy as np


def fornberg_weights(nodes, x0: float, max_deriv: int) -> np.ndarray:
    """Finite-difference weights on arbitrary nodes (Fornberg's recursion).

    Parameters
    ----------
    nodes : array_like
        Stencil abscissae.
    x0 : float
        Point at which derivatives are approximated.
    max_deriv : int
        Highest derivative order.

    Returns
    -------
    ndarray, shape (max_deriv + 1, len(nodes))
        ``w[m] @ f(nodes)`` approximates the m-th derivative at ``x0``.
    """
    z = np.asarray(nodes, dtype=float)
    npts = z.size
    c = np.zeros((npts, max_deriv + 1))
    c1 = 1.0
    c4 = z[0] - x0
    c[0, 0] = 1.0
    for i in range(1, npts):
        mn = min(i, max_deriv)
        c2 = 1.0
        c5 = c4
        c4 = z[i] - x0
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c.T


def derivative_periodic(f: np.ndarray, axis: int, h: float, deriv: int = 1) -> np.ndarray:
    """Fourth-order central difference along a periodic axis."""
    r = lambda s: np.roll(f, -s, axis=axis)  # noqa: E731  r(s)[i] = f[i+s]
    if deriv == 1:
        return (-r(2) + 8 * r(1) - 8 * r(-1) + r(-2)) / (12 * h)
    if deriv == 2:
        return (-r(2) + 16 * r(1) - 30 * f + 16 * r(-1) - r(-2)) / (12 * h * h)
    raise ValueError("deriv must be 1 or 2")


def derivative_nonperiodic(f: np.ndarray, axis: int, h: float, deriv: int = 1, order: int = 4) -> np.ndarray:
    """Derivative along a bounded uniform axis.

    Interior points use centred stencils; points near the ends use
    one-sided stencils of the same formal order.
    """
    f = np.moveaxis(f, axis, 0)
    m = f.shape[0]
    p = order + deriv if deriv > 1 else order + 1
    p = min(p, m)
    out = np.empty_like(f, dtype=float)
    for j in range(m):
        start = int(np.clip(j - (p - 1) // 2, 0, m - p))
        idx = np.arange(start, start + p)
        w = fornberg_weights(idx - j, 0.0, deriv)[deriv] / h ** deriv
        out[j] = np.tensordot(w, f[idx], axes=(0, 0))
    return np.moveaxis(out, 0, axis)


def gradient_field(f: np.ndarray, n: int, h_t: float, h_n: float) -> np.ndarray:
    """All first partial derivatives of a sampled field.

    ``f`` has the grid shape in its first ``n`` axes followed by any
    component axes.  The returned array inserts the derivative index
    right after the grid axes.
    """
    parts = []
    for k in range(n):
        if k < n - 1:
            parts.append(derivative_periodic(f, k, h_t))
        else:
            parts.append(derivative_nonperiodic(f, k, h_n))
    return np.stack(parts, axis=n)


def hessian_field(f: np.ndarray, n: int, h_t: float, h_n: float) -> np.ndarray:
    """All second partial derivatives, derivative indices after the grid axes."""
    hs = [h_t] * (n - 1) + [h_n]

    def d(a, arr, deriv):
        if a < n - 1:
            return derivative_periodic(arr, a, hs[a], deriv)
        return derivative_nonperiodic(arr, a, hs[a], deriv)

    first = [d(k, f, 1) for k in range(n)]
    out = np.empty(f.shape[:n] + (n, n) + f.shape[n:])
    for k in range(n):
        for l in range(k, n):
            val = d(k, f, 2) if k == l else d(l, first[k], 1)
            out[(slice(None),) * n + (k, l)] = val
            out[(slice(None),) * n + (l, k)] = val
    return out


def one_sided_jets(samples: np.ndarray, ds: float, max_order: int, npts: int | None = None) -> np.ndarray:
    """Derivatives at ``s = 0`` of uniformly sampled curves.

    Parameters
    ----------
    samples : ndarray
        Values at ``s = j * ds`` along the last axis.
    ds : float
        Sample spacing.
    max_order : int
        Highest derivative returned.
    npts : int, optional
        Stencil width, default ``max_order + 5``.

    Returns
    -------
    ndarray
        Array with the last axis replaced by derivative orders ``0..max_order``.
    """
    npts = npts or max_order + 5
    if samples.shape[-1] < npts:
        raise ValueError(f"need at least {npts} samples, got {samples.shape[-1]}")
    w = fornberg_weights(np.arange(npts), 0.0, max_order)
    scale = ds ** -np.arange(max_order + 1)
    return np.einsum("...p,mp->...m", samples[..., :npts], w) * scale
