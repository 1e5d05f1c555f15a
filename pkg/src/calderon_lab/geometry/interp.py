"""Tensor-product interpolation on the slab grid (periodic tangential axes)."""

from __future__ import annotations

from itertools import product

import numpy as np

# Lagrange basis on nodes 0, 1, 2, 3 as polynomial coefficients in p.
_NODES = np.arange(4.0)
_LAGRANGE = np.array(
    [np.polynomial.polynomial.polyfromroots(np.delete(_NODES, k)) / np.prod(k - np.delete(_NODES, k)) for k in range(4)]
)


def _cubic_axis(t: np.ndarray, size: int, periodic: bool):
    """Stencil start indices and weights (value, derivative) along one axis.

    ``t`` is the coordinate in units of the mesh width.
    """
    base = np.floor(t).astype(int) - 1
    if not periodic:
        base = np.clip(base, 0, size - 4)
    p = t - base
    powers = np.stack([np.ones_like(p), p, p * p, p ** 3], axis=-1)
    dpowers = np.stack([np.zeros_like(p), np.ones_like(p), 2 * p, 3 * p * p], axis=-1)
    w = powers @ _LAGRANGE.T
    dw = dpowers @ _LAGRANGE.T
    idx = base[..., None] + np.arange(4)
    if periodic:
        idx = idx % size
    return idx, w, dw


def _linear_axis(t: np.ndarray, size: int, periodic: bool):
    base = np.floor(t).astype(int)
    if not periodic:
        base = np.clip(base, 0, size - 2)
    s = t - base
    w = np.stack([1 - s, s], axis=-1)
    dw = np.stack([-np.ones_like(s), np.ones_like(s)], axis=-1)
    idx = base[..., None] + np.arange(2)
    if periodic:
        idx = idx % size
    return idx, w, dw


class GridInterpolator:
    """Evaluate grid-sampled fields at arbitrary points of the slab.

    Parameters
    ----------
    shape : tuple of int
        Grid shape; the last axis is the bounded normal axis.
    spacing : tuple of float
        Mesh width per axis.
    kind : {"cubic", "linear"}
        Interpolation order.
    periodic : tuple of bool, optional
        Periodicity flags, default all but the last axis.
    """

    def __init__(self, shape, spacing, kind: str = "cubic", periodic=None):
        self.shape = tuple(shape)
        self.spacing = tuple(float(s) for s in spacing)
        self.ndim = len(self.shape)
        self.periodic = tuple(periodic) if periodic is not None else (True,) * (self.ndim - 1) + (False,)
        self.kind = kind
        self._axis = _cubic_axis if kind == "cubic" else _linear_axis

    @classmethod
    def for_grid(cls, grid, kind: str = "cubic"):
        return cls(grid.shape, (grid.h_t,) * (grid.n - 1) + (grid.h_n,), kind)

    def stencil(self, X: np.ndarray, derivative: bool = False):
        """Flat node indices and weights for the points ``X`` (shape ``(M, ndim)``).

        Returns ``(idx, w)`` or ``(idx, w, dw)`` where ``dw[:, k]`` holds the
        weights of the k-th partial derivative.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        axes = []
        for a in range(self.ndim):
            t = X[:, a] / self.spacing[a]
            axes.append(self._axis(t, self.shape[a], self.periodic[a]))
        width = axes[0][0].shape[-1]
        combos = list(product(range(width), repeat=self.ndim))
        strides = np.cumprod((1,) + self.shape[::-1])[:-1][::-1]
        idx = np.zeros((X.shape[0], len(combos)), dtype=np.int64)
        w = np.ones((X.shape[0], len(combos)))
        for c, combo in enumerate(combos):
            for a, m in enumerate(combo):
                idx[:, c] += axes[a][0][:, m] * strides[a]
                w[:, c] *= axes[a][1][:, m]
        if not derivative:
            return idx, w
        dw = np.ones((X.shape[0], self.ndim, len(combos)))
        for c, combo in enumerate(combos):
            for k in range(self.ndim):
                for a, m in enumerate(combo):
                    dw[:, k, c] *= (axes[a][2][:, m] / self.spacing[a]) if a == k else axes[a][1][:, m]
        return idx, w, dw

    def __call__(self, field: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Interpolate ``field`` (grid shape followed by component axes) at ``X``."""
        X = np.asarray(X, dtype=float)
        lead = X.shape[:-1]
        idx, w = self.stencil(X.reshape(-1, self.ndim))
        flat = field.reshape((-1,) + field.shape[self.ndim:])
        vals = np.einsum("mc,mc...->m...", w, flat[idx])
        return vals.reshape(lead + field.shape[self.ndim:])

    def gradient(self, field: np.ndarray, X: np.ndarray):
        """Values and gradients of the interpolant; the derivative index is the last axis."""
        X = np.asarray(X, dtype=float)
        lead = X.shape[:-1]
        idx, w, dw = self.stencil(X.reshape(-1, self.ndim), derivative=True)
        flat = field.reshape((-1,) + field.shape[self.ndim:])
        g = flat[idx]
        vals = np.einsum("mc,mc...->m...", w, g)
        grads = np.einsum("mkc,mc...->mk...", dw, g)
        comp = field.shape[self.ndim:]
        return vals.reshape(lead + comp), np.moveaxis(grads.reshape(lead + (self.ndim,) + comp), len(lead), -1)

    def as_matrix(self, X: np.ndarray):
        """Sparse interpolation matrix ``E`` with ``E @ field.ravel() = values``."""
        import scipy.sparse as sp

        idx, w = self.stencil(np.atleast_2d(X))
        m = idx.shape[0]
        rows = np.repeat(np.arange(m), idx.shape[1])
        return sp.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(m, int(np.prod(self.shape))))
