"""Uniform grid on the slab ``T^(n-1) x [0, 1]``.

The tangential directions are periodic with ``N_t`` cells of width
``h_t = 1/N_t``; the normal direction has ``N_n + 1`` node layers
``x_n = j/N_n``.  Arrays sampled on the grid always put the normal axis
last, so a scalar field has shape ``(N_t, ..., N_t, N_n + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import GridError


@dataclass(frozen=True)
class Grid:
    """Node lattice of the slab.

    Parameters
    ----------
    n : int
        Manifold dimension, at least 3.
    N_t : int
        Tangential cells per periodic direction (even, at least 8).
    N_n : int
        Normal cells (at least 8).
    """

    n: int = 3
    N_t: int = 32
    N_n: int = 32

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise GridError(f"dimension n must be an integer >= 3, got {self.n}")
        if self.N_t < 8 or self.N_t % 2:
            raise GridError(f"N_t must be even and >= 8, got {self.N_t}")
        if self.N_n < 8:
            raise GridError(f"N_n must be >= 8, got {self.N_n}")

    # ------------------------------------------------------------------ sizes
    @property
    def h_t(self) -> float:
        return 1.0 / self.N_t

    @property
    def h_n(self) -> float:
        return 1.0 / self.N_n

    @property
    def h(self) -> float:
        """Largest mesh width."""
        return max(self.h_t, self.h_n)

    @property
    def cell_volume(self) -> float:
        return self.h_t ** (self.n - 1) * self.h_n

    @property
    def tangential_shape(self) -> tuple:
        return (self.N_t,) * (self.n - 1)

    @property
    def shape(self) -> tuple:
        return self.tangential_shape + (self.N_n + 1,)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_boundary(self) -> int:
        """Number of nodes on both faces together."""
        return 2 * self.N_t ** (self.n - 1)

    @property
    def n_interior(self) -> int:
        return self.N_t ** (self.n - 1) * (self.N_n - 1)

    # ---------------------------------------------------------- coordinates
    def tangential_axis(self) -> np.ndarray:
        return np.arange(self.N_t) / self.N_t

    def normal_axis(self) -> np.ndarray:
        return np.arange(self.N_n + 1) / self.N_n

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (n,)``."""
        axes = [self.tangential_axis()] * (self.n - 1) + [self.normal_axis()]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def face_coords(self, face: int = 0) -> np.ndarray:
        """Coordinates of the nodes on face ``x_n = face``, shape ``tangential_shape + (n,)``."""
        return self.coords[..., -1 if face else 0, :]

    def midpoints(self, axis: int) -> np.ndarray:
        """Coordinates of edge midpoints in direction ``axis``.

        For a tangential axis the result has the node shape (periodic
        edges ``i -> i+1``); for the normal axis it has ``N_n`` layers.
        """
        x = self.coords
        if axis == self.n - 1:
            return 0.5 * (x[..., :-1, :] + x[..., 1:, :])
        mid = x.copy()
        mid[..., axis] = mid[..., axis] + 0.5 * self.h_t
        return mid

    # -------------------------------------------------------------- indexing
    def flat_index(self, multi) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(m) for m in multi), self.shape)

    @cached_property
    def layer_of(self) -> np.ndarray:
        """Normal layer index of every flattened node."""
        return np.broadcast_to(np.arange(self.N_n + 1), self.shape).ravel()

    @cached_property
    def interior_indices(self) -> np.ndarray:
        j = self.layer_of
        return np.flatnonzero((j > 0) & (j < self.N_n))

    @cached_property
    def boundary_indices(self) -> np.ndarray:
        """Flat indices of face-0 nodes followed by face-1 nodes."""
        j = self.layer_of
        return np.concatenate([np.flatnonzero(j == 0), np.flatnonzero(j == self.N_n)])

    def face_indices(self, face: int) -> np.ndarray:
        m = self.N_t ** (self.n - 1)
        b = self.boundary_indices
        return b[:m] if face == 0 else b[m:]

    def node_of_point(self, x) -> tuple:
        """Nearest node multi-index to the point ``x`` (tangentially wrapped)."""
        x = np.asarray(x, dtype=float)
        idx = [int(np.rint(x[a] * self.N_t)) % self.N_t for a in range(self.n - 1)]
        idx.append(int(np.clip(np.rint(x[-1] * self.N_n), 0, self.N_n)))
        return tuple(idx)

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.n, self.N_t * factor, self.N_n * factor)

    def describe(self) -> dict:
        return {"n": self.n, "N_t": self.N_t, "N_n": self.N_n}
