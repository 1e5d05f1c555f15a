"""Rectangular boundary patches and smooth windows on the faces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid


def _edge_profile(d: np.ndarray) -> np.ndarray:
    """Smooth step: 0 for ``d <= 0``, 1 for ``d >= 1``."""
    d = np.clip(d, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(d > 0, np.exp(-1.0 / np.where(d > 0, d, 1.0)), 0.0)
        b = np.where(d < 1, np.exp(-1.0 / np.where(d < 1, 1.0 - d, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class Patch:
    """Closed box ``[lower, upper]^(n-1)``-type sub-rectangle of one face.

    Attributes
    ----------
    face : int
    lower, upper : tuple of float
        Corner coordinates in ``[0, 1)``.
    """

    face: int = 0
    lower: tuple = (0.25, 0.25)
    upper: tuple = (0.75, 0.75)

    @classmethod
    def square(cls, n: int = 3, face: int = 0, lo: float = 0.25, hi: float = 0.75) -> "Patch":
        return cls(face, (lo,) * (n - 1), (hi,) * (n - 1))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def area(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def contains(self, Y: np.ndarray, margin: float = 0.0, tol: float = 1e-12) -> np.ndarray:
        """Tangential points ``Y`` (shape (..., n-1)) in the patch enlarged by ``margin``."""
        Y = np.asarray(Y, float)
        lo = np.asarray(self.lower) - margin - tol
        hi = np.asarray(self.upper) + margin + tol
        return np.all((Y >= lo) & (Y <= hi), axis=-1)

    def face_mask(self, grid: Grid, margin: float = 0.0) -> np.ndarray:
        """Boolean mask over the face nodes (tangential shape)."""
        return self.contains(grid.face_coords(self.face)[..., :-1], margin)

    def boundary_mask(self, grid: Grid, margin: float = 0.0) -> np.ndarray:
        """Boolean mask over all boundary nodes (boundary ordering)."""
        m = grid.N_t ** (grid.n - 1)
        out = np.zeros(2 * m, dtype=bool)
        out[self.face * m : (self.face + 1) * m] = self.face_mask(grid, margin).ravel()
        return out

    def boundary_nodes(self, grid: Grid) -> np.ndarray:
        """Indices (boundary ordering) of the face nodes in the closed patch."""
        return np.flatnonzero(self.boundary_mask(grid))

    def window(self, Y: np.ndarray, inner: float, outer: float) -> np.ndarray:
        """Smooth bump: 1 within ``inner`` of the patch, 0 beyond ``outer`` (box distance)."""
        Y = np.asarray(Y, float)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        dist = np.maximum(np.maximum(lo - Y, Y - hi), 0.0).max(axis=-1)
        return 1.0 - _edge_profile((dist - inner) / (outer - inner))

    def describe(self) -> dict:
        return {"face": self.face, "lower": list(self.lower), "upper": list(self.upper)}
