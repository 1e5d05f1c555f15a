"""Linear solvers for the interior Dirichlet system ``A_II u = b``.

Two interchangeable back ends share one interface:

* :class:`DirectSolver` factors the matrix once with SuperLU and reuses
  the factorization for every right-hand side.
* :class:`PCGSolver` runs a batched preconditioned conjugate gradient.
  The preconditioner is the operator with tangentially averaged
  coefficients, which is diagonal in tangential Fourier modes and is
  solved exactly mode by mode with a tridiagonal sweep in the normal
  direction.

Both back ends check the relative residual of every column.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import EigenvalueObstructionError, SolverError

log = logging.getLogger(__name__)

DIRECT_LIMIT = 6_000
"""Largest number of unknowns handled by the direct back end by default."""


def _as_columns(b):
    b = np.asarray(b, dtype=float)
    return (b[:, None], True) if b.ndim == 1 else (b, False)


class _Base:
    rtol: float
    A: sps.csr_matrix

    def check_residual(self, X, B):
        R = B - self.A @ X
        bn = np.linalg.norm(B, axis=0)
        bn[bn == 0] = 1.0
        rel = np.linalg.norm(R, axis=0) / bn
        worst = float(rel.max()) if rel.size else 0.0
        if worst > self.rtol:
            raise SolverError(f"relative residual {worst:.2e} exceeds {self.rtol:.1e}")
        return worst


class DirectSolver(_Base):
    """Sparse LU factorization with a smallest-eigenvalue guard.

    Parameters
    ----------
    A : sparse matrix
        Symmetric system matrix.
    rtol : float
        Residual acceptance threshold for each solve.
    guard : bool
        Estimate the smallest eigenvalue by inverse iteration and raise
        :class:`EigenvalueObstructionError` when the matrix is singular to
        working precision relative to its diagonal.
    """

    def __init__(self, A, rtol: float = 1e-10, guard: bool = True, guard_tol: float = 1e-9):
        self.A = sps.csc_matrix(A)
        self.rtol = rtol
        try:
            self._lu = spla.splu(self.A, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:  # exactly singular factor
            raise EigenvalueObstructionError(f"factorization failed: {exc}", 0.0) from exc
        self.lambda_min = None
        if guard:
            self.lambda_min = self._smallest_eigenvalue()
            scale = float(np.abs(self.A.diagonal()).max())
            if abs(self.lambda_min) < guard_tol * scale:
                raise EigenvalueObstructionError(
                    f"zero is numerically a Dirichlet eigenvalue (lambda_min ~ {self.lambda_min:.3e})",
                    self.lambda_min,
                )

    def _smallest_eigenvalue(self, iters: int = 12) -> float:
        """Inverse iteration; returns the eigenvalue of smallest magnitude."""
        rng = np.random.default_rng(0)
        v = rng.standard_normal(self.A.shape[0])
        v /= np.linalg.norm(v)
        lam = np.inf
        for _ in range(iters):
            w = self._lu.solve(v)
            nw = np.linalg.norm(w)
            if not np.isfinite(nw) or nw == 0:
                return 0.0
            vw = float(v @ w)
            lam = 1.0 / vw if vw != 0 else 0.0
            v = w / nw
        return lam

    def solve(self, b):
        B, vec = _as_columns(b)
        X = self._lu.solve(B)
        if not np.all(np.isfinite(X)):
            raise EigenvalueObstructionError("non-finite solution from the factorization", 0.0)
        self.last_residual = self.check_residual(X, B)
        return X[:, 0] if vec else X


@dataclass
class TangentialSymbol:
    """Tangentially averaged operator pieces used by the FFT preconditioner.

    Attributes hold per-layer means of the coefficients ``sqrt|g| g^{jk}``.
    ``tan`` maps ``(alpha, beta)`` to layer means and ``potential`` holds
    the layer means of ``sqrt|g| q``; both are node layers for the lumped
    mass and normal-cell layers for the consistent mass.  ``normal`` holds
    the edge-layer means of the normal-normal coefficient and
    ``mixed[alpha]`` the edge-layer means of the tangential-normal
    coefficient.
    """

    n: int
    N_t: int
    N_n: int
    tan: dict
    normal: np.ndarray
    mixed: list
    potential: np.ndarray
    scale: float
    mass: str = "lumped"


class FFTPreconditioner:
    """Exact inverse of the tangentially averaged interior operator."""

    def __init__(self, sym: TangentialSymbol):
        n, Nt, Nn = sym.n, sym.N_t, sym.N_n
        ht, hn = 1.0 / Nt, 1.0 / Nn
        self.sym = sym
        self.tshape = (Nt,) * (n - 1)
        self.L = Nn - 1
        k = np.fft.fftfreq(Nt, d=1.0 / Nt)
        kr = np.fft.rfftfreq(Nt, d=1.0 / Nt)
        ks = [k] * (n - 2) + [kr]
        theta = np.meshgrid(*[2 * np.pi * kk / Nt for kk in ks], indexing="ij")
        self.mshape = theta[0].shape
        layers = np.arange(1, Nn)  # interior node layers
        diag = np.zeros(self.mshape + (self.L,), dtype=complex)
        lower = np.zeros(self.mshape + (self.L,), dtype=complex)  # coefficient of u_{j-1} in row j
        upper = np.zeros(self.mshape + (self.L,), dtype=complex)  # coefficient of u_{j+1} in row j
        def add_weighted(symbol_part, c):
            """Add ``symbol_part`` times the normal weighting of coefficient ``c``."""
            nonlocal diag, lower, upper
            sp_ = symbol_part[..., None]
            if sym.mass == "lumped":
                diag += sp_ * c[layers]
            else:
                diag += sp_ * (c[layers - 1] + c[layers]) / 3.0
                lower += sp_ * c[layers - 1] / 6.0
                upper += sp_ * c[layers] / 6.0

        for (a, b), c in sym.tan.items():
            if a == b:
                s = (2 - 2 * np.cos(theta[a])) / ht ** 2
            else:
                s = np.sin(theta[a]) * np.sin(theta[b]) / ht ** 2
            add_weighted(s, c)
        ce = sym.normal  # edge layers 0..Nn-1, edge e between node e and e+1
        diag += (ce[layers - 1] + ce[layers]) / hn ** 2
        lower += -ce[layers - 1] / hn ** 2
        upper += -ce[layers] / hn ** 2
        for a, cm in enumerate(sym.mixed):
            sig = (np.sin(theta[a]) / ht)[..., None]
            # i*sig*Dn^T diag(c) Avg plus its adjoint: the diagonal parts cancel
            lower += 1j * sig * cm[layers - 1] / hn
            upper += -1j * sig * cm[layers] / hn
        add_weighted(np.ones(self.mshape), sym.potential)
        diag *= sym.scale
        lower *= sym.scale
        upper *= sym.scale
        # Thomas factorization
        cp = np.zeros_like(diag)
        den = np.zeros_like(diag)
        den[..., 0] = diag[..., 0]
        cp[..., 0] = upper[..., 0] / den[..., 0]
        for j in range(1, self.L):
            den[..., j] = diag[..., j] - lower[..., j] * cp[..., j - 1]
            cp[..., j] = upper[..., j] / den[..., j]
        self.lower, self.cp, self.den = lower, cp, den
        self.min_pivot = float(np.abs(den).min())

    def __call__(self, R: np.ndarray) -> np.ndarray:
        k = R.shape[1]
        nt = len(self.tshape)
        r = R.reshape(self.tshape + (self.L, k))
        rh = np.fft.rfftn(r, axes=tuple(range(nt)))
        y = np.empty_like(rh)
        low = self.lower[..., None]
        cp = self.cp[..., None]
        den = self.den[..., None]
        y[..., 0, :] = rh[..., 0, :] / den[..., 0, :]
        for j in range(1, self.L):
            y[..., j, :] = (rh[..., j, :] - low[..., j, :] * y[..., j - 1, :]) / den[..., j, :]
        for j in range(self.L - 2, -1, -1):
            y[..., j, :] -= cp[..., j, :] * y[..., j + 1, :]
        out = np.fft.irfftn(y, s=self.tshape, axes=tuple(range(nt)))
        return out.reshape(R.shape)


class PCGSolver(_Base):
    """Batched preconditioned conjugate gradients.

    Parameters
    ----------
    A : sparse matrix
        Symmetric positive definite system matrix.
    preconditioner : callable
        Maps a residual block ``(N, k)`` to the preconditioned block.
    rtol : float
        Relative residual target per column.
    maxiter : int
        Iteration cap.
    """

    def __init__(self, A, preconditioner, rtol: float = 1e-10, maxiter: int = 500, chunk: int = 64):
        self.A = sps.csr_matrix(A)
        self.M = preconditioner
        self.rtol = rtol
        self.maxiter = maxiter
        self.chunk = chunk
        self.iterations = []

    def _solve_block(self, B):
        A, M = self.A, self.M
        X = np.zeros_like(B)
        R = B.copy()
        bn = np.linalg.norm(B, axis=0)
        bn[bn == 0] = 1.0
        Z = M(R)
        P = Z.copy()
        rz = np.einsum("ij,ij->j", R, Z)
        active = np.linalg.norm(R, axis=0) / bn > 0.1 * self.rtol
        for it in range(1, self.maxiter + 1):
            AP = A @ P
            pap = np.einsum("ij,ij->j", P, AP)
            if np.any(pap[active] <= 0):
                raise EigenvalueObstructionError("operator is not positive definite on the interior", None)
            alpha = np.where(active, rz / np.where(active, pap, 1.0), 0.0)
            X += alpha * P
            R -= alpha * AP
            rel = np.linalg.norm(R, axis=0) / bn
            active = rel > 0.1 * self.rtol
            if not active.any():
                self.iterations.append(it)
                return X
            Z = M(R)
            rz_new = np.einsum("ij,ij->j", R, Z)
            beta = np.where(active, rz_new / np.where(rz != 0, rz, 1.0), 0.0)
            P = Z + beta * P
            rz = rz_new
        raise SolverError(f"PCG did not converge in {self.maxiter} iterations (residual {rel.max():.2e})")

    def solve(self, b):
        B, vec = _as_columns(b)
        out = np.empty_like(B)
        worst = 0.0
        for s in range(0, B.shape[1], self.chunk):
            blk = B[:, s : s + self.chunk]
            out[:, s : s + self.chunk] = X = self._solve_block(blk)
            worst = max(worst, self.check_residual(X, blk))
        self.last_residual = worst
        return out[:, 0] if vec else out
