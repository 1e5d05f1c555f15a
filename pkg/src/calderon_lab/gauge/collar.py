"""Conformal factors built from finite normal jets near the faces.

The factor is ``c = exp(2 mu)`` with

    mu(x', x_n) = sum_face chi(s / w) sum_j b_j(x') s^j / j!,

where ``s`` is the slab distance to the face (``x_n`` or ``1 - x_n``).
``chi`` is a smooth cutoff equal to one on ``[0, 1/2]`` and zero beyond 1.
The coefficients ``b_j`` are smooth functions of the tangential variables.
They are stored as truncated Fourier series, so they can be evaluated and
differentiated exactly at arbitrary points, e.g. along geodesics that
drift tangentially.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
import sympy as sp

from ..geometry.fields import ConformalFactor


# ------------------------------------------------------------------ series
@dataclass
class TangentialFourier:
    """Real trigonometric polynomial on the torus ``T^d``.

    Attributes
    ----------
    coeffs : ndarray, complex, shape (2K+1,)*d
        Coefficients for frequencies ``-K..K`` along every axis.
    K : int
    """

    coeffs: np.ndarray
    K: int

    @classmethod
    def fit(cls, values: np.ndarray, K: int | None = None) -> "TangentialFourier":
        """Fit nodal values on the uniform lattice ``(i / M)``, truncating to ``|k_a| <= K``."""
        values = np.asarray(values, dtype=float)
        M = values.shape[0]
        d = values.ndim
        if K is None:
            K = M // 2 - 1
        if 2 * K + 1 > M:
            raise ValueError(f"K = {K} needs at least {2 * K + 1} samples per axis, got {M}")
        C = np.fft.fftn(values) / values.size
        idx = np.r_[0 : K + 1, M - K : M] if K > 0 else np.array([0])
        C = C[np.ix_(*[idx] * d)]
        order = np.argsort(np.r_[0 : K + 1, -K:0]) if K > 0 else np.array([0])
        C = C[np.ix_(*[order] * d)]
        return cls(C, K)

    @classmethod
    def zero(cls, d: int) -> "TangentialFourier":
        return cls(np.zeros((1,) * d, dtype=complex), 0)

    @property
    def dim(self) -> int:
        return self.coeffs.ndim

    def _contract(self, Y: np.ndarray, orders) -> np.ndarray:
        k = np.arange(-self.K, self.K + 1)
        T = self.coeffs
        for a in range(self.dim):
            E = np.exp(2j * np.pi * Y[:, a, None] * k[None, :]) * (2j * np.pi * k[None, :]) ** orders[a]
            T = np.einsum("pk,k...->p...", E, T) if a == 0 else np.einsum("pk,pk...->p...", E, T)
        return T.real

    def evaluate(self, Y: np.ndarray, order: int = 0):
        """Value, gradient ``(P, d)`` and Hessian ``(P, d, d)`` at points ``Y`` of shape ``(P, d)``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        d = self.dim
        res = [self._contract(Y, [0] * d)]
        if order >= 1:
            res.append(np.stack([self._contract(Y, np.eye(d, dtype=int)[a]) for a in range(d)], axis=-1))
        if order >= 2:
            H = np.empty((Y.shape[0], d, d))
            for a in range(d):
                for b in range(a, d):
                    o = np.zeros(d, dtype=int)
                    o[a] += 1
                    o[b] += 1
                    H[:, a, b] = H[:, b, a] = self._contract(Y, o)
            res.append(H)
        return tuple(res)

    def __call__(self, Y):
        return self.evaluate(Y, 0)[0]


# ------------------------------------------------------------------ cutoff
def _cutoff_functions():
    u = sp.symbols("u", positive=True)
    tau = 2 * u - 1
    f = lambda t: sp.exp(-1 / t)  # noqa: E731
    chi = f(1 - tau) / (f(1 - tau) + f(tau))
    return [sp.lambdify(u, e, "numpy") for e in (chi, sp.diff(chi, u), sp.diff(chi, u, 2))]


_CUTOFF = _cutoff_functions()


def smooth_cutoff(u: np.ndarray, order: int = 0):
    """Cutoff ``chi(u)`` (one for ``u <= 1/2``, zero for ``u >= 1``) and derivatives."""
    u = np.asarray(u, dtype=float)
    inside = (u > 0.5) & (u < 1.0)
    uc = np.where(inside, u, 0.75)
    out = []
    for k in range(order + 1):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            val = np.nan_to_num(_CUTOFF[k](uc), nan=0.0, posinf=0.0, neginf=0.0)
        base = (u <= 0.5).astype(float) if k == 0 else np.zeros_like(u)
        out.append(np.where(inside, val, base))
    return tuple(out)


# ------------------------------------------------------------------ factor
@dataclass
class FaceJets:
    """Slab-coordinate coefficients ``b_j`` of ``mu`` at one face (``j >= 2``)."""

    face: int
    series: dict = field(default_factory=dict)  # j -> TangentialFourier


class CollarFactor(ConformalFactor):
    """``c = exp(2 mu)`` with ``mu`` a cut-off polynomial in the distance to each face.

    Parameters
    ----------
    n : int
        Dimension.
    faces : list of FaceJets
        Coefficients ``b_j`` per face.  ``j = 0, 1`` are never present, so
        the gauge conditions ``c = 1`` and ``d_n c = 0`` hold exactly.
    width : float
        Cutoff width ``w``; ``mu`` vanishes for ``s >= w``.
    """

    def __init__(self, n: int, faces, width: float = 0.25, name: str = "collar"):
        self.n = n
        self.faces = list(faces)
        self.width = float(width)
        self.name = name
        for fj in self.faces:
            if any(j < 2 for j in fj.series):
                raise ValueError("collar coefficients must start at order 2")

    def _mu_derivatives(self, X, order):
        X = np.asarray(X, dtype=float)
        lead = X.shape[:-1]
        Xf = X.reshape(-1, self.n)
        P = Xf.shape[0]
        d = self.n - 1
        mu = np.zeros(P)
        dmu = np.zeros((P, self.n))
        ddmu = np.zeros((P, self.n, self.n))
        w = self.width
        for fj in self.faces:
            sgn = 1.0 if fj.face == 0 else -1.0
            s = Xf[:, -1] if fj.face == 0 else 1.0 - Xf[:, -1]
            near = s < w
            if not np.any(near) or not fj.series:
                continue
            Y = Xf[near, :d]
            sn = s[near]
            p = np.zeros((near.sum(), 3))  # P, P_s, P_ss
            pa = np.zeros((near.sum(), 2, d))  # P_a, P_as
            pab = np.zeros((near.sum(), d, d))
            for j, ser in fj.series.items():
                b = ser.evaluate(Y, min(order, 2))
                fj0 = sn ** j / factorial(j)
                fj1 = sn ** (j - 1) / factorial(j - 1)
                fj2 = sn ** (j - 2) / factorial(j - 2)
                p[:, 0] += b[0] * fj0
                p[:, 1] += b[0] * fj1
                p[:, 2] += b[0] * fj2
                if order >= 1:
                    pa[:, 0] += b[1] * fj0[:, None]
                    pa[:, 1] += b[1] * fj1[:, None]
                if order >= 2:
                    pab += b[2] * fj0[:, None, None]
            chi = smooth_cutoff(sn / w, 2)
            c0, c1, c2 = chi[0], chi[1] / w, chi[2] / w ** 2
            m0 = c0 * p[:, 0]
            mu[near] += m0
            if order >= 1:
                g = np.zeros((near.sum(), self.n))
                g[:, :d] = c0[:, None] * pa[:, 0]
                g[:, -1] = sgn * (c1 * p[:, 0] + c0 * p[:, 1])
                dmu[near] += g
            if order >= 2:
                h = np.zeros((near.sum(), self.n, self.n))
                h[:, :d, :d] = c0[:, None, None] * pab
                mix = sgn * (c1[:, None] * pa[:, 0] + c0[:, None] * pa[:, 1])
                h[:, :d, -1] = mix
                h[:, -1, :d] = mix
                h[:, -1, -1] = c2 * p[:, 0] + 2 * c1 * p[:, 1] + c0 * p[:, 2]
                ddmu[near] += h
        return mu.reshape(lead), dmu.reshape(lead + (self.n,)), ddmu.reshape(lead + (self.n, self.n))

    def mu(self, X):
        return self._mu_derivatives(X, 0)[0]

    def evaluate(self, X, order: int = 0):
        mu, dmu, ddmu = self._mu_derivatives(X, order)
        c = np.exp(2 * mu)
        res = [c]
        if order >= 1:
            res.append(2 * c[..., None] * dmu)
        if order >= 2:
            res.append(c[..., None, None] * (4 * dmu[..., :, None] * dmu[..., None, :] + 2 * ddmu))
        return tuple(res)

    def with_coefficient(self, face: int, j: int, series: TangentialFourier) -> "CollarFactor":
        """Copy with the order-``j`` coefficient on ``face`` replaced."""
        faces = []
        found = False
        for fj in self.faces:
            new = dict(fj.series)
            if fj.face == face:
                new[j] = series
                found = True
            faces.append(FaceJets(fj.face, new))
        if not found:
            faces.append(FaceJets(face, {j: series}))
        return CollarFactor(self.n, faces, self.width, self.name)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "width": self.width,
            "orders": {str(fj.face): sorted(fj.series) for fj in self.faces},
        }
