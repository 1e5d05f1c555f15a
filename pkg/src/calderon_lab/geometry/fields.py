"""Metric tensors, conformal factors and diffeomorphisms on the slab.

Every field evaluates vectorised at arrays of points ``X`` of shape
``(..., n)``.  Derivative arrays put derivative indices first:
``dg[..., k, i, j] = d_k g_ij`` and ``ddg[..., k, l, i, j] = d_k d_l g_ij``.

Fields defined by sympy expressions carry their expression so that
rescalings and pullbacks of symbolic fields stay exact to all orders.
Other fields fall back to product-rule or finite-difference derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy as sp

from ..errors import DiffeomorphismError, GeometryError
from .fd import gradient_field, hessian_field
from .interp import GridInterpolator


def coordinate_symbols(n: int):
    """Sympy symbols ``x0, ..., x{n-1}``; the last one is the normal coordinate."""
    return sp.symbols(f"x0:{n}", real=True)


class _Lambdified:
    """Vectorised evaluation of a list of sympy expressions."""

    def __init__(self, exprs, symbols):
        self.n = len(symbols)
        self._func = sp.lambdify(symbols, list(exprs), modules="numpy", cse=True)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = self._func(*[X[..., k] for k in range(self.n)])
        shape = X.shape[:-1]
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in out], axis=-1)


def _pairs(n):
    return [(i, j) for i in range(n) for j in range(i, n)]


def metric_inverse(g: np.ndarray):
    """Inverse and determinant of a stack of matrices."""
    return np.linalg.inv(g), np.linalg.det(g)


# ============================================================== metrics
class MetricField:
    """Smooth symmetric positive definite tensor field on the slab.

    Subclasses implement :meth:`evaluate`.
    """

    n: int
    name: str = "metric"
    periodic: bool = True

    def evaluate(self, X: np.ndarray, order: int = 0):
        """Metric and its first ``order`` derivative arrays at points ``X``."""
        raise NotImplementedError

    def __call__(self, X):
        return self.evaluate(X, 0)[0]

    @property
    def is_symbolic(self) -> bool:
        return False

    def sample(self, grid) -> np.ndarray:
        return self(grid.coords)

    def check_spd(self, grid, tol: float = 1e-12):
        """Raise :class:`GeometryError` at the first node where g is not SPD."""
        g = self.sample(grid)
        asym = np.abs(g - np.swapaxes(g, -1, -2)).max(axis=(-1, -2))
        if np.any(asym > 1e-10):
            node = np.unravel_index(int(np.argmax(asym)), asym.shape)
            raise GeometryError("metric tensor is not symmetric", tuple(int(i) for i in node))
        eig = np.linalg.eigvalsh(g)[..., 0]
        if np.any(~np.isfinite(eig)) or np.any(eig <= tol):
            bad = np.where(~np.isfinite(eig), -np.inf, eig)
            node = np.unravel_index(int(np.argmin(bad)), eig.shape)
            raise GeometryError(f"metric not positive definite (min eigenvalue {bad[node]:.3e})", tuple(int(i) for i in node))
        return float(eig.min())

    def describe(self) -> dict:
        return {"name": self.name}


class SymbolicMetric(MetricField):
    """Metric given by a sympy matrix in the coordinates of :func:`coordinate_symbols`.

    Parameters
    ----------
    matrix : sympy.Matrix
        Symmetric ``n x n`` matrix of expressions.
    name : str
        Label used in reports.
    periodic : bool
        Whether the expression is periodic in the tangential coordinates.
    """

    def __init__(self, matrix, name: str = "symbolic", periodic: bool = True, params: dict | None = None):
        self.expr = sp.Matrix(matrix)
        self.n = self.expr.shape[0]
        if self.expr.shape != (self.n, self.n):
            raise GeometryError(f"metric matrix must be square, got {self.expr.shape}")
        self.symbols = coordinate_symbols(self.n)
        self._check_symmetric()
        self.name = name
        self.periodic = periodic
        self.params = dict(params or {})
        self._evals = {}

    @property
    def is_symbolic(self) -> bool:
        return True

    def _check_symmetric(self):
        """Structural comparison, falling back to evaluation at random points."""
        skew = [self.expr[i, j] - self.expr[j, i] for i, j in _pairs(self.n) if i != j]
        skew = [e for e in skew if e != 0]
        if not skew:
            return
        X = np.random.default_rng(0).uniform(size=(8, self.n))
        if np.abs(_Lambdified(skew, self.symbols)(X)).max() > 1e-12:
            raise GeometryError("metric matrix is not symmetric")

    def _evaluator(self, order: int):
        if order not in self._evals:
            x = self.symbols
            pairs = _pairs(self.n)
            if order == 0:
                exprs = [self.expr[i, j] for i, j in pairs]
            elif order == 1:
                exprs = [sp.diff(self.expr[i, j], x[k]) for k in range(self.n) for i, j in pairs]
            else:
                exprs = [
                    sp.diff(self.expr[i, j], x[k], x[l])
                    for k in range(self.n)
                    for l in range(k, self.n)
                    for i, j in pairs
                ]
            self._evals[order] = _Lambdified(exprs, x)
        return self._evals[order]

    def _unpack(self, flat, lead, nder):
        n = self.n
        pairs = _pairs(n)
        p = len(pairs)
        out = np.empty(lead + nder + (n, n))
        flat = flat.reshape(lead + (-1, p))
        for c, (i, j) in enumerate(pairs):
            out[..., i, j] = out[..., j, i] = flat[..., c].reshape(lead + nder)
        return out

    def evaluate(self, X, order: int = 0):
        X = np.asarray(X, dtype=float)
        lead = X.shape[:-1]
        n = self.n
        res = [self._unpack(self._evaluator(0)(X), lead, ())]
        if order >= 1:
            res.append(self._unpack(self._evaluator(1)(X), lead, (n,)))
        if order >= 2:
            flat = self._evaluator(2)(X)
            p = n * (n + 1) // 2
            flat = flat.reshape(lead + (-1, p))
            full = np.empty(lead + (n, n, p))
            c = 0
            for k in range(n):
                for l in range(k, n):
                    full[..., k, l, :] = full[..., l, k, :] = flat[..., c, :]
                    c += 1
            res.append(self._unpack(full, lead, (n, n)))
        return tuple(res)

    def describe(self) -> dict:
        return {"name": self.name, "params": self.params}


class ScaledMetric(MetricField):
    """Numerical conformal rescaling ``c * g`` (product-rule derivatives)."""

    def __init__(self, metric: MetricField, factor: "ConformalFactor"):
        self.base, self.factor = metric, factor
        self.n = metric.n
        self.name = f"{factor.name}*{metric.name}"
        self.periodic = metric.periodic

    def evaluate(self, X, order: int = 0):
        gs = self.base.evaluate(X, order)
        cs = self.factor.evaluate(X, order)
        c = cs[0][..., None, None]
        res = [c * gs[0]]
        if order >= 1:
            dc = cs[1][..., :, None, None]
            res.append(dc * gs[0][..., None, :, :] + c[..., None, :, :] * gs[1])
        if order >= 2:
            ddc = cs[2][..., :, :, None, None]
            dc = cs[1]
            cross = dc[..., :, None, None, None] * gs[1][..., None, :, :, :]
            res.append(
                ddc * gs[0][..., None, None, :, :]
                + cross
                + np.swapaxes(cross, -3, -4)
                + cs[0][..., None, None, None, None] * gs[2]
            )
        return tuple(res)

    def describe(self) -> dict:
        return {"name": self.name, "base": self.base.describe(), "factor": self.factor.describe()}


class PulledBackMetric(MetricField):
    """Numerical pullback ``F^* g`` using derivatives of ``F`` up to order three."""

    def __init__(self, metric: MetricField, diffeo: "DiffeoField"):
        self.base, self.diffeo = metric, diffeo
        self.n = metric.n
        self.name = f"pullback({metric.name},{diffeo.name})"

    def evaluate(self, X, order: int = 0):
        Fs = self.diffeo.evaluate(X, order + 1)
        Y, A = Fs[0], Fs[1]
        G = self.base.evaluate(Y, order)
        res = [np.einsum("...ai,...bj,...ab->...ij", A, A, G[0])]
        if order >= 1:
            B = Fs[2]
            dG = np.einsum("...cab,...ck->...kab", G[1], A)  # d_k of G(F(x))
            t = np.einsum("...aik,...bj,...ab->...kij", B, A, G[0])
            res.append(t + np.swapaxes(t, -1, -2) + np.einsum("...ai,...bj,...kab->...kij", A, A, dG))
        if order >= 2:
            C = Fs[3]
            ddG = np.einsum("...cdab,...ck,...dl->...klab", G[2], A, A) + np.einsum("...cab,...ckl->...klab", G[1], B)
            t1 = np.einsum("...aikl,...bj,...ab->...klij", C, A, G[0])
            t2 = np.einsum("...aik,...bjl,...ab->...klij", B, B, G[0])
            t3 = np.einsum("...aik,...bj,...lab->...klij", B, A, dG)
            sym = lambda T: T + np.swapaxes(T, -1, -2)  # noqa: E731
            t3l = np.swapaxes(t3, -3, -4)
            res.append(sym(t1) + sym(t2) + sym(t3) + sym(t3l) + np.einsum("...ai,...bj,...klab->...klij", A, A, ddG))
        return tuple(res)


class SampledMetric(MetricField):
    """Metric known only at grid nodes.

    Derivatives come from fourth-order finite differences and point
    evaluation uses tensor-product cubic interpolation of the value and
    derivative fields.
    """

    def __init__(self, grid, samples: np.ndarray, name: str = "sampled"):
        samples = np.asarray(samples, dtype=float)
        if samples.shape != grid.shape + (grid.n, grid.n):
            raise GeometryError(f"samples must have shape {grid.shape + (grid.n, grid.n)}, got {samples.shape}")
        self.grid = grid
        self.n = grid.n
        self.name = name
        self.values = 0.5 * (samples + np.swapaxes(samples, -1, -2))
        self._interp = GridInterpolator.for_grid(grid)

    @cached_property
    def first(self):
        return gradient_field(self.values, self.n, self.grid.h_t, self.grid.h_n)

    @cached_property
    def second(self):
        return hessian_field(self.values, self.n, self.grid.h_t, self.grid.h_n)

    def evaluate(self, X, order: int = 0):
        fields = [self.values, self.first, self.second][: order + 1]
        return tuple(self._interp(f, X) for f in fields)


def conformal_rescale(metric: MetricField, factor: "ConformalFactor") -> MetricField:
    """The metric ``c * g``; exact when both inputs are symbolic."""
    if metric.is_symbolic and factor.is_symbolic:
        c = sp.exp(2 * factor.mu_expr)
        return SymbolicMetric(c * metric.expr, name=f"{factor.name}*{metric.name}", periodic=metric.periodic)
    return ScaledMetric(metric, factor)


def pullback_metric(metric: MetricField, diffeo: "DiffeoField") -> MetricField:
    """The pullback ``F^* g``; exact when both inputs are symbolic."""
    if metric.is_symbolic and diffeo.is_symbolic:
        x = metric.symbols
        sub = dict(zip(x, diffeo.exprs))
        J = sp.Matrix(diffeo.exprs).jacobian(sp.Matrix(x))
        G = metric.expr.subs(sub, simultaneous=True)
        return SymbolicMetric(J.T * G * J, name=f"pullback({metric.name},{diffeo.name})", periodic=metric.periodic)
    return PulledBackMetric(metric, diffeo)


def induced_boundary_metric(metric: MetricField, grid, face: int = 0) -> np.ndarray:
    """Tangential block of ``g`` on a face, shape ``tangential_shape + (n-1, n-1)``."""
    g = metric(grid.face_coords(face))
    return g[..., :-1, :-1]


# ====================================================== conformal factors
@dataclass(frozen=True)
class GaugeFlags:
    """Boundary gauge conditions of a conformal factor, checked on a grid."""

    unit_on_boundary: bool
    flat_normal_derivative: bool
    max_value_deviation: float
    max_normal_derivative: float

    @property
    def gauge_conditioned(self) -> bool:
        return self.unit_on_boundary and self.flat_normal_derivative


class ConformalFactor:
    """Positive smooth function ``c = exp(2 mu)``."""

    name: str = "factor"
    n: int

    @property
    def is_symbolic(self) -> bool:
        return False

    def evaluate(self, X, order: int = 0):
        """``c`` followed by gradient ``(..., n)`` and Hessian ``(..., n, n)``."""
        raise NotImplementedError

    def __call__(self, X):
        return self.evaluate(X, 0)[0]

    def mu(self, X):
        return 0.5 * np.log(self(X))

    def gauge_flags(self, grid, tol: float = 1e-10) -> GaugeFlags:
        dev, der = 0.0, 0.0
        for face in (0, 1):
            c, dc = self.evaluate(grid.face_coords(face), 1)
            dev = max(dev, float(np.abs(c - 1).max()))
            der = max(der, float(np.abs(dc[..., -1]).max()))
        return GaugeFlags(dev <= tol, der <= tol, dev, der)

    def describe(self) -> dict:
        return {"name": self.name}


class SymbolicConformalFactor(ConformalFactor):
    """``c = exp(2 mu)`` with ``mu`` a sympy expression."""

    def __init__(self, mu_expr, n: int, name: str = "factor", params: dict | None = None):
        self.n = n
        self.symbols = coordinate_symbols(n)
        self.mu_expr = sp.sympify(mu_expr)
        self.name = name
        self.params = dict(params or {})
        c = sp.exp(2 * self.mu_expr)
        x = self.symbols
        grad = [sp.diff(c, x[k]) for k in range(n)]
        hess = [sp.diff(c, x[k], x[l]) for k in range(n) for l in range(n)]
        self._f = [_Lambdified([c], x), _Lambdified(grad, x), _Lambdified(hess, x)]
        self._mu = _Lambdified([self.mu_expr], x)

    @property
    def is_symbolic(self) -> bool:
        return True

    def evaluate(self, X, order: int = 0):
        X = np.asarray(X, dtype=float)
        lead = X.shape[:-1]
        res = [self._f[0](X)[..., 0]]
        if order >= 1:
            res.append(self._f[1](X))
        if order >= 2:
            res.append(self._f[2](X).reshape(lead + (self.n, self.n)))
        return tuple(res)

    def mu(self, X):
        return self._mu(X)[..., 0]

    def power_expr(self, p):
        return sp.exp(2 * p * self.mu_expr)

    def describe(self) -> dict:
        return {"name": self.name, "params": self.params}


# ========================================================= diffeomorphisms
class DiffeoField:
    """Smooth map of the slab into itself, periodic-compatible tangentially."""

    name: str = "diffeo"
    n: int

    @property
    def is_symbolic(self) -> bool:
        return False

    def evaluate(self, X, order: int = 0):
        """``F`` followed by ``DF[..., a, i] = d_i F^a`` and higher derivative arrays."""
        raise NotImplementedError

    def __call__(self, X):
        return self.evaluate(X, 0)[0]

    def inverse(self, Y: np.ndarray, tol: float = 1e-13, maxiter: int = 60) -> np.ndarray:
        """Solve ``F(x) = Y`` by Newton iteration started at ``Y``."""
        Y = np.asarray(Y, dtype=float)
        x = Y.copy()
        for _ in range(maxiter):
            F, DF = self.evaluate(x, 1)
            r = F - Y
            if np.abs(r).max() < tol:
                return x
            x = x - np.linalg.solve(DF, r[..., None])[..., 0]
        raise DiffeomorphismError(f"inverse Newton iteration did not converge (residual {np.abs(r).max():.2e})")

    def check(self, grid, tol: float = 1e-12) -> dict:
        """Test the boundary-fixing property and positivity of the Jacobian.

        Raises
        ------
        DiffeomorphismError
            If ``det DF <= 0`` somewhere or the faces are moved.
        """
        X = grid.coords
        F, DF = self.evaluate(X, 1)
        det = np.linalg.det(DF)
        if np.any(det <= 0):
            node = np.unravel_index(int(np.argmin(det)), det.shape)
            raise DiffeomorphismError(f"Jacobian determinant not positive at node {node}")
        moved = 0.0
        for face in (0, 1):
            Xf = grid.face_coords(face)
            moved = max(moved, float(np.abs(self(Xf) - Xf).max()))
        if moved > tol:
            raise DiffeomorphismError(f"map is not boundary fixing (max displacement {moved:.2e})")
        return {"min_det": float(det.min()), "boundary_displacement": moved}


class SymbolicDiffeo(DiffeoField):
    """Diffeomorphism given by sympy component expressions."""

    def __init__(self, exprs, name: str = "diffeo", params: dict | None = None):
        self.exprs = [sp.sympify(e) for e in exprs]
        self.n = len(self.exprs)
        self.symbols = coordinate_symbols(self.n)
        self.name = name
        self.params = dict(params or {})
        self._evals = {}

    @property
    def is_symbolic(self) -> bool:
        return True

    def _evaluator(self, order):
        if order not in self._evals:
            x = self.symbols
            n = self.n
            if order == 0:
                ex = self.exprs
            else:
                ex = []
                for e in self.exprs:
                    for idx in np.ndindex(*(n,) * order):
                        ex.append(sp.diff(e, *[x[i] for i in idx]))
            self._evals[order] = _Lambdified(ex, x)
        return self._evals[order]

    def evaluate(self, X, order: int = 0):
        X = np.asarray(X, dtype=float)
        lead = X.shape[:-1]
        return tuple(self._evaluator(k)(X).reshape(lead + (self.n,) * (k + 1)) for k in range(order + 1))

    def describe(self) -> dict:
        return {"name": self.name, "params": self.params}


def compose_symbolic(outer: SymbolicDiffeo, inner: SymbolicDiffeo) -> SymbolicDiffeo:
    """The map ``outer o inner``."""
    sub = dict(zip(outer.symbols, inner.exprs))
    return SymbolicDiffeo([e.subs(sub, simultaneous=True) for e in outer.exprs], name=f"{outer.name}o{inner.name}")
