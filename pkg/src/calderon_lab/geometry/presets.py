"""Named metrics, conformal factors and diffeomorphisms used by scenarios and tests.

All presets are sympy-defined, periodic in the tangential coordinates
(except the sphere patch) and smooth up to both faces.
"""

from __future__ import annotations

import sympy as sp

from .fields import SymbolicConformalFactor, SymbolicDiffeo, SymbolicMetric, coordinate_symbols

TWO_PI = 2 * sp.pi


def _f(value):
    return sp.nsimplify(value, rational=True) if isinstance(value, (int, float)) else sp.sympify(value)


def flat(n: int = 3) -> SymbolicMetric:
    """The Euclidean metric."""
    return SymbolicMetric(sp.eye(n), name="flat")


def stretched(n: int = 3, scales=(2.0, 0.5)) -> SymbolicMetric:
    """Constant diagonal metric ``diag(a_1, ..., a_{n-1}, 1)``."""
    scales = list(scales) + [1.0] * (n - 1 - len(scales))
    diag = [_f(a) for a in scales[: n - 1]] + [sp.Integer(1)]
    return SymbolicMetric(sp.diag(*diag), name="stretched", params={"scales": list(scales[: n - 1])})


def conformal_flat(n: int = 3, amplitude: float = 0.15) -> SymbolicMetric:
    """``exp(2 phi) delta`` with a smooth periodic profile ``phi``."""
    x = coordinate_symbols(n)
    a = _f(amplitude)
    phi = a * sp.sin(TWO_PI * x[0]) * (1 + x[-1] / 2) + a / 2 * sp.cos(TWO_PI * x[1 % (n - 1)]) * x[-1] ** 2
    return SymbolicMetric(sp.exp(2 * phi) * sp.eye(n), name="conformal_flat", params={"amplitude": amplitude})


def tangential_wave(n: int = 3, amplitude: float = 0.1) -> SymbolicMetric:
    """Perturbation of the flat metric by periodic waves, with tangential-normal coupling."""
    x = coordinate_symbols(n)
    e = _f(amplitude)
    G = sp.eye(n)
    G[0, 0] = 1 + e * sp.sin(TWO_PI * x[1 % (n - 1)]) * (1 + x[-1])
    if n - 1 >= 2:
        G[1, 1] = 1 + e * sp.cos(TWO_PI * x[0]) * sp.cos(sp.pi * x[-1]) / 2
        G[0, 1] = G[1, 0] = e * sp.sin(TWO_PI * (x[0] + x[1])) / 3
    G[0, n - 1] = G[n - 1, 0] = e * sp.cos(TWO_PI * x[0]) * (1 + x[-1]) / 2
    G[n - 1, n - 1] = 1 + e * sp.sin(TWO_PI * x[0]) * sp.sin(TWO_PI * x[1 % (n - 1)]) / 2
    return SymbolicMetric(G, name="tangential_wave", params={"amplitude": amplitude})


def warped(n: int = 3, amplitude: float = 0.2) -> SymbolicMetric:
    """Block metric ``exp(2 f(x', x_n)) dx'^2 + dx_n^2`` (slab coordinates are boundary normal)."""
    x = coordinate_symbols(n)
    a = _f(amplitude)
    f = a * x[-1] * (1 + sp.sin(TWO_PI * x[0]) / 2) + a * x[-1] ** 2 * sp.cos(TWO_PI * x[1 % (n - 1)]) / 2
    G = sp.exp(2 * f) * sp.eye(n)
    G[n - 1, n - 1] = sp.Integer(1)
    return SymbolicMetric(G, name="warped", params={"amplitude": amplitude})


def exponential_warp(n: int = 3, rate: float = 1.0) -> SymbolicMetric:
    """``exp(2 r x_n) dx'^2 + dx_n^2``; the face ``x_n = 0`` has mean curvature ``(n-1) r``."""
    x = coordinate_symbols(n)
    r = _f(rate)
    G = sp.exp(2 * r * x[-1]) * sp.eye(n)
    G[n - 1, n - 1] = sp.Integer(1)
    return SymbolicMetric(G, name="exponential_warp", params={"rate": rate})


def collar_jet(n: int = 3, slope: float = 0.6) -> SymbolicMetric:
    """``exp(a x_n^2/(n-1)) dx'^2 + dx_n^2``: zero mean curvature on face 0 and normal derivative ``a``."""
    x = coordinate_symbols(n)
    a = _f(slope)
    G = sp.exp(a * x[-1] ** 2 / (n - 1)) * sp.eye(n)
    G[n - 1, n - 1] = sp.Integer(1)
    return SymbolicMetric(G, name="collar_jet", params={"slope": slope})


def sphere_patch(n: int = 3, radius: float = 1.0) -> SymbolicMetric:
    """Round sphere of the given radius in stereographic coordinates (not periodic)."""
    x = coordinate_symbols(n)
    R = _f(radius)
    r2 = sum(xi ** 2 for xi in x)
    G = (4 * R ** 4 / (R ** 2 + r2) ** 2) * sp.eye(n)
    return SymbolicMetric(G, name="sphere_patch", periodic=False, params={"radius": radius})


METRIC_PRESETS = {
    "flat": flat,
    "stretched": stretched,
    "conformal_flat": conformal_flat,
    "tangential_wave": tangential_wave,
    "warped": warped,
    "exponential_warp": exponential_warp,
    "collar_jet": collar_jet,
    "sphere_patch": sphere_patch,
}


def metric_preset(name: str, n: int = 3, **params) -> SymbolicMetric:
    try:
        factory = METRIC_PRESETS[name]
    except KeyError as exc:
        raise KeyError(f"unknown metric preset {name!r}; choose from {sorted(METRIC_PRESETS)}") from exc
    return factory(n, **params)


# ---------------------------------------------------------------- factors
def gauge_bump(n: int = 3, amplitude: float = 1.0, mode: int = 1) -> SymbolicConformalFactor:
    """``mu = A x_n^2 (1-x_n)^2 sin(2 pi k x^1)``: ``c = 1`` and ``d_nu c = 0`` on both faces."""
    x = coordinate_symbols(n)
    t = x[-1]
    mu = _f(amplitude) * t ** 2 * (1 - t) ** 2 * sp.sin(TWO_PI * mode * x[0])
    return SymbolicConformalFactor(mu, n, name="gauge_bump", params={"amplitude": amplitude, "mode": mode})


def gauge_smooth(n: int = 3, amplitude: float = 0.8) -> SymbolicConformalFactor:
    """Gauge-conditioned factor with tangential dependence in every direction."""
    x = coordinate_symbols(n)
    t = x[-1]
    wave = 1 + sp.sin(TWO_PI * x[0]) / 2 + sp.cos(TWO_PI * x[1 % (n - 1)]) / 3
    mu = _f(amplitude) * t ** 2 * (1 - t) ** 2 * wave
    return SymbolicConformalFactor(mu, n, name="gauge_smooth", params={"amplitude": amplitude})


def gauge_violating(n: int = 3, amplitude: float = 0.5) -> SymbolicConformalFactor:
    """``mu = A x_n (1-x_n) sin(2 pi x^1)``: equal to one on the faces but ``d_nu c != 0``."""
    x = coordinate_symbols(n)
    t = x[-1]
    mu = _f(amplitude) * t * (1 - t) * sp.sin(TWO_PI * x[0])
    return SymbolicConformalFactor(mu, n, name="gauge_violating", params={"amplitude": amplitude})


def constant_factor(n: int = 3, value: float = 1.0) -> SymbolicConformalFactor:
    return SymbolicConformalFactor(sp.log(_f(value)) / 2, n, name="constant", params={"value": value})


FACTOR_PRESETS = {
    "gauge_bump": gauge_bump,
    "gauge_smooth": gauge_smooth,
    "gauge_violating": gauge_violating,
    "constant": constant_factor,
}


def factor_preset(name: str, n: int = 3, **params) -> SymbolicConformalFactor:
    try:
        factory = FACTOR_PRESETS[name]
    except KeyError as exc:
        raise KeyError(f"unknown conformal factor preset {name!r}; choose from {sorted(FACTOR_PRESETS)}") from exc
    return factory(n, **params)


# ----------------------------------------------------------- diffeomorphisms
def identity_map(n: int = 3) -> SymbolicDiffeo:
    return SymbolicDiffeo(list(coordinate_symbols(n)), name="identity")


def boundary_shear(n: int = 3, amplitude: float = 0.04, warp: float = 0.03) -> SymbolicDiffeo:
    """Boundary-fixing map: tangential shear ``eps sin^2(pi x_n) v(x')`` plus a normal warp."""
    x = coordinate_symbols(n)
    t = x[-1]
    e, w = _f(amplitude), _f(warp)
    bump = sp.sin(sp.pi * t) ** 2
    comps = []
    for a in range(n - 1):
        b = (a + 1) % (n - 1)
        comps.append(x[a] + e * bump * sp.sin(TWO_PI * x[b] + a))
    comps.append(t + w * t * (1 - t) * (1 + sp.sin(TWO_PI * x[0])))
    return SymbolicDiffeo(comps, name="boundary_shear", params={"amplitude": amplitude, "warp": warp})


def reflection(n: int = 3) -> SymbolicDiffeo:
    """``(x', x_n) -> (x', 1 - x_n)``, exchanging the two faces."""
    x = coordinate_symbols(n)
    return SymbolicDiffeo(list(x[:-1]) + [1 - x[-1]], name="reflection")


DIFFEO_PRESETS = {"identity": identity_map, "boundary_shear": boundary_shear}


def diffeo_preset(name: str, n: int = 3, **params) -> SymbolicDiffeo:
    try:
        factory = DIFFEO_PRESETS[name]
    except KeyError as exc:
        raise KeyError(f"unknown diffeomorphism preset {name!r}; choose from {sorted(DIFFEO_PRESETS)}") from exc
    return factory(n, **params)
