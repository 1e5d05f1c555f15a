"""Constructed metric pairs with equal Dirichlet-to-Neumann maps.

A pair is built as ``g1 = c * F^* g2``.  Here ``F`` is a boundary-fixing
diffeomorphism and ``c`` a gauge-conditioned conformal factor
(``c = 1`` and ``d_nu c = 0`` on both faces).  Equivalently,
``g2 = (F^{-1})^* (c^{-1} g1)``.  Written this way, neither metric needs
``F^{-1}`` in closed form.  ``g1`` is evaluated through the product and
chain rules from the exact derivatives of ``g2``, ``F`` and ``c``; it
agrees with the fully symbolic expression to rounding and is much
cheaper to set up.
"""

from __future__ import annotations

from dataclasses import dataclass

import sympy as sp

from .fields import (
    MetricField,
    PulledBackMetric,
    ScaledMetric,
    SymbolicConformalFactor,
    SymbolicDiffeo,
    SymbolicMetric,
    conformal_rescale,
    coordinate_symbols,
    pullback_metric,
)
from .presets import TWO_PI, diffeo_preset, factor_preset, metric_preset


@dataclass
class ConformalPair:
    """``g1 = c * F^* g2`` with known ``F`` and ``c``."""

    g1: MetricField
    g2: SymbolicMetric
    diffeo: SymbolicDiffeo
    factor: SymbolicConformalFactor

    def describe(self) -> dict:
        return {"g1": self.g1.name, "g2": self.g2.name, "diffeo": self.diffeo.describe(), "factor": self.factor.describe()}


def constructed_pair(n: int = 3, base: str = "tangential_wave", factor: str = "gauge_bump",
                     diffeo: str = "boundary_shear", base_params: dict | None = None,
                     factor_params: dict | None = None, diffeo_params: dict | None = None,
                     symbolic: bool = False, metric2: SymbolicMetric | None = None) -> ConformalPair:
    """Pair ``(g1, g2)`` with ``g2`` a named preset and ``g1 = c F^* g2``.

    Parameters
    ----------
    symbolic : bool
        Build ``g1`` as a sympy expression (slow to differentiate) instead
        of the chain-rule evaluation.
    metric2 : SymbolicMetric, optional
        Use this ``g2`` instead of the preset ``base``.
    """
    g2 = metric2 if metric2 is not None else metric_preset(base, n, **(base_params or {}))
    F = diffeo_preset(diffeo, n, **(diffeo_params or {}))
    c = factor_preset(factor, n, **(factor_params or {}))
    if symbolic:
        g1 = conformal_rescale(pullback_metric(g2, F), c)
    else:
        g1 = ScaledMetric(PulledBackMetric(g2, F), c)
    g1.name = f"{factor}*{diffeo}^*{g2.name}"
    return ConformalPair(g1, g2, F, c)


def first_order_perturbation(metric: SymbolicMetric, amplitude: float = 0.1) -> SymbolicMetric:
    """Add ``eps x_n (1 - x_n)(1 + sin(2 pi x^1)/2)`` to the tangential block.

    Boundary values are unchanged but the first normal jet is not, so the
    Dirichlet-to-Neumann map changes: this gives a negative control.
    """
    n = metric.n
    x = coordinate_symbols(n)
    t = x[-1]
    e = sp.nsimplify(amplitude, rational=True)
    bump = e * t * (1 - t) * (1 + sp.sin(TWO_PI * x[0]) / 2)
    G = sp.Matrix(metric.expr)
    for a in range(n - 1):
        G[a, a] = G[a, a] + bump
    return SymbolicMetric(G, name=f"{metric.name}+order1", periodic=metric.periodic,
                          params={"amplitude": amplitude})
