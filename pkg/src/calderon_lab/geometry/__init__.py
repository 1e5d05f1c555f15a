"""Grid, metric fields and curvature on the slab ``T^(n-1) x [0, 1]``."""

from .curvature import (
    area_density,
    christoffel,
    christoffel_derivative,
    christoffel_from_derivatives,
    conformal_coefficient,
    conformal_potential,
    inward_unit_normal,
    ricci_tensor,
    scalar_curvature,
    scalar_curvature_at,
)
from .fields import (
    ConformalFactor,
    DiffeoField,
    GaugeFlags,
    MetricField,
    PulledBackMetric,
    SampledMetric,
    ScaledMetric,
    SymbolicConformalFactor,
    SymbolicDiffeo,
    SymbolicMetric,
    compose_symbolic,
    conformal_rescale,
    coordinate_symbols,
    induced_boundary_metric,
    pullback_metric,
)
from .grid import Grid
from .interp import GridInterpolator
from .patch import Patch
from .pairs import ConformalPair, constructed_pair, first_order_perturbation
from .presets import diffeo_preset, factor_preset, metric_preset

__all__ = [
    "Grid",
    "GridInterpolator",
    "Patch",
    "MetricField",
    "SymbolicMetric",
    "ScaledMetric",
    "PulledBackMetric",
    "SampledMetric",
    "ConformalFactor",
    "SymbolicConformalFactor",
    "GaugeFlags",
    "DiffeoField",
    "SymbolicDiffeo",
    "compose_symbolic",
    "conformal_rescale",
    "pullback_metric",
    "induced_boundary_metric",
    "coordinate_symbols",
    "christoffel",
    "christoffel_from_derivatives",
    "christoffel_derivative",
    "ricci_tensor",
    "scalar_curvature",
    "scalar_curvature_at",
    "conformal_coefficient",
    "conformal_potential",
    "inward_unit_normal",
    "area_density",
    "metric_preset",
    "factor_preset",
    "diffeo_preset",
    "ConformalPair",
    "constructed_pair",
    "first_order_perturbation",
]
