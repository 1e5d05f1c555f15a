"""Exception hierarchy shared by every module of the lab."""

from __future__ import annotations


class CalderonLabError(Exception):
    """Base class for all errors raised by the package."""


class GridError(CalderonLabError):
    """Invalid grid parameters (dimension, resolution, shapes)."""


class GeometryError(CalderonLabError):
    """A metric field is degenerate, not positive definite or badly shaped.

    Parameters
    ----------
    message : str
        Human readable description.
    node : tuple of int, optional
        Multi-index of the first offending node, when known.
    """

    def __init__(self, message: str, node: tuple | None = None):
        super().__init__(message if node is None else f"{message} (node {node})")
        self.node = node


class DiffeomorphismError(CalderonLabError):
    """A map fails to be a diffeomorphism or fails the boundary-fixing test."""


class EigenvalueObstructionError(CalderonLabError):
    """Zero is (numerically) a Dirichlet eigenvalue of the conformal Laplacian."""

    def __init__(self, message: str, estimate: float | None = None):
        super().__init__(message)
        self.estimate = estimate


class SolverError(CalderonLabError):
    """A linear solve did not reach the requested residual."""


class BasisError(CalderonLabError):
    """A boundary basis is rank deficient or otherwise unusable."""


class GaugeError(CalderonLabError):
    """Failures of the boundary normalization pipeline."""


class GaugeConditionError(GaugeError):
    """A conformal factor does not satisfy c = 1 and d_nu c = 0 on the boundary."""


class GeodesicError(GaugeError):
    """A normal geodesic left the slab or the collar before reaching the requested depth."""


class NormalizationError(GaugeError):
    """The measured affine slope of the normalization recursion is off."""


class ChartError(CalderonLabError):
    """Z-coordinate or boundary normal chart construction failed."""


class InjectivityError(ChartError):
    """A sampled coordinate map or embedding fails to be injective."""


class RungeError(CalderonLabError):
    """Runge approximation did not reach the requested residual."""


class ConditioningError(RungeError):
    """The damped least-squares system is numerically rank deficient.

    Parameters
    ----------
    message : str
        Description of the failure.
    singular_values : ndarray, optional
        Singular values of the design matrix, for diagnosis.
    """

    def __init__(self, message: str, singular_values=None):
        super().__init__(message)
        self.singular_values = singular_values


class ConfigError(CalderonLabError):
    """Scenario configuration did not validate."""


class ProximityError(CalderonLabError):
    """Sample points are too close to sources, probes or the boundary."""
