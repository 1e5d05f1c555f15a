"""Boundary normal coordinates, mean curvature, conformal normalization and jets."""

from .bnc import (
    BNChart,
    JetComparison,
    JetTable,
    boundary_normal_coordinates,
    compare_jets,
    determinant_normalize,
    face_lattice,
    mean_curvature_block,
    mean_curvature_profile,
    metric_jet,
)
from .collar import CollarFactor, FaceJets, TangentialFourier, smooth_cutoff
from .geodesics import GeodesicBundle, bnc_metric, flow_determinant, integrate, shoot_normal
from .normalization import (
    NormalizationResult,
    build_gauge_factor,
    conformal_normalization,
    derivative_relations,
    distance_relations,
    normalize_both_faces,
    random_test_function,
)

__all__ = [
    "BNChart",
    "JetTable",
    "JetComparison",
    "GeodesicBundle",
    "CollarFactor",
    "FaceJets",
    "TangentialFourier",
    "NormalizationResult",
    "boundary_normal_coordinates",
    "mean_curvature_profile",
    "mean_curvature_block",
    "metric_jet",
    "determinant_normalize",
    "compare_jets",
    "face_lattice",
    "smooth_cutoff",
    "shoot_normal",
    "integrate",
    "bnc_metric",
    "flow_determinant",
    "conformal_normalization",
    "build_gauge_factor",
    "normalize_both_faces",
    "derivative_relations",
    "distance_relations",
    "random_test_function",
]
