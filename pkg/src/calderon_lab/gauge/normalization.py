"""Conformal normalization of the boundary jets and spot checks of normal derivatives.

Normalization chooses the normal jets of ``mu`` (with ``mu = d_n mu = 0`` on
the face) so that the mean curvature ``H~`` of ``g~ = exp(2 mu) g``
satisfies ``d~_n^m H~ = 0`` at the face for ``1 <= m <= m_max``.

The lower-order remainder terms of the recursion are never written down.
At every order the residual is measured from two trial factors,
confirming that it is affine in the new coefficient with slope ``n - 1``,
and the coefficient is then solved for.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GaugeError, NormalizationError
from ..geometry.fd import one_sided_jets
from ..geometry.fields import ScaledMetric
from .bnc import BNChart, JetTable, face_lattice, mean_curvature_profile, metric_jet
from .collar import CollarFactor, FaceJets, TangentialFourier
from .geodesics import check_flow, shoot_normal


def _chart(metric, base, face, dt, steps):
    bundle = shoot_normal(metric, base.reshape(-1, metric.n), face, dt * steps, steps)
    check_flow(bundle)
    return BNChart(metric, face, base, dt * steps, steps, bundle)


def _normal_speed(metric, base):
    """``sqrt(g^nn)``: rate of change of the slab distance to the face along the normal geodesic."""
    g = metric(base)
    return np.sqrt(np.linalg.inv(g)[..., -1, -1])


@dataclass
class NormalizationResult:
    """Outcome of :func:`conformal_normalization` on one face.

    Attributes
    ----------
    table : JetTable
        Metric jets of the normalized metric and the ``mu`` jets (in the
        boundary normal coordinate of ``g``) on the base lattice.
    factor : CollarFactor
        Conformal factor realising the normalization on this face.
    pre, post : ndarray, shape (m_max,) + lattice
        ``d^j H|`` of ``g`` and ``d~^j H~|`` of the normalized metric, ``j = 1..m_max``.
    slopes : list of ndarray
        Measured affine slope per order (expected ``n - 1``).
    coefficients : dict
        Slab coefficients ``b_j`` (nodal values on the lattice).
    """

    face: int
    table: JetTable
    factor: CollarFactor
    pre: np.ndarray
    post: np.ndarray
    slopes: list
    coefficients: dict
    meta: dict = field(default_factory=dict)

    def reduction(self) -> np.ndarray:
        """``max|pre_j| / max|post_j|`` per order."""
        pre = np.abs(self.pre).reshape(len(self.pre), -1).max(axis=1)
        post = np.abs(self.post).reshape(len(self.post), -1).max(axis=1)
        return pre / np.maximum(post, 1e-300)

    def report(self) -> dict:
        return {
            "face": self.face,
            "pre": [float(np.abs(p).max()) for p in self.pre],
            "post": [float(np.abs(p).max()) for p in self.post],
            "reduction": [float(r) for r in self.reduction()],
            "slope_range": [[float(s.min()), float(s.max())] for s in self.slopes],
        }


def conformal_normalization(metric, m_max: int = 2, face: int = 0, resolution: int = 24,
                            K: int | None = None, width: float = 0.25, dt: float = 0.004,
                            npts: int | None = None, slope_tol: float = 0.1, reduction: float = 100.0,
                            trial: float = 1.0, floor: float = 1e-9) -> NormalizationResult:
    """Normalize the mean-curvature jets of ``metric`` at one face.

    Parameters
    ----------
    metric : MetricField
    m_max : int
        Highest order ``m`` with ``d~^m H~| = 0`` (sets ``d^{m+1} mu`` up to ``m_max + 1``).
    face : {0, 1}
    resolution : int
        Base lattice ``resolution^(n-1)`` on which coefficients are solved.
    K : int, optional
        Fourier truncation of the coefficients (default ``resolution // 2 - 1``).
    width : float
        Cutoff width of the resulting factor.
    dt, npts : float, int
        Sample spacing along geodesics and one-sided stencil width
        (default ``m_max + 5``).
    slope_tol : float
        Relative tolerance on the measured slope against ``n - 1``.
    reduction : float
        Required shrink factor of the residual after each correction.
    trial : float
        Amplitude of the trial coefficient used to measure the slope.
    floor : float
        Residuals below this value are treated as already normalized.

    Raises
    ------
    NormalizationError
        If the measured slope deviates from ``n - 1`` by more than
        ``slope_tol`` or a correction fails to shrink the residual.
    """
    n = metric.n
    npts = npts or m_max + 5
    steps = npts - 1
    K = resolution // 2 - 1 if K is None else K
    base = face_lattice(n, resolution, face)
    speed = _normal_speed(metric, base)

    def residuals(factor):
        g = metric if factor is None else ScaledMetric(metric, factor)
        chart = _chart(g, base, face, dt, steps)
        return _curvature_jets(mean_curvature_profile(chart), npts, m_max, dt), chart

    g_chart = _chart(metric, base, face, dt, steps)
    current = _curvature_jets(mean_curvature_profile(g_chart), npts, m_max, dt)
    pre = current[1:].copy()

    factor = CollarFactor(n, [FaceJets(face, {})], width, name=f"normalization_face{face}")
    coeffs = {}
    slopes = []
    final_chart = g_chart
    for m in range(1, m_max + 1):
        r0 = current[m]
        j = m + 1
        b_trial = trial / speed ** j
        ser_trial = TangentialFourier.fit(b_trial, K)
        kappa = ser_trial(base[..., :-1].reshape(-1, n - 1)).reshape(speed.shape) * speed ** j
        r1, _ = residuals(factor.with_coefficient(face, j, ser_trial))
        slope = (r1[m] - r0) / kappa
        dev = np.abs(slope / (n - 1) - 1).max()
        if dev > slope_tol:
            raise NormalizationError(
                f"measured slope at order {m} deviates from n-1 = {n - 1} by {100 * dev:.1f}%; "
                "collar too shallow or lattice too coarse"
            )
        slopes.append(slope)
        b = -r0 / slope / speed ** j
        coeffs[j] = b
        factor = factor.with_coefficient(face, j, TangentialFourier.fit(b, K))
        current, final_chart = residuals(factor)
        before = float(np.abs(r0).max())
        after = float(np.abs(current[m]).max())
        if before > floor and after > before / reduction:
            raise NormalizationError(
                f"correction at order {m} reduced the residual only from {before:.3e} to {after:.3e}"
            )
    post = current[1:]

    # mu jets along the normal geodesics of g
    X = g_chart.points()
    mu_samples = factor.mu(X)
    npts_mu = max(npts, m_max + 6)
    if X.shape[-2] < npts_mu:
        ext = _chart(metric, base, face, dt, npts_mu - 1)
        mu_samples = factor.mu(ext.points())
    mu_jets = np.moveaxis(one_sided_jets(mu_samples, dt, m_max + 1, npts_mu), -1, 0)
    mu_jets[:2] = 0.0
    mu_coeffs = np.zeros((m_max + 2,) + speed.shape)
    for j, b in coeffs.items():
        mu_coeffs[j] = b
    normalized = metric_jet(final_chart, order=m_max, npts=npts)
    table = JetTable(
        order=m_max,
        metric_jets=normalized.metric_jets,
        mu_jets=mu_jets,
        h=1.0 / resolution,
        face=face,
        meta={"dt": dt, "npts": npts, "K": K, "width": width, "mu_coefficients": mu_coeffs,
              "metric": getattr(metric, "name", "metric")},
    )
    return NormalizationResult(face, table, factor, pre, post, slopes, coeffs,
                               {"resolution": resolution, "K": K, "dt": dt, "npts": npts})


def _curvature_jets(H, npts, m_max, dt):
    """``d_t^j H`` at ``t = 0`` for ``j = 0..m_max``, order axis first."""
    return np.moveaxis(one_sided_jets(H, dt, m_max, npts), -1, 0)


def build_gauge_factor(tables, width: float = 0.25, K: int | None = None, name: str = "gauge") -> CollarFactor:
    """Cut-off polynomial factor from ``mu`` jet tables (one per face).

    ``mu = chi(s / w) sum_{j >= 2} b_j(x') s^j / j!`` with ``s`` the slab
    distance to the face.  The slab coefficients stored by
    :func:`conformal_normalization` are used when present.  Otherwise the
    table's ``mu`` jets are taken as slab coefficients, which is exact when
    the slab coordinates are boundary normal.  Orders 0 and 1 are zero, so
    ``c = 1`` and ``d_n c = 0`` on the faces exactly.
    """
    if isinstance(tables, JetTable):
        tables = [tables]
    faces = []
    for tab in tables:
        coeffs = tab.meta.get("mu_coefficients", tab.mu_jets)
        if coeffs is None:
            raise GaugeError("jet table carries no mu jets")
        M = coeffs.shape[1]
        Kf = M // 2 - 1 if K is None else K
        series = {j: TangentialFourier.fit(coeffs[j], Kf) for j in range(2, coeffs.shape[0]) if np.any(coeffs[j] != 0)}
        faces.append(FaceJets(tab.face, series))
    return CollarFactor(tables[0].metric_jets.shape[-1] + 1, faces, width, name=name)


def normalize_both_faces(metric, m_max: int = 2, width: float = 0.25, **kw):
    """Normalize each face independently and combine the two factors.

    Returns
    -------
    factor : CollarFactor
    results : list of NormalizationResult
    """
    results = [conformal_normalization(metric, m_max, face=f, width=width, **kw) for f in (0, 1)]
    return build_gauge_factor([r.table for r in results], width=width, K=results[0].meta["K"]), results


# ------------------------------------------------------------ spot checks
def random_test_function(n: int, seed: int = 0, terms: int = 4):
    """Smooth periodic test function ``f(x) = sum a_i sin(2 pi k_i . x' + b_i x_n + phi_i)``."""
    rng = np.random.default_rng(seed)
    k = rng.integers(-2, 3, size=(terms, n - 1))
    a = rng.normal(size=terms)
    b = rng.uniform(-3, 3, size=terms)
    phi = rng.uniform(0, 2 * np.pi, size=terms)

    def f(X):
        X = np.asarray(X, float)
        arg = 2 * np.pi * np.einsum("...a,ia->...i", X[..., :-1], k)
        return np.sum(a * np.sin(arg + b * X[..., -1:] + phi), axis=-1)

    return f


def derivative_relations(metric, factor, f=None, face: int = 0, resolution: int = 8, dt: float = 0.01,
                         npts: int = 8, seed: int = 0) -> dict:
    """Compare normal derivatives of ``f`` along the normal geodesics of ``g`` and ``g~ = c g``.

    Checks ``d~f = df``, ``d~^2 f = d^2 f`` and ``d~^3 f = d^3 f - (d^2 mu) df`` at the face,
    for gauge-conditioned ``c = exp(2 mu)``.

    Returns
    -------
    dict
        ``residuals`` (max abs per order 1..3), ``scale`` (max ``|d^j f|``) and ``relative``.
    """
    n = metric.n
    f = f or random_test_function(n, seed)
    base = face_lattice(n, resolution, face).reshape(-1, n)
    steps = npts - 1
    b = shoot_normal(metric, base, face, dt * steps, steps, jacobi=False)
    bt = shoot_normal(ScaledMetric(metric, factor), base, face, dt * steps, steps, jacobi=False)
    df = one_sided_jets(f(b.X), dt, 3, npts)
    dft = one_sided_jets(f(bt.X), dt, 3, npts)
    d2mu = one_sided_jets(factor.mu(b.X), dt, 2, npts)[..., 2]
    expected = df.copy()
    expected[..., 3] = df[..., 3] - d2mu * df[..., 1]
    res = [float(np.abs(dft[..., j] - expected[..., j]).max()) for j in (1, 2, 3)]
    scale = [float(np.abs(df[..., j]).max()) for j in (1, 2, 3)]
    return {"residuals": res, "scale": scale, "relative": [r / s for r, s in zip(res, scale)],
            "d2mu_max": float(np.abs(d2mu).max())}


def distance_relations(metric, factor, face: int = 0, resolution: int = 6, dt: float = 0.01, npts: int = 8,
                       steps: int = 40) -> dict:
    """Normal derivatives of the ``g~``-distance ``r~`` to the face along ``g``-normal geodesics.

    ``r~`` is found by Newton inversion of the ``g~`` normal shooting map.
    Expected: ``d r~ = 1``, ``d^2 r~ = 0`` and ``d^3 r~ = d^2 mu`` at the face.
    """
    n = metric.n
    lat = face_lattice(n, resolution, face)
    base = lat.reshape(-1, n)
    b = shoot_normal(metric, base, face, dt * (npts - 1), npts - 1, jacobi=False)
    gt = ScaledMetric(metric, factor)
    tilde = BNChart(gt, face, lat, 0.0, steps, None)
    pts = b.X[:, 1:].reshape(-1, n)
    coords = tilde.coordinates_of(pts, tol=1e-13, steps=steps)
    rt = np.concatenate([np.zeros((len(base), 1)), coords[:, -1].reshape(len(base), npts - 1)], axis=1)
    jets = one_sided_jets(rt, dt, 3, npts)
    d2mu = one_sided_jets(factor.mu(b.X), dt, 2, npts)[..., 2]
    res = [
        float(np.abs(jets[..., 1] - 1).max()),
        float(np.abs(jets[..., 2]).max()),
        float(np.abs(jets[..., 3] - d2mu).max()),
    ]
    return {"residuals": res, "d2mu_max": float(np.abs(d2mu).max())}


__all__ = [
    "NormalizationResult",
    "conformal_normalization",
    "build_gauge_factor",
    "normalize_both_faces",
    "derivative_relations",
    "distance_relations",
    "random_test_function",
]
