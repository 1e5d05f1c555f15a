"""Named experiments with pass/fail checks, shared by the CLI and the acceptance suite.

Each experiment takes a :class:`Scenario` and keyword options and returns
an :class:`ExperimentResult`.  The result holds the checks, which record
measured value, tolerance and verdict.  It also holds CSV tables and
two-column plot series.  Experiments never print; wall time is recorded
separately from the checks so that summaries stay reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dnmap import (
    dirichlet_to_neumann,
    flat_block_errors,
    flat_dn_block,
    fourier_basis,
    gauge_invariance_check,
    observed_order,
)
from .errors import ConfigError
from .geometry import Grid, ScaledMetric, constructed_pair, factor_preset, first_order_perturbation, metric_preset
from .geometry.patch import Patch
from .operators import BoundaryData, assemble, conformal_covariance_residual

# ---------------------------------------------------------------- records


@dataclass
class Check:
    """One measured quantity compared with a tolerance.

    ``relation`` is ``"<="`` (value must not exceed the tolerance), ``">="``
    or ``"=="`` (boolean value must equal ``True``).
    """

    name: str
    value: float
    tolerance: float
    relation: str = "<="
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.relation == "<=":
            return bool(np.isfinite(self.value) and self.value <= self.tolerance)
        if self.relation == ">=":
            return bool(np.isfinite(self.value) and self.value >= self.tolerance)
        return bool(self.value) == bool(self.tolerance)

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "relation": self.relation, "passed": self.passed, "details": self.details}


@dataclass
class ExperimentResult:
    """Checks plus data products of one experiment."""

    name: str
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, *args, **kw) -> Check:
        c = Check(*args, **kw)
        self.checks.append(c)
        return c

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "checks": [c.as_dict() for c in self.checks],
                "report": self.report}


@dataclass
class Scenario:
    """Resolved experiment configuration.

    Attributes
    ----------
    n, N_t, N_n : int
        Grid of the scenario; experiments may refine it.
    metric, factor, diffeo : dict
        ``{"preset": name, "params": {...}}``.
    patch : dict
        ``{"face": 0, "lower": [...], "upper": [...]}``.
    seed : int
    experiments : list of dict
        ``{"name": ..., "options": {...}}``.
    """

    n: int = 3
    N_t: int = 32
    N_n: int = 32
    metric: dict = field(default_factory=lambda: {"preset": "flat", "params": {}})
    factor: dict = field(default_factory=lambda: {"preset": "gauge_bump", "params": {}})
    diffeo: dict = field(default_factory=lambda: {"preset": "boundary_shear", "params": {}})
    patch: dict = field(default_factory=lambda: {"face": 0, "lower": [0.25, 0.25], "upper": [0.75, 0.75]})
    seed: int = 0
    experiments: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_config(cls, cfg: dict) -> "Scenario":
        grid = cfg.get("grid", {})
        kw = {k: grid[k] for k in ("n", "N_t", "N_n") if k in grid}
        for key in ("metric", "factor", "diffeo", "patch"):
            if key in cfg:
                kw[key] = dict(cfg[key])
        if "seed" in cfg:
            kw["seed"] = int(cfg["seed"])
        kw["experiments"] = list(cfg.get("experiments", []))
        scn = cls(**kw)
        if "patch" not in cfg:
            d = scn.n - 1
            scn.patch = {"face": 0, "lower": [0.25] * d, "upper": [0.75] * d}
        return scn

    def grid(self, N: int | None = None) -> Grid:
        """Scenario grid, or the cube grid ``N x ... x N`` when ``N`` is given."""
        return Grid(self.n, self.N_t, self.N_n) if N is None else Grid(self.n, int(N), int(N))

    @property
    def N(self) -> int:
        return self.N_t

    def metric_field(self, preset: str | None = None):
        spec = self.metric if preset is None else {"preset": preset, "params": {}}
        return metric_preset(spec["preset"], self.n, **spec.get("params", {}))

    def factor_field(self, preset: str | None = None, **params):
        spec = self.factor if preset is None else {"preset": preset, "params": params}
        return factor_preset(spec["preset"], self.n, **spec.get("params", {}))

    def pair(self):
        key = ("pair",)
        if key not in self._cache:
            self._cache[key] = constructed_pair(
                self.n, base=self.metric["preset"], factor=self.factor["preset"], diffeo=self.diffeo["preset"],
                base_params=self.metric.get("params"), factor_params=self.factor.get("params"),
                diffeo_params=self.diffeo.get("params"))
        return self._cache[key]

    def patch_object(self) -> Patch:
        p = self.patch
        return Patch(int(p.get("face", 0)), tuple(p["lower"]), tuple(p["upper"]))

    def operator(self, metric, grid: Grid, tag: str):
        """Assembled conformal Laplacian, cached by ``(tag, grid)``."""
        key = ("op", tag, grid)
        if key not in self._cache:
            self._cache[key] = assemble(metric, grid)
        return self._cache[key]


def _wrap(d: np.ndarray) -> np.ndarray:
    d = np.array(d, float)
    d[..., :-1] -= np.round(d[..., :-1])
    return d


def _sizes(scn: Scenario, sizes):
    return [int(s) for s in (sizes if sizes is not None else (scn.N, 2 * scn.N))]


# ---------------------------------------------------------------- forward


def forward_solve(scn: Scenario, mode: int = 1, residual_tol: float = 1e-8) -> ExperimentResult:
    """Dirichlet solve with data ``cos(2 pi k x^1)`` on face 0 and zero on face 1."""
    out = ExperimentResult("forward.solve")
    grid = scn.grid()
    op = scn.operator(scn.metric_field(), grid, "metric")
    X0 = grid.face_coords(0)
    data = BoundaryData(np.cos(2 * np.pi * mode * X0[..., 0]), np.zeros(grid.tangential_shape))
    U = op.extend(data.vector()[:, None])[:, 0]
    residual = float(op.solver.last_residual)
    out.add("solve_residual", residual, residual_tol)
    centre = tuple(s // 2 for s in grid.tangential_shape)
    profile = U.reshape(grid.shape)[centre]
    out.series["profile.dat"] = (np.linspace(0.0, 1.0, grid.N_n + 1), profile)
    dn = op.normal_derivative(U[:, None])[:, 0]
    m = int(np.prod(grid.tangential_shape))
    out.tables["face0_normal_derivative.csv"] = (
        [f"x{a + 1}" for a in range(grid.n - 1)] + ["d_nu_u"],
        np.column_stack([X0[..., :-1].reshape(m, -1), dn[:m]]))
    out.report = {"grid": [grid.n, grid.N_t, grid.N_n], "metric": scn.metric["preset"]}
    return out


def covariance(scn: Scenario, sizes=None, factor: str = "gauge_smooth", min_order: float = 1.8,
               max_absolute: float = 1e-2, metric: str | None = None) -> ExperimentResult:
    """Discrete conformal scaling law ``L_{cg} u = c^{-(n+2)/4} L_g (c^{(n-2)/4} u)`` under refinement."""
    out = ExperimentResult("forward.covariance")
    g = scn.metric_field(metric)
    c = scn.factor_field(factor)

    def u(X):
        return np.sin(2 * np.pi * X[..., 0]) * np.cos(2 * np.pi * X[..., 1]) * (1 + X[..., -1] ** 2) + X[..., -1]

    sizes = _sizes(scn, sizes)
    rel, ab = [], []
    for N in sizes:
        r = conformal_covariance_residual(g, c, u, scn.grid(N))
        rel.append(r["relative"])
        ab.append(r["absolute"])
    order = observed_order(rel, sizes)
    out.add("relative_order", order, min_order, ">=", {"sizes": sizes, "relative": rel})
    out.add("absolute_finest", ab[-1], max_absolute, "<=", {"N": sizes[-1]})
    out.tables["covariance.csv"] = (["N", "relative", "absolute"], np.column_stack([sizes, rel, ab]))
    out.series["covariance.dat"] = (1.0 / np.asarray(sizes, float), np.asarray(rel))
    return out


# ---------------------------------------------------------------- dnmap


def flat_oracle(scn: Scenario, N: int | None = None, K: int = 4, tolerance: float = 0.01) -> ExperimentResult:
    """DN Fourier blocks of the flat slab against separation of variables for ``|k| <= K``."""
    out = ExperimentResult("dnmap.flat_oracle")
    grid = scn.grid(N)
    op = scn.operator(metric_preset("flat", scn.n), grid, "flat")
    dn = dirichlet_to_neumann(op, fourier_basis(grid, K))
    r = flat_block_errors(dn, max_norm=float(K))
    out.add("max_block_error", r["max_error"], tolerance, "<=", {"N": grid.N_t, "K": K})
    out.add("leakage", r["leakage"], 1e-8, "<=")
    out.add("symmetry_defect", dn.symmetry_defect(), 1e-10, "<=")
    rows = []
    for lab, err in r["errors"].items():
        i = dn.basis.index(0, lab.k, lab.kind)
        j = dn.basis.index(1, lab.k, lab.kind)
        B = dn.matrix[np.ix_([i, j], [i, j])]
        ev = np.sort(np.linalg.eigvalsh(0.5 * (B + B.T)))
        ex = np.sort(np.linalg.eigvalsh(flat_dn_block(lab.k)))
        rows.append([float(np.linalg.norm(lab.k)), ev[0], ev[1], ex[0], ex[1], err])
    rows.sort()
    out.tables["symbol_fit.csv"] = (["abs_k", "eig_low", "eig_high", "exact_low", "exact_high", "block_error"],
                                    np.array(rows))
    out.tables["dn_matrix.csv"] = ([f"b{j}" for j in range(dn.matrix.shape[1])], dn.matrix)
    out.series["symbol.dat"] = (np.array(rows)[:, 0], np.array(rows)[:, 1])
    return out


def gauge_invariance(scn: Scenario, sizes=None, K: int = 2, tolerance: float = 5e-3, min_order: float = 1.8,
                     negative: str = "gauge_violating", negative_ratio: float = 100.0,
                     metric: str | None = None) -> ExperimentResult:
    """``N_{cg} = N_g`` for a gauge-conditioned factor, with a gauge-violating negative control.

    The default refinement pair is ``(N/2, N)``.  The negative control passes when its distance exceeds
    the gauge-conditioned distance at the finest grid by ``negative_ratio``.
    """
    out = ExperimentResult("dnmap.gauge_invariance")
    g = scn.metric_field(metric)
    c = scn.factor_field()
    bad = scn.factor_field(negative)
    sizes = [int(v) for v in (sizes if sizes is not None else (scn.N // 2, scn.N))]
    dist, neg = [], []
    for N in sizes:
        grid = scn.grid(N)
        r = gauge_invariance_check(g, c, grid, K)
        dist.append(r["distance"])
    neg.append(gauge_invariance_check(g, bad, scn.grid(sizes[-1]), K, reference=r["dn_g"])["distance"])
    order = observed_order(dist, sizes)
    out.add("distance_finest", dist[-1], tolerance, "<=", {"sizes": sizes, "distances": dist})
    out.add("refinement_order", order, min_order, ">=")
    out.add("negative_control_ratio", neg[-1] / dist[-1], negative_ratio, ">=",
            {"factor": negative, "distance": neg[-1]})
    out.tables["gauge_invariance.csv"] = (["N", "distance"], np.column_stack([sizes, dist]))
    out.report = {"gauge_flags": str(c.gauge_flags(scn.grid(sizes[-1]))),
                  "negative_flags": str(bad.gauge_flags(scn.grid(sizes[-1])))}
    return out


# ---------------------------------------------------------------- gauge


def gauge_relations(scn: Scenario, factor: str = "gauge_smooth", metric: str | None = "tangential_wave",
                    tolerance: float = 1e-3) -> ExperimentResult:
    """Normal-derivative and distance relations between ``g`` and a gauge-conditioned ``c g`` at orders 1-3."""
    from .gauge import derivative_relations, distance_relations

    out = ExperimentResult("gauge.relations")
    g = scn.metric_field(metric)
    c = scn.factor_field(factor)
    d = derivative_relations(g, c, seed=scn.seed)
    r = distance_relations(g, c)
    for j, (res, rel) in enumerate(zip(d["residuals"], d["relative"]), start=1):
        out.add(f"derivative_order_{j}", rel, tolerance, "<=", {"absolute": res})
    scale = max(1.0, d["d2mu_max"])
    for j, res in enumerate(r["residuals"], start=1):
        out.add(f"distance_order_{j}", res / scale, tolerance, "<=", {"absolute": res})
    out.report = {"derivative": d, "distance": r}
    return out


def gauge_normalization(scn: Scenario, presets=("tangential_wave", "conformal_flat"), m_max: int = 2,
                        reduction: float = 100.0) -> ExperimentResult:
    """Mean-curvature jets before and after the conformal normalization on curved presets."""
    from .gauge import conformal_normalization

    out = ExperimentResult("gauge.normalization")
    rows = []
    for name in presets:
        g = metric_preset(name, scn.n)
        for face in (0, 1):
            r = conformal_normalization(g, m_max, face=face)
            rep = r.report()
            for j, (pre, post, red) in enumerate(zip(rep["pre"], rep["post"], rep["reduction"]), start=1):
                out.add(f"{name}_face{face}_order{j}_reduction", red, reduction, ">=", {"pre": pre, "post": post})
                rows.append([len(rows), face, j, pre, post, red])
            out.report[f"{name}_face{face}"] = rep
    out.tables["normalization.csv"] = (["row", "face", "order", "pre", "post", "reduction"], np.array(rows))
    return out


def gauge_jets(scn: Scenario, N: int | None = None, depth_cells: float = 1.344, steps: int = 7,
               growth: float = 10.0) -> ExperimentResult:
    """Normalized metric jets of a constructed pair agree at orders 0, 1, 2 (tolerances ``h^2 growth^j``)."""
    from .gauge import boundary_normal_coordinates, compare_jets, conformal_normalization, metric_jet

    out = ExperimentResult("gauge.jets")
    pair = scn.pair()
    grid = scn.grid(N)
    h = grid.h
    depth = depth_cells * h
    tables = []
    for g in (pair.g1, pair.g2):
        r = conformal_normalization(g, 2, face=0)
        ch = boundary_normal_coordinates(ScaledMetric(g, r.factor), 0, depth=depth, steps=steps, grid=grid)
        tables.append(metric_jet(ch, 2, npts=steps))
    cmp = compare_jets(tables[0], tables[1], h=h, growth=growth)
    for j, (e, t) in enumerate(zip(cmp.errors, cmp.tolerances)):
        out.add(f"jet_order_{j}", e, t, "<=", {"N": grid.N_t})
    rows = []
    J0, J1 = tables[0].metric_jets, tables[1].metric_jets
    d = grid.n - 1
    base = grid.face_coords(0)[..., :-1].reshape(-1, d)
    for j in range(J0.shape[0]):
        A = J0[j].reshape(len(base), d, d)
        B = J1[j].reshape(len(base), d, d)
        for a in range(d):
            for b in range(a, d):
                rows.append(np.column_stack([base, np.full(len(base), a), np.full(len(base), b),
                                             np.full(len(base), j), A[:, a, b], B[:, a, b]]))
    out.tables["jets.csv"] = ([f"x{a + 1}" for a in range(d)] + ["alpha", "beta", "order", "g1", "g2"],
                              np.concatenate(rows))
    return out


# ---------------------------------------------------------------- zcoords


def _z_charts(scn: Scenario, grid: Grid, negative: bool = False):
    from .zcoords import build_z_coordinates

    key = ("zcharts", grid, negative)
    if key in scn._cache:
        return scn._cache[key]
    pair = scn.pair()
    patch = scn.patch_object()
    z2 = build_z_coordinates(scn.operator(pair.g2, grid, "g2"), patch)
    theta = z2.data[2]
    z1 = build_z_coordinates(scn.operator(pair.g1, grid, "g1"), patch, theta=theta)
    charts = [z1, z2]
    if negative:
        bad = first_order_perturbation(pair.g2)
        charts.append(build_z_coordinates(assemble(bad, grid), patch, theta=theta))
    scn._cache[key] = charts
    return charts


def z_decay(scn: Scenario, N: int | None = None, min_exponent: float = 2.5, negative_target: float = 1.0,
            negative_width: float = 0.5, t_max: float = 0.125, levels: int = 4, shrink: float = 0.125) -> ExperimentResult:
    """Decay exponent of ``|Z_1 - Z_2|`` towards the patch for the pair and an order-one mismatch."""
    from .zcoords import z_jet_agreement

    out = ExperimentResult("zcoords.decay")
    grid = scn.grid(N)
    z1, z2, z3 = _z_charts(scn, grid, negative=True)
    rep = z_jet_agreement(z1, z2, t_max=t_max, levels=levels, shrink=shrink)
    neg = z_jet_agreement(z3, z2, t_max=t_max, levels=levels, shrink=shrink)
    out.add("pair_exponent", rep.p, min_exponent, ">=", {"r2": rep.r2, "inconclusive": rep.inconclusive})
    out.add("negative_exponent_offset", abs(neg.p - negative_target), negative_width, "<=",
            {"p": neg.p, "r2": neg.r2})
    out.tables["decay_fit.csv"] = (["x_n", "pair", "negative"],
                                   np.column_stack([rep.t, rep.difference, neg.difference]))
    out.series["decay.dat"] = (np.asarray(rep.t), np.asarray(rep.difference))
    out.report = {"pair": rep.as_dict(), "negative": neg.as_dict(), "chart": z1.describe()}
    return out


def z_gluing(scn: Scenario, N: int | None = None, fraction: float = 0.95, bnc_depth: float = 0.25,
             bnc_steps: int = 25, second_patch=None) -> ExperimentResult:
    """Two transition formulas, the known diffeomorphism and injectivity on collar samples."""
    from .gauge import boundary_normal_coordinates
    from .zcoords import collar_samples, consistency_tolerance, injectivity_check, overlap_agreement, \
        transition_and_gluing

    out = ExperimentResult("zcoords.gluing")
    grid = scn.grid(N)
    pair = scn.pair()
    z1, z2 = _z_charts(scn, grid)[:2]
    face = z1.patch.face
    b1 = boundary_normal_coordinates(pair.g1, face, bnc_depth, bnc_steps, grid=grid)
    b2 = boundary_normal_coordinates(pair.g2, face, bnc_depth, bnc_steps, grid=grid)
    glue = transition_and_gluing(z1, z2, b1, b2)
    m = glue.match(pair.diffeo(glue.points), grid.h)
    out.add("formula_consistency", glue.consistency(), consistency_tolerance(grid), "<=")
    out.add("fraction_within_cell", m["fraction_within_cell"], fraction, ">=", m)
    out.add("boundary_identity", glue.boundary_identity_error(), 1e-12, "<=")
    sparse = collar_samples(z1, stride=2)
    Fs = transition_and_gluing(z1, z2, points=sparse).F_direct
    inj = injectivity_check(Fs, grid)
    out.add("injectivity_collisions", inj["collisions"], 0, "<=", {"samples": len(sparse)})
    if second_patch is not None:
        from .zcoords import build_z_coordinates

        p = Patch(face, tuple(second_patch[0]), tuple(second_patch[1]))
        w2 = build_z_coordinates(scn.operator(pair.g2, grid, "g2"), p)
        w1 = build_z_coordinates(scn.operator(pair.g1, grid, "g1"), p, theta=w2.data[2])
        other = transition_and_gluing(w1, w2)
        ov = overlap_agreement(glue, other)
        out.add("overlap_agreement", ov["max_difference"], consistency_tolerance(grid), "<=",
                {"shared": ov["shared"]})
    err = np.abs(_wrap(glue.F_direct - pair.diffeo(glue.points))).max(axis=1)
    out.tables["gluing.csv"] = ([f"x{a + 1}" for a in range(grid.n)] + [f"F{a + 1}" for a in range(grid.n)]
                                + ["error"], np.column_stack([glue.points, glue.F_direct, err]))
    out.report = {"match": m, "meta": glue.meta}
    return out


# ---------------------------------------------------------------- greens

LAW_POINTS = [[0.5, 0.5, 0.5], [0.25, 0.5, 0.25], [0.75, 0.25, 0.625], [0.375, 0.75, 0.75],
              [0.625, 0.625, 0.375], [0.125, 0.125, 0.5]]


def green_laws(scn: Scenario, sizes=None, tolerance: float = 2e-2, points=None) -> ExperimentResult:
    """Transformation laws of ``G``, ``P`` and ``H`` for the constructed pair, with refinement."""
    from .greens import green_transformation_check

    out = ExperimentResult("greens.laws")
    pair = scn.pair()
    sizes = [int(s) for s in (sizes or [scn.N])]
    pts = np.asarray(points if points is not None else LAW_POINTS, float)
    if pts.shape[1] != scn.n:
        raise ConfigError(f"law points must have {scn.n} coordinates")
    res = []
    for N in sizes:
        grid = scn.grid(N)
        r = green_transformation_check(scn.operator(pair.g1, grid, "g1"), scn.operator(pair.g2, grid, "g2"),
                                       pair.diffeo, pair.factor, pts)
        res.append(r)
    first, last = res[0], res[-1]
    for law in ("G", "P", "H"):
        out.add(f"{law}_residual", first[law], tolerance, "<=", {"N": sizes[0]})
        if len(sizes) > 1:
            out.add(f"{law}_halving", last[law] / first[law], 0.5, "<=",
                    {"N": sizes, "residuals": [r[law] for r in res]})
    out.add("H_bound", all(r["H_bound_holds"] for r in res), True, "==")
    out.add("G_symmetry", max(r["symmetry_G1"] for r in res), 1e-8, "<=")
    out.tables["laws.csv"] = (["N", "G", "P", "H"], np.array([[N, r["G"], r["P"], r["H"]] for N, r in zip(sizes, res)]))
    return out


def green_schwartz(scn: Scenario, N: int | None = None, tolerance: float = 0.05, min_separation: float = 4.0,
                   metric: str | None = None) -> ExperimentResult:
    """Off-diagonal nodal DN entries against the doubled normal derivative of ``G``."""
    from .greens import schwartz_kernel_check

    out = ExperimentResult("greens.schwartz")
    grid = scn.grid(N)
    g = scn.metric_field(metric)
    op = scn.operator(g, grid, metric or "metric")
    m = int(np.prod(grid.tangential_shape))
    half = grid.N_t // 2
    centre = int(np.ravel_multi_index((half,) * (grid.n - 1), grid.tangential_shape))
    quarter = int(np.ravel_multi_index((half // 2,) * (grid.n - 1), grid.tangential_shape))
    nodes = [centre, m + quarter]
    r = schwartz_kernel_check(op, nodes, min_separation=min_separation)
    out.add("max_relative_error", r["max_relative_error"], tolerance, "<=",
            {"N": grid.N_t, "pairs": r["pairs"], "per_node": r["per_node"]})
    out.tables["schwartz.csv"] = (["boundary_node", "dn_centre", "kernel_centre", "dn_face1", "kernel_face1"],
                                  np.column_stack([np.arange(2 * m), r["dn"][:, 0], r["kernel"][:, 0],
                                                   r["dn"][:, 1], r["kernel"][:, 1]]))
    return out


def green_diagonal(scn: Scenario, N: int | None = None, presets=None, tolerance: float = 0.05,
                   x=None) -> ExperimentResult:
    """Extrapolated ``H d^(n-2) P^2`` at an interior point against ``1 / ((n-2) omega_n)``."""
    from .greens import diagonal_asymptotics

    out = ExperimentResult("greens.diagonal")
    grid = scn.grid(N)
    presets = list(presets) if presets is not None else [scn.metric["preset"]]
    x = np.full(scn.n, 0.5) if x is None else np.asarray(x, float)
    for name in presets:
        op = scn.operator(metric_preset(name, scn.n), grid, name)
        r = diagonal_asymptotics(op, x)
        out.add(f"{name}_relative_error", r["relative_error"], tolerance, "<=",
                {"limit": r["limit"], "target": r["target"], "N": grid.N_t})
        out.series[f"diagonal_{name}.dat"] = (np.asarray(r["radii"]), np.asarray(r["mean"]))
    return out


def _embedding_boxes(grid: Grid, n: int):
    from .greens import box_points, node_box

    h = grid.h_n
    pbox = node_box(grid, (0.25,) * (n - 1) + (2 * h,), (0.75,) * (n - 1) + (2 * h,))
    sbox = node_box(grid, (0.375,) * (n - 1) + (5 * h,), (0.625,) * (n - 1) + (9 * h,))
    return box_points(grid, pbox, stride=2), sbox


def green_embedding(scn: Scenario, N: int | None = None, sweep=("flat", "tangential_wave", "conformal_flat"),
                    margin_factor: float = 10.0, fraction: float = 0.95, conformal_tol: float = 5e-2,
                    sweep_stride: int = 2) -> ExperimentResult:
    """Probe-vector embeddings: injectivity sweep, recovery of ``J`` and the conformal factor."""
    from .greens import box_points, embedding_map, reconstruct_J

    out = ExperimentResult("greens.embedding")
    grid = scn.grid(N)
    n = scn.n
    probes, sbox = _embedding_boxes(grid, n)
    sshape = tuple(b - a for a, b in sbox)
    samples = box_points(grid, sbox)
    pair = scn.pair()
    op1 = scn.operator(pair.g1, grid, "g1")
    tol = float(op1.solver.rtol)
    for name in sweep:
        op = scn.operator(metric_preset(name, n), grid, name)
        tab = embedding_map(op, probes, samples=box_points(grid, sbox, stride=sweep_stride))
        sep = tab.separation(grid)
        out.add(f"{name}_injectivity_margin", sep["relative_margin"], margin_factor * tol, ">=",
                {"pairs": sep["pairs"], "min_offdiagonal": sep["min_offdiagonal"]})
    T1 = embedding_map(op1, probes, samples=samples)
    Fx = pair.diffeo(samples)
    hs = np.array([grid.h_t] * (n - 1) + [grid.h_n])
    lo, hi = Fx.min(0), Fx.max(0)
    box = [(int(np.floor(a / h)) - 2, int(np.ceil(b / h)) + 3) for a, b, h in zip(lo, hi, hs)]
    box[-1] = (max(box[-1][0], 5), box[-1][1])
    T2 = embedding_map(scn.operator(pair.g2, grid, "g2"), pair.diffeo(probes), box=tuple(box))
    rec = reconstruct_J(T1, T2, grid, pair.g1, pair.g2, reference=pair.diffeo, sample_shape=sshape)
    out.add("J_fraction_within_cell", rec.match["fraction_within_cell"], fraction, ">=", rec.match)
    out.add("conformal_residual", rec.conformal_residual, conformal_tol, "<=")
    out.add("c_hat_within_bounds", rec.within_bounds(), True, "==",
            {"bounds": list(rec.bounds), "c_hat_range": [float(rec.c_hat.min()), float(rec.c_hat.max())]})
    out.add("ambiguous_points", len(rec.ambiguous), 0, "<=")
    err = np.abs(_wrap(rec.J - Fx) / hs).max(axis=1)
    out.tables["reconstruction.csv"] = (
        [f"x{a + 1}" for a in range(n)] + [f"J{a + 1}" for a in range(n)] + ["cells", "c_hat", "c_true"],
        np.column_stack([samples, rec.J, err, rec.c_hat, pair.factor(samples)]))
    out.report = {"meta": rec.meta, "bounds": list(rec.bounds)}
    return out


# ---------------------------------------------------------------- runge


def runge_curve(scn: Scenario, N: int | None = None, sizes=(8, 16, 32, 64), final_tol: float = 5e-2,
                theta_min: float = 0.1, slack: float = 1e-12) -> ExperimentResult:
    """Nested least-squares residuals, ``theta`` construction and the unique-continuation sanity check."""
    from .runge import control_basis, make_theta, residual_curve, unique_continuation_check

    out = ExperimentResult("runge.residuals")
    grid = scn.grid(N)
    op = scn.operator(scn.metric_field(), grid, "metric")
    patch = Patch.square(scn.n, face=int(scn.patch.get("face", 0)))
    curve, results, basis = residual_curve(op, patch, 1.0, tuple(sizes))
    steps = np.diff(curve)
    out.add("max_residual_increase", float(steps.max()), slack, "<=", {"curve": curve, "sizes": list(sizes)})
    out.add("final_residual", curve[-1], final_tol, "<=")
    theta, info = make_theta(op, patch, theta_min=theta_min, sizes=tuple(sizes))
    out.add("theta_min_normal_derivative", info["min_normal_derivative"], theta_min, ">=", {"m": info["m"]})
    out.add("theta_on_patch", info["max_abs_on_patch"], 0.0, "<=")
    uc = unique_continuation_check(op, patch, control_basis(grid, patch, max(sizes)))
    out.add("unique_continuation_field", uc["field_norm"], 1e-10, "<=", uc)
    out.tables["residuals.csv"] = (["m", "residual"], np.column_stack([sizes, curve]))
    out.tables["theta.csv"] = (["boundary_node", "theta"], np.column_stack([np.arange(grid.n_boundary), theta.vector()]))
    out.series["residuals.dat"] = (np.asarray(sizes, float), np.asarray(curve))
    return out


# ---------------------------------------------------------------- registry

EXPERIMENTS = {
    "forward.solve": forward_solve,
    "forward.covariance": covariance,
    "dnmap.flat_oracle": flat_oracle,
    "dnmap.gauge_invariance": gauge_invariance,
    "gauge.relations": gauge_relations,
    "gauge.normalization": gauge_normalization,
    "gauge.jets": gauge_jets,
    "zcoords.decay": z_decay,
    "zcoords.gluing": z_gluing,
    "greens.laws": green_laws,
    "greens.schwartz": green_schwartz,
    "greens.diagonal": green_diagonal,
    "greens.embedding": green_embedding,
    "runge.residuals": runge_curve,
}

GROUPS = {
    "forward": ["forward.solve", "forward.covariance"],
    "dnmap": ["dnmap.flat_oracle", "dnmap.gauge_invariance"],
    "gauge": ["gauge.relations", "gauge.normalization", "gauge.jets"],
    "zcoords": ["zcoords.decay", "zcoords.gluing"],
    "greens": ["greens.laws", "greens.schwartz", "greens.diagonal", "greens.embedding"],
    "runge": ["runge.residuals"],
}


def run_experiment(scn: Scenario, name: str, options: dict | None = None) -> ExperimentResult:
    """Run one named experiment and record its wall time."""
    try:
        fn = EXPERIMENTS[name]
    except KeyError as exc:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}") from exc
    t0 = time.perf_counter()
    res = fn(scn, **(options or {}))
    res.seconds = time.perf_counter() - t0
    return res


__all__ = ["Check", "ExperimentResult", "Scenario", "EXPERIMENTS", "GROUPS", "run_experiment"] + [
    f.__name__ for f in EXPERIMENTS.values()]
